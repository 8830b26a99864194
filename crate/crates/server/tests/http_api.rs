use std::sync::Arc;

use faqir_core::encoder::HashFeaturizer;
use faqir_core::TrainConfig;
use faqir_server::{Registry, RegistryOptions};
use serde_json::{json, Value};

struct Server {
    url: String,
    _shutdown: tokio::sync::oneshot::Sender<()>,
}

fn start() -> Server {
    let registry = Arc::new(Registry::new(
        Arc::new(HashFeaturizer::new(32, 1)),
        RegistryOptions {
            train: TrainConfig {
                iterations: 20,
                log_interval: 10,
                ..TrainConfig::default()
            },
            ..RegistryOptions::default()
        },
    ));
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let (addr_tx, addr_rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            addr_tx.send(listener.local_addr().unwrap()).unwrap();
            faqir_server::serve(listener, registry, async {
                let _ = rx.await;
            })
            .await
            .unwrap();
        });
    });
    Server {
        url: format!("http://{}", addr_rx.recv().unwrap()),
        _shutdown: tx,
    }
}

fn agent() -> ureq::Agent {
    ureq::Agent::config_builder().http_status_as_error(false).build().into()
}

fn post(a: &ureq::Agent, url: &str, body: Value) -> (u16, Value) {
    let mut r = a.post(url).send_json(body).unwrap();
    (r.status().as_u16(), r.body_mut().read_json().unwrap())
}

fn get(a: &ureq::Agent, url: &str) -> (u16, Value) {
    let mut r = a.get(url).call().unwrap();
    (r.status().as_u16(), r.body_mut().read_json().unwrap())
}

fn faqs() -> Value {
    json!([
        {"text": "how do i reset my password", "intent": "password", "answer": "Use the reset link."},
        {"text": "forgot my password", "intent": "password"},
        {"text": "where is my order", "intent": "order"},
        {"text": "track my parcel", "intent": "order"},
    ])
}

#[test]
fn tenant_lifecycle_over_http() {
    let s = start();
    let a = agent();
    let (status, body) = get(&a, &format!("{}/health", s.url));
    assert_eq!((status, body["tenants"].as_u64()), (200, Some(0)));
    assert_eq!(get(&a, &format!("{}/metrics/memory", s.url)).0, 404);

    let (status, info) = post(&a, &format!("{}/tenants", s.url), json!({"tenant_id": "acme", "faqs": faqs()}));
    assert_eq!(status, 201, "{info}");
    assert_eq!(info["questions"], 4);
    assert_eq!(post(&a, &format!("{}/tenants", s.url), json!({"tenant_id": "acme", "faqs": faqs()})).0, 409);

    let (status, q) = post(&a, &format!("{}/tenants/acme/query", s.url), json!({"text": "how do i reset my password"}));
    assert_eq!(status, 200);
    assert_eq!(q["intent"], "password");
    assert_eq!(q["answer"], "Use the reset link.");
    assert_eq!(q["oos"], false);
    assert!((q["score"].as_f64().unwrap() - 1.0).abs() < 1e-3);
    assert_eq!(q["intents"][0]["intent"], "password");

    let (status, err) = post(&a, &format!("{}/tenants/nobody/query", s.url), json!({"text": "x"}));
    assert_eq!(status, 404);
    assert!(err["error"].as_str().unwrap().contains("nobody"));
    assert_eq!(post(&a, &format!("{}/tenants/acme/query", s.url), json!({"txt": "x"})).0, 400);
    assert_eq!(post(&a, &format!("{}/tenants/acme/query", s.url), json!({"text": "x", "k": 0})).0, 400);

    let (status, report) = post(&a, &format!("{}/tenants/acme/train", s.url), json!({"iterations": 10, "seed": 3}));
    assert_eq!(status, 200, "{report}");
    assert_eq!(report["iterations"], 10);
    let (_, cfg) = get(&a, &format!("{}/tenants/acme/config", s.url));
    assert_eq!(cfg["head_version"], 1);
    assert_eq!(cfg["retrieval"]["k"], 3);
    assert_eq!(post(&a, &format!("{}/tenants/acme/train", s.url), json!({"learning_rate": -1.0})).0, 400);

    let mut r = a
        .put(&format!("{}/tenants/acme/faqs", s.url))
        .send_json(json!({"faqs": [{"text": "cancel my plan", "intent": "cancel"}]}))
        .unwrap();
    assert_eq!(r.status().as_u16(), 200);
    let info: Value = r.body_mut().read_json().unwrap();
    assert_eq!((info["questions"].as_u64(), info["head_version"].as_u64()), (Some(1), Some(1)));

    let (status, mem) = get(&a, &format!("{}/metrics/memory", s.url));
    assert_eq!(status, 200);
    assert_eq!(mem["tenants"], 1);
    assert_eq!(mem["head_bytes"].as_f64(), Some(((32 * 32 + 32) * 4) as f64));
}
