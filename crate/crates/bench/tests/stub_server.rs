use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::time::Duration;

use faqir_bench::{latency_percentiles, run_load, BenchError, LoadProfile};
use proptest::prelude::*;

const DELAY: Duration = Duration::from_millis(5);

fn handle(stream: TcpStream, status: &'static str) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut out = stream;
    loop {
        let mut len = 0usize;
        let mut line = String::new();
        if reader.read_line(&mut line).unwrap_or(0) == 0 {
            return;
        }
        loop {
            line.clear();
            if reader.read_line(&mut line).unwrap_or(0) == 0 {
                return;
            }
            let l = line.trim_end();
            if l.is_empty() {
                break;
            }
            if let Some((k, v)) = l.split_once(':') {
                if k.eq_ignore_ascii_case("content-length") {
                    len = v.trim().parse().unwrap();
                }
            }
        }
        let mut body = vec![0; len];
        if reader.read_exact(&mut body).is_err() {
            return;
        }
        std::thread::sleep(DELAY);
        let resp = format!("HTTP/1.1 {status}\r\ncontent-type: application/json\r\ncontent-length: 2\r\n\r\n{{}}");
        if out.write_all(resp.as_bytes()).is_err() {
            return;
        }
    }
}

/// Fixed-delay HTTP server; returns its base URL.
fn stub(status: &'static str) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    std::thread::spawn(move || {
        for s in listener.incoming().flatten() {
            std::thread::spawn(move || handle(s, status));
        }
    });
    url
}

fn profile(concurrency: Vec<usize>) -> LoadProfile {
    LoadProfile {
        concurrency,
        duration_secs: 1.5,
        warmup_secs: 0.3,
        tenants: vec![("a".into(), 1.0), ("b".into(), 3.0)],
        queries: vec!["where is my order".into(), "reset password".into()],
        ..LoadProfile::default()
    }
}

#[test]
fn fixed_delay_calibration() {
    let url = stub("200 OK");
    let r = run_load(&url, &profile(vec![1, 2])).unwrap();
    for l in &r.levels {
        assert_eq!(l.errors, 0);
        assert!(l.median_ms >= 5.0 && l.median_ms < 15.0, "median {}", l.median_ms);
        assert!(l.p90_ms >= l.median_ms && l.p99_ms >= l.p90_ms);
        let expected = l.concurrency as f64 * 1e3 / l.median_ms;
        assert!((l.rps - expected).abs() / expected < 0.35, "rps {} vs {expected}", l.rps);
        assert!((l.window_secs - 1.2).abs() < 1e-9);
    }
}

#[test]
fn server_errors_abort_the_sweep() {
    let url = stub("500 Internal Server Error");
    let e = run_load(&url, &profile(vec![1])).unwrap_err();
    assert!(matches!(e, BenchError::TooManyErrors { concurrency: 1, .. }), "{e}");
}

#[test]
fn refused_connections_count_as_errors() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let mut p = profile(vec![1]);
    p.duration_secs = 0.4;
    p.warmup_secs = 0.1;
    let e = run_load(&format!("http://127.0.0.1:{port}"), &p).unwrap_err();
    assert!(matches!(e, BenchError::TooManyErrors { .. }));
}

proptest! {
    #[test]
    fn percentiles_are_samples_and_monotone(mut xs in prop::collection::vec(0.0f64..1e3, 1..200)) {
        let p = latency_percentiles(&xs, &[0.5, 0.9, 0.99, 1.0]).unwrap();
        prop_assert!(p.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(p.iter().all(|v| xs.contains(v)));
        xs.sort_by(f64::total_cmp);
        prop_assert_eq!(p[3], *xs.last().unwrap());
        let below = xs.iter().filter(|&&x| x <= p[0]).count();
        prop_assert!(below * 2 >= xs.len());
    }
}
