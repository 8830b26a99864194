use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use faqir_cli::RunManifest;
use faqir_core::encoder::read_head;

fn faqir(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_faqir"))
        .arg("--out-dir")
        .arg(out)
        .args(args)
        .output()
        .unwrap()
}

fn manifest_of(o: &Output) -> PathBuf {
    let err = String::from_utf8_lossy(&o.stderr);
    let line = err
        .lines()
        .find_map(|l| l.strip_prefix("manifest: "))
        .unwrap_or_else(|| panic!("no manifest line in {err}"));
    PathBuf::from(line)
}

fn last_json(o: &Output) -> serde_json::Value {
    let out = String::from_utf8_lossy(&o.stdout);
    serde_json::from_str(out.lines().last().unwrap()).unwrap()
}

fn ok(o: &Output) {
    assert!(
        o.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        o.status.code(),
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    );
}

const TRAIN: &str = "sentence,label\n\
how do i reset my password,password\n\
forgot my password,password\n\
password reset link not working,password\n\
where is my order,order\n\
track my parcel,order\n\
my package has not arrived,order\n\
cancel my subscription,cancel\n\
stop my plan,cancel\n\
i want to cancel,cancel\n";

const TEST: &str = "sentence,label\n\
reset password please,password\n\
where is my parcel,order\n\
cancel the plan,cancel\n\
what is the weather,NO_NODES_DETECTED\n";

fn dataset(dir: &Path) -> (PathBuf, PathBuf) {
    let d = dir.join("data").join("shop");
    std::fs::create_dir_all(&d).unwrap();
    std::fs::write(d.join("train.csv"), TRAIN).unwrap();
    std::fs::write(d.join("test.csv"), TEST).unwrap();
    (d.join("train.csv"), d.join("test.csv"))
}

#[test]
fn zero_iterations_keep_the_init_head() {
    let tmp = tempfile::tempdir().unwrap();
    let o = faqir(tmp.path(), &["train", "--synthetic", "--base-dim", "32", "--iterations", "0"]);
    ok(&o);
    let dir = manifest_of(&o).parent().unwrap().to_path_buf();
    let init = read_head(&dir.join("init.head")).unwrap();
    let trained = read_head(&dir.join("head.bin")).unwrap();
    assert_eq!(init.weights(), trained.weights());
    assert_eq!(init.bias(), trained.bias());
    assert_eq!((init.d_in(), init.d_out()), (trained.d_in(), trained.d_out()));
}

#[test]
fn eval_replay_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    dataset(tmp.path());
    let data_dir = tmp.path().join("data");
    let runs = tmp.path().join("runs");
    let o = faqir(
        &runs,
        &["eval", "--dataset", "shop", "--data-dir", data_dir.to_str().unwrap(), "--base-dim", "64", "--sequential"],
    );
    ok(&o);
    let first = manifest_of(&o);
    let m = RunManifest::load(&first).unwrap();
    assert_eq!(m.subcommand, "eval");
    assert_eq!(m.inputs.len(), 2);
    assert!(m.artifacts["eval_report.json"].deterministic);

    let r = faqir(&runs, &["replay", first.to_str().unwrap()]);
    ok(&r);
    let second = manifest_of(&r);
    assert_ne!(first, second);
    let a = std::fs::read(first.parent().unwrap().join("eval_report.json")).unwrap();
    let b = std::fs::read(second.parent().unwrap().join("eval_report.json")).unwrap();
    assert_eq!(a, b);
    let out = last_json(&r);
    assert_eq!(out["mismatched"].as_array().unwrap().len(), 0);
    assert_eq!(out["compared"].as_array().unwrap().len(), 2);

    // Changing an input makes the manifest unreplayable.
    std::fs::write(data_dir.join("shop").join("test.csv"), "sentence,label\nx,order\n").unwrap();
    let r = faqir(&runs, &["replay", first.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(1));
}

#[test]
fn train_replay_reproduces_the_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let (train, _) = dataset(tmp.path());
    let o = faqir(
        tmp.path(),
        &["train", "--train", train.to_str().unwrap(), "--base-dim", "32", "--iterations", "50", "--log-interval", "10"],
    );
    ok(&o);
    let first = manifest_of(&o);
    let r = faqir(tmp.path(), &["replay", first.to_str().unwrap()]);
    ok(&r);
    let out = last_json(&r);
    let compared: Vec<&str> = out["compared"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert_eq!(compared, vec!["head.bin", "init.head"]);
}

#[test]
fn sequential_and_parallel_reports_match() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |seq: &str| {
        let o = faqir(tmp.path(), &["eval", "--synthetic", "--base-dim", "64", "--sequential", seq]);
        ok(&o);
        std::fs::read(manifest_of(&o).parent().unwrap().join("eval_report.json")).unwrap()
    };
    assert_eq!(run("true"), run("false"));
}

#[test]
fn config_file_layers_under_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("eval.toml");
    std::fs::write(&cfg, "synthetic = true\nbase_dim = 48\nk = 2\nmethod = \"tfidf\"\n").unwrap();
    let o = faqir(tmp.path(), &["eval", "--config", cfg.to_str().unwrap(), "--k", "1"]);
    ok(&o);
    let m = RunManifest::load(&manifest_of(&o)).unwrap();
    assert_eq!(m.config["k"], 1);
    assert_eq!(m.config["base_dim"], 48);
    assert_eq!(m.config["method"], "tfidf");

    std::fs::write(&cfg, "synthetic = true\nbase_dimm = 48\n").unwrap();
    let o = faqir(tmp.path(), &["eval", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("base_dimm"));

    std::fs::write(&cfg, "learning_rate = -1.0\nsynthetic = true\n").unwrap();
    let o = faqir(tmp.path(), &["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("learning_rate"));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(faqir(tmp.path(), &["eval", "--synthetic", "--bogus"]).status.code(), Some(1));
    assert_eq!(faqir(tmp.path(), &["eval"]).status.code(), Some(1));
    assert_eq!(faqir(tmp.path(), &["bench", "--tenants", "a"]).status.code(), Some(1));
    let missing = faqir(tmp.path(), &["ingest", "--train", "/definitely/not/here.csv"]);
    assert_eq!(missing.status.code(), Some(2));
    let m = RunManifest::load(&manifest_of(&missing)).unwrap();
    assert!(m.status.starts_with("failed"));
    assert_eq!(faqir(tmp.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn pairs_count_matches_n_choose_2() {
    let tmp = tempfile::tempdir().unwrap();
    let (train, _) = dataset(tmp.path());
    let o = faqir(tmp.path(), &["pairs", "--train", train.to_str().unwrap(), "--mode", "all"]);
    ok(&o);
    let s: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!((s["written"].as_u64(), s["positives"].as_u64()), (Some(36), Some(9)));
    let tsv = std::fs::read_to_string(manifest_of(&o).parent().unwrap().join("pairs.tsv")).unwrap();
    assert_eq!(tsv.lines().count(), 36);
}

struct Child(std::process::Child);

impl Drop for Child {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

#[test]
fn serve_then_bench() {
    let tmp = tempfile::tempdir().unwrap();
    let (train, _) = dataset(tmp.path());
    let shop = tmp.path().join("shop.csv");
    std::fs::copy(&train, &shop).unwrap();
    let mut child = Child(
        Command::new(env!("CARGO_BIN_EXE_faqir"))
            .arg("--out-dir")
            .arg(tmp.path().join("runs"))
            .args(["serve", "--listen", "127.0.0.1:0", "--preload", shop.to_str().unwrap()])
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .unwrap(),
    );
    let mut line = String::new();
    BufReader::new(child.0.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let url = line.trim().strip_prefix("listening on ").expect(&line).to_string();

    let o = faqir(
        &tmp.path().join("runs"),
        &[
            "bench", "--url", &url, "--tenants", "shop", "--queries", "where is my parcel", "--queries",
            "reset my password", "--concurrency", "1,2", "--duration-secs", "1.0", "--warmup-secs", "0.2",
        ],
    );
    ok(&o);
    let table = String::from_utf8_lossy(&o.stdout);
    assert!(table.starts_with("concurrency"), "{table}");
    let dir = manifest_of(&o).parent().unwrap().to_path_buf();
    let r: faqir_bench::LoadResult =
        serde_json::from_slice(&std::fs::read(dir.join("load_result.json")).unwrap()).unwrap();
    assert_eq!(r.levels.len(), 2);
    assert!(r.levels.iter().all(|l| l.errors == 0 && l.successes > 0));
}
