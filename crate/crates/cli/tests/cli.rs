use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

fn edgecache(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_edgecache"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn sha(path: &Path) -> String {
    hex::encode(Sha256::digest(fs::read(path).unwrap()))
}

fn generate(dir: &Path, name: &str, extra: &[&str]) -> String {
    let out = dir.join(name);
    let out_s = out.to_str().unwrap().to_string();
    let mut args = vec!["generate", "-o", &out_s];
    args.extend_from_slice(extra);
    let o = edgecache(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out_s
}

fn csv_field(stdout: &[u8], column: &str) -> String {
    let text = String::from_utf8_lossy(stdout);
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    let i = header.iter().position(|h| *h == column).unwrap();
    row[i].to_string()
}

#[test]
fn generate_is_byte_identical_for_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["--grid", "6", "--consumers", "8", "--seed", "42"];
    let a = generate(dir.path(), "a.json", &args);
    let b = generate(dir.path(), "b.json", &args);
    assert_eq!(sha(Path::new(&a)), sha(Path::new(&b)));
    let c = generate(dir.path(), "c.json", &["--grid", "6", "--consumers", "8", "--seed", "43"]);
    assert_ne!(sha(Path::new(&a)), sha(Path::new(&c)));
}

#[test]
fn cache_majority_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.json");
    let o = edgecache(&["generate", "--grid", "5", "--cache-frac", "0.6", "-o", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn unknown_algorithm_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let inst = generate(dir.path(), "i.json", &[]);
    let o = edgecache(&["run", &inst, "--algo", "greedy"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn lp_bound_is_at_least_dca() {
    let dir = tempfile::tempdir().unwrap();
    for seed in ["1", "2", "3"] {
        let inst = generate(dir.path(), "i.json", &["--grid", "5", "--consumers", "4", "--seed", seed, "--preset", "hour-scale"]);
        let dca = edgecache(&["run", &inst, "--algo", "dca"]);
        let lp = edgecache(&["run", &inst, "--algo", "lp"]);
        assert!(dca.status.success() && lp.status.success());
        let d: f64 = csv_field(&dca.stdout, "lifetime_h").parse().unwrap();
        let l: f64 = csv_field(&lp.stdout, "lifetime_h").parse().unwrap();
        assert!(l >= d * (1.0 - 1e-6), "seed {seed}: lp {l} < dca {d}");
    }
}

#[test]
fn validate_and_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let inst = generate(dir.path(), "i.json", &["--grid", "6", "--consumers", "6", "--seed", "9", "--preset", "hour-scale"]);
    let trace = dir.path().join("trace.json");
    let paths = dir.path().join("paths.json");
    let lp = dir.path().join("model.lp");
    let o = edgecache(&[
        "run",
        &inst,
        "--algo",
        "pfr",
        "--validate",
        "--trace",
        trace.to_str().unwrap(),
        "--paths-out",
        paths.to_str().unwrap(),
        "--lp-dump",
        lp.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(csv_field(&o.stdout, "status"), "ok");
    let t: serde_json::Value = serde_json::from_str(&fs::read_to_string(&trace).unwrap()).unwrap();
    let events = t["events"].as_array().unwrap();
    assert_eq!(events.first().unwrap()["type"], "start");
    assert_eq!(events.last().unwrap()["type"], "node-death");
    assert!(fs::read_to_string(&lp).unwrap().contains("Maximize"));

    // reusing the path sets gives the same row
    let again = edgecache(&["run", &inst, "--algo", "pfr", "--paths-in", paths.to_str().unwrap()]);
    assert_eq!(again.stdout, o.stdout);
}

#[test]
fn rotation_far_shorter_than_lifetime_gives_up() {
    let dir = tempfile::tempdir().unwrap();
    // default link costs put lifetimes around 1e13 cycles
    let inst = generate(dir.path(), "i.json", &["--grid", "5", "--consumers", "3", "--seed", "2"]);
    let o = edgecache(&["run", &inst, "--algo", "pfr"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(csv_field(&o.stdout, "status"), "failed");
    let o = edgecache(&["run", &inst, "--algo", "pfr", "--alpha-tau-h", "1e9"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn tampered_path_sets_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let inst = generate(dir.path(), "i.json", &["--grid", "5", "--consumers", "3", "--seed", "4"]);
    let paths = dir.path().join("paths.json");
    let o = edgecache(&["run", &inst, "--algo", "dca", "--paths-out", paths.to_str().unwrap()]);
    assert!(o.status.success());
    let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&paths).unwrap()).unwrap();
    // stretch one consumer path past the delay bound by padding it with a detour
    let cp = &mut v["pieces"][0]["caches"][0]["consumer_paths"][0];
    let nodes = cp.as_array().unwrap().clone();
    let mut long = Vec::new();
    for _ in 0..4 {
        long.extend(nodes.iter().cloned());
    }
    *cp = serde_json::Value::Array(long);
    fs::write(&paths, v.to_string()).unwrap();
    let o = edgecache(&["run", &inst, "--algo", "dca", "--paths-in", paths.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sweep_resume_matches_a_single_pass() {
    let dir = tempfile::tempdir().unwrap();
    let full = dir.path().join("full.csv");
    let part = dir.path().join("part.csv");
    let base = ["sweep", "--sides", "5", "--reps", "2", "--algos", "dca,pfr"];
    let run = |consumers: &str, out: &Path, resume: bool| {
        let mut a: Vec<&str> = base.to_vec();
        a.extend(["--consumers", consumers, "--out", out.to_str().unwrap()]);
        if resume {
            a.push("--resume");
        }
        let o = edgecache(&a);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    };
    run("5-6", &full, false);
    run("5", &part, false);
    run("5-6", &part, true);
    assert_eq!(sha(&full), sha(&part));
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for (out, threads) in [(&a, "1"), (&b, "3")] {
        let o = Command::new(env!("CARGO_BIN_EXE_edgecache"))
            .args(["sweep", "--sides", "5", "--consumers", "5", "--reps", "3", "--out", out.to_str().unwrap()])
            .env("EDGECACHE_THREADS", threads)
            .output()
            .unwrap();
        assert!(o.status.success());
    }
    assert_eq!(sha(&a), sha(&b));
}
