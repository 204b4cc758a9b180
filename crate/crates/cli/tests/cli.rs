use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
[phase]
m = 40
s_grid = [4]
n_grid = [20, 30, 40]

[dynamic]
n1 = 40
n_t = 30

[dynamic.model]
m = 64
s = 6
t_len = 8

[mri]
rows = 16
cols = 16
t_len = 4
n1 = 60
n_t = 30
"#;

fn dyncs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dyncs")).args(args).output().expect("binary runs")
}

fn tiny_config(dir: &Path) -> String {
    let p = dir.join("tiny.toml");
    std::fs::write(&p, TINY).unwrap();
    p.to_str().unwrap().to_string()
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn phase_writes_csv_and_is_independent_of_jobs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for (out, jobs) in [(&a, "1"), (&b, "3")] {
        let o = dyncs(&["phase", "--config", &cfg, "--trials", "4", "--seed", "9", "--jobs", jobs, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let csv = read(&a, "phase.csv");
    assert!(csv.starts_with("n,s,algo,trials,successes,prob\n"));
    assert_eq!(csv.lines().count(), 1 + 3 * 5);
    assert_eq!(csv, read(&b, "phase.csv"));
    assert!(read(&a, "phase.svg").starts_with("<svg"));
}

#[test]
fn dynamic_run_with_trace_and_algorithm_subset() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    let out = tmp.path().join("d");
    let o = dyncs(&["dynamic", "--config", &cfg, "--trials", "2", "--algos", "mod-bpdn,bpdn", "--trace", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = read(&out, "dynamic_nrmse.csv");
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,algo,nrmse"));
    // Seven frames (t = 1..=7), two algorithms, sorted by t then name.
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 14);
    assert!(rows[0].starts_with("1,bpdn,") && rows[1].starts_with("1,mod-bpdn,"));
    assert!(read(&out, "dynamic_timing.csv").starts_with("algo,mean_ms_per_frame\n"));
    let trace = read(&out, "dynamic_trace.jsonl");
    for line in trace.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["nrmse"].is_number());
    }
}

#[test]
fn mri_tune_and_weak_threshold_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    let out = tmp.path().join("o");
    let o = dyncs(&["mri", "--config", &cfg, "--trials", "1", "--algos", "reg-mod-bpdn", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(read(&out, "mri_nrmse.csv").starts_with("t,algo,nrmse\n1,reg-mod-bpdn,"));

    let o = dyncs(&["tune", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&read(&out, "tune.json")).unwrap();
    assert!(v["tuned"]["reg"]["gamma"].as_f64().unwrap() > 0.0);

    let weak = tmp.path().join("weak.toml");
    std::fs::write(&weak, "[weak]\ntau_grid = [0.5]\n[weak.query]\ngrid = 16\ndelta_steps = 50\n").unwrap();
    let o = dyncs(&["weak-threshold", "--config", weak.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = read(&out, "weak_threshold.csv");
    assert!(csv.starts_with("tau,delta_c\n0.5,"));
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn config_errors_exit_with_code_two() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.toml");
    std::fs::write(&bad, "bogus = 1\n").unwrap();
    for args in [
        vec!["phase", "--trials", "0"],
        vec!["phase", "--config", bad.to_str().unwrap()],
        vec!["phase", "--config", "/nonexistent/x.toml"],
        vec!["dynamic", "--algos", "cosamp"],
        vec!["phase", "--jobs", "0"],
        vec!["nonsense"],
    ] {
        let o = dyncs(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(!o.stderr.is_empty());
    }
}
