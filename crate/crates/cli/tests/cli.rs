use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn lab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gergm-lab"))
        .args(args)
        .arg("--out-dir")
        .arg(dir)
        .env_remove("GERGM_LAB_JOBS")
        .output()
        .expect("binary runs")
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn unit_triangle(dir: &Path) -> String {
    let p = dir.join("g.json");
    std::fs::write(&p, r#"{"n": 3, "edges": [[0,1,1.0],[0,2,1.0],[1,2,1.0]]}"#).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn homdensity_two_star_on_unit_triangle() {
    let t = tempfile::tempdir().unwrap();
    let g = unit_triangle(t.path());
    let out = lab(t.path(), &["homdensity", "--motif", "two_star", "--graph", &g]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = read_json(&t.path().join("homdensity.json"));
    assert!((v["density"].as_f64().unwrap() - 4.0 / 9.0).abs() < 1e-15);
    let out = lab(t.path(), &["homdensity", "--motif", "two_star", "--graph", &g, "--convention", "distinct-indices"]);
    assert!(out.status.success());
    let v = read_json(&t.path().join("homdensity.json"));
    assert!((v["density"].as_f64().unwrap() - 2.0 / 9.0).abs() < 1e-15);
    let m = read_json(&t.path().join("homdensity.manifest.json"));
    assert_eq!(m["command"], "homdensity");
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn exact_partition_row() {
    let t = tempfile::tempdir().unwrap();
    let out = lab(t.path(), &["partition", "--method", "exact-gaussian", "--n", "3", "--beta1", "0.1", "--beta2", "0.1"]);
    assert!(out.status.success());
    let v = read_json(&t.path().join("partition.json"));
    // ψ₃ = a^{-1/2} exp(6β₁²/a) b^{-1}, a = 1 − 8β₂/3, b = 1 − 2β₂/3
    let (a, b) = (1.0 - 0.8 / 3.0, 1.0 - 0.2 / 3.0);
    let want = -0.5 * f64::ln(a) + 0.06 / a - f64::ln(b);
    assert!((v["log_psi"].as_f64().unwrap() - want).abs() < 1e-14);
}

#[test]
fn gaussian_scan_has_no_flags() {
    let t = tempfile::tempdir().unwrap();
    let out = lab(t.path(), &["scan", "--grid", "beta2=0:0.24:0.005", "--beta1", "-2", "--base", "gaussian"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = read_json(&t.path().join("scan.json"));
    assert_eq!(v["points"], 49);
    assert_eq!(v["flags"], 0);
    let csv = std::fs::read_to_string(t.path().join("scan.csv")).unwrap();
    assert_eq!(csv.lines().count(), 50);
}

#[test]
fn seeded_runs_are_bit_identical() {
    let t = tempfile::tempdir().unwrap();
    let args = ["sample", "--n", "12", "--sweeps", "80", "--burn-in", "10", "--kernel", "mh", "--base", "quartic", "--beta1", "0.2", "--seed", "5"];
    let a = t.path().join("a");
    let b = t.path().join("b");
    assert!(lab(&a, &args).status.success());
    assert!(lab(&b, &args).status.success());
    for f in ["trace.csv", "final_state.json", "sample.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let (ma, mb) = (read_json(&a.join("sample.manifest.json")), read_json(&b.join("sample.manifest.json")));
    assert_eq!(ma["config_hash"], mb["config_hash"]);
    assert_eq!(ma["seed"], 5);
    let mut other = args.to_vec();
    let last = other.len() - 1;
    other[last] = "6";
    assert!(lab(&b, &other).status.success());
    assert_ne!(read_json(&b.join("sample.manifest.json"))["config_hash"], ma["config_hash"]);
}

#[test]
fn exit_codes() {
    let t = tempfile::tempdir().unwrap();
    let bad = t.path().join("bad.json");
    std::fs::write(&bad, "{\n \"base\": {\"kind\": \"quartic\"},\n \"motifz\": []\n}").unwrap();
    let out = lab(t.path(), &["partition", "--method", "variational", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));

    let out = lab(t.path(), &["partition", "--method", "exact-gaussian", "--n", "3", "--beta2", "0.5"]);
    assert_eq!(out.status.code(), Some(3));

    let out = lab(t.path(), &["validate", "--criteria", "3,7"]);
    assert_eq!(out.status.code(), Some(0));
    let out = lab(t.path(), &["validate", "--criteria", "2"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stdout).contains("[FAIL] criterion  2"));
    assert_eq!(read_json(&t.path().join("validation.json"))["failed"], 1);

    let out = lab(t.path(), &["scan", "--grid", "gamma=0:1:0.1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn jobs_environment_variable() {
    let t = tempfile::tempdir().unwrap();
    let g = unit_triangle(t.path());
    let run = |jobs: &str| {
        Command::new(env!("CARGO_BIN_EXE_gergm-lab"))
            .args(["homdensity", "--motif", "triangle", "--graph", &g, "--jobs", "1", "--out-dir"])
            .arg(t.path())
            .env("GERGM_LAB_JOBS", jobs)
            .output()
            .unwrap()
    };
    assert!(run("2").status.success());
    assert_eq!(run("many").status.code(), Some(2));
}

#[test]
fn fit_and_cutdist_write_results() {
    let t = tempfile::tempdir().unwrap();
    let s = t.path().join("s");
    assert!(lab(&s, &["sample", "--n", "30", "--sweeps", "300", "--burn-in", "299", "--beta1", "0.1", "--beta2", "0.05", "--seed", "3"])
        .status
        .success());
    let state = s.join("final_state.json");
    let f = t.path().join("f");
    let out = lab(&f, &["fit", "--graph", state.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = read_json(&f.join("fit.json"));
    assert_eq!(v["converged"], true);
    assert!(v["grad_norm"].as_f64().unwrap() < 1e-6);
    assert!(f.join("trajectory.csv").exists());

    let c = t.path().join("c");
    let out = lab(&c, &["cutdist", "--a", state.to_str().unwrap(), "--b", state.to_str().unwrap()]);
    assert!(out.status.success());
    let v = read_json(&c.join("cutdist.json"));
    assert_eq!(v["d"], 0.0);
    assert_eq!(v["delta"], 0.0);
}
