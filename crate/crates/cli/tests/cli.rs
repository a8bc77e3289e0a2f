use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn momlab(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_momlab"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("run momlab")
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn column(rows: &[Vec<String>], name: &str) -> Vec<String> {
    let idx = rows[0].iter().position(|h| h == name).unwrap();
    rows[1..].iter().map(|r| r[idx].clone()).collect()
}

#[test]
fn verify_passes_and_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = momlab(&["verify", "--points", "10", "--seed", "3"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_csv(&dir.path().join("verify.csv"));
    assert!(column(&rows, "passed").iter().all(|p| p == "true"));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("verify.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["passed"], true);
    assert_eq!(manifest["seed"], 3);
}

#[test]
fn mom_output_independent_of_workers() {
    let dir = tempfile::tempdir().unwrap();
    let mut csvs = Vec::new();
    for workers in ["1", "3"] {
        let sub = dir.path().join(workers);
        let out = momlab(
            &["mom", "--height", "1e5", "--beta", "1", "--n-t", "128", "--seed", "11", "--workers", workers],
            &sub,
        );
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        csvs.push(fs::read(sub.join("mom.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
}

#[test]
fn config_fills_missing_flags_only() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.ini");
    fs::write(&cfg, "[mom]\nheight = 1e4\nbeta = 0.9\nn_t = 64\nseed = 5\n").unwrap();
    let out = momlab(&["mom", "--config", cfg.to_str().unwrap(), "--beta", "0.8"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_csv(&dir.path().join("mom.csv"));
    assert_eq!(column(&rows, "beta")[0].parse::<f64>().unwrap(), 0.8);
    assert_eq!(column(&rows, "n_t")[0], "64");
    assert_eq!(column(&rows, "seed")[0], "5");
}

#[test]
fn invalid_input_exits_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let twist = dir.path().join("twist.csv");
    fs::write(&twist, "n,a_re,a_im,b_re,b_im\n1,1,0,1,0\n2,0.5,0,0.5,0\n").unwrap();
    let twist = twist.to_str().unwrap();
    let cases: [&[&str]; 4] = [
        &["mom", "--height", "1e4", "--beta", "1", "--n-h", "10"],
        &["mom", "--height", "50", "--beta", "1"],
        &["mainterm", "--order", "4", "--shifts", "0:0.5,0:0.5,0:-0.5,0:-0.5", "--height", "1e4", "--eta", "0.2", "--twist-file", twist],
        &["frobnicate"],
    ];
    for args in cases {
        let out = momlab(args, dir.path());
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn second_order_mainterm_within_band() {
    let dir = tempfile::tempdir().unwrap();
    let twist = dir.path().join("twist.csv");
    let rows: String = (1..=10).map(|n| format!("{n},{},0,{},0\n", 1.0 / (n as f64).sqrt(), 1.0 / (n as f64).sqrt())).collect();
    fs::write(&twist, rows).unwrap();
    let out = momlab(
        &["mainterm", "--order", "2", "--shifts", "0:0.25,0:0.25", "--height", "2000", "--twist-file", twist.to_str().unwrap(), "--eta", "0.35"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_csv(&dir.path().join("mainterm.csv"));
    let ratio: f64 = column(&rows, "ratio_re")[0].parse().unwrap();
    assert!((0.85..=1.15).contains(&ratio), "{ratio}");
    let out = momlab(
        &["mainterm", "--order", "2", "--shifts", "0:0.25,0:0.25", "--height", "2000", "--band", "1.5,2"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
}
