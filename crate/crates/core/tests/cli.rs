use std::process::{Command, Output};

use dithercap::channel::noise_pdf;
use dithercap::ChannelParams;
use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dithercap"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn error_record(o: &Output) -> Value {
    serde_json::from_slice(&o.stderr).expect("stderr holds one JSON error record")
}

#[test]
fn help_lists_commands() {
    let o = run(&["--help"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for c in [
        "pdf",
        "capacity",
        "sweep-delta",
        "sweep-power",
        "slope",
        "bounds",
        "simulate",
        "verify",
    ] {
        assert!(text.contains(c), "{c} missing from help");
    }
    let o = run(&["verify", "--help"]);
    let text = stdout(&o);
    for f in [
        "--seed",
        "--n",
        "--delta",
        "--atoms",
        "--u-bins",
        "--tol-sigmas",
        "--format",
    ] {
        assert!(text.contains(f), "{f} missing from verify help");
    }
}

#[test]
fn usage_errors_exit_2() {
    for args in [
        &["bogus"][..],
        &["pdf", "--delta", "1", "--nope"],
        &["pdf"],
        &["pdf", "--delta", "1", "--y-grid", "1,0"],
        &["sweep-delta", "--p", "1", "--delta-grid", "log:0:1:3"],
    ] {
        let o = run(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert_eq!(error_record(&o)["error"]["kind"], "usage");
    }
}

#[test]
fn validation_errors_exit_3() {
    for args in [
        &["capacity", "--delta", "-1", "--p", "1"][..],
        &["simulate", "--delta", "1", "--atoms", "0:0.5,1:0.6"],
        &["verify", "--delta", "1", "--n", "0"],
    ] {
        let o = run(args);
        assert_eq!(o.status.code(), Some(3), "{args:?}");
        let e = error_record(&o);
        assert_eq!(e["error"]["code"], 3);
        assert!(o.stdout.is_empty());
    }
}

#[test]
fn sweep_is_reproducible() {
    let args = ["sweep-delta", "--p", "1", "--a", "4", "--delta-grid", "log:0.01:100:9"];
    let a = run(&args);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let text = stdout(&a);
    let meta: Vec<&str> = text.lines().filter(|l| l.starts_with('#')).collect();
    assert!(meta.iter().any(|l| l.starts_with("# units=")));
    let body: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(body.len(), 10);
    assert!(body[0].starts_with("sigma,delta"));
    assert_eq!(stdout(&run(&args)), text);
}

#[test]
fn slope_rows() {
    let o = run(&["slope", "--delta-grid", "0.01,1,100", "--format", "json"]);
    assert!(o.status.success());
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    let s: Vec<f64> = rows
        .iter()
        .map(|r| r["half_fisher_nats_per_power"].as_f64().unwrap())
        .collect();
    assert!((s[0] - 0.5).abs() < 1e-4);
    assert!(s[0] > s[1] && s[1] > s[2]);
    for r in rows {
        assert!(r["threshold_lower_bound_nats_per_power"].as_f64().unwrap() <= 0.5 + 1e-6);
    }
}

#[test]
fn json_floats_round_trip() {
    let o = run(&[
        "pdf",
        "--sigma",
        "0.7",
        "--delta",
        "1.3",
        "--y-grid",
        "lin:-3:3:13",
        "--format",
        "json",
    ]);
    assert!(o.status.success());
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let c = ChannelParams::new(0.7, 1.3).unwrap();
    for r in v["rows"].as_array().unwrap() {
        let y = r["y"].as_f64().unwrap();
        assert_eq!(r["pdf"].as_f64().unwrap(), noise_pdf(y, &c));
    }
}

#[test]
fn verify_outcomes() {
    let o = run(&["verify", "--delta", "1", "--n", "1000000"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let o = run(&["verify", "--delta", "1", "--n", "1000000", "--tol-sigmas", "0.01"]);
    assert_eq!(o.status.code(), Some(5));
}

#[test]
fn output_file_matches_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pdf.csv");
    let args = ["pdf", "--delta", "0.5", "--y-grid", "lin:-2:2:5"];
    let o = run(&[&args[..], &["--output", path.to_str().unwrap()]].concat());
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
    assert_eq!(std::fs::read(&path).unwrap(), run(&args).stdout);
}
