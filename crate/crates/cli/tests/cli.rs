use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sheetlaw::fields::quad_functional;
use sheetlaw::{CenteringKind, GridField};

fn sheetlaw(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sheetlaw")).args(args).output().expect("spawn sheetlaw")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn data_rows(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.starts_with('#')).collect()
}

#[test]
fn laplace_at_zero_is_one() {
    let o = sheetlaw(&["laplace", "--process", "b0", "--u", "0"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let rows = data_rows(&out);
    assert_eq!(rows, ["u,value", "0.0,1.0"]);
    assert!(out.contains("# version="));
}

#[test]
fn laplace_transform_list() {
    let o = sheetlaw(&["laplace", "--transform", "thm6-j", "--u", "0,1,2"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(data_rows(&stdout(&o)).len(), 4);
    assert_eq!(sheetlaw(&["laplace", "--process", "sheet", "--u", "1"]).status.code(), Some(2));
    assert_eq!(sheetlaw(&["laplace", "--u", "1"]).status.code(), Some(2));
}

#[test]
fn simulate_is_deterministic_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let p = dir.path().join(name);
        let o = sheetlaw(&["simulate", "--process", "sheet", "--n", "16", "--seed", "1", "--out", p.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        p
    };
    let (a, b) = (run("a.csv"), run("b.csv"));
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());

    let f = GridField::read_csv(std::io::BufReader::new(fs::File::open(&a).unwrap())).unwrap();
    assert_eq!((f.n(), f.seed()), (16, 1));
    let direct = sheetlaw::fields::sample_sheet(16, 1).unwrap();
    for c in CenteringKind::ALL {
        assert_eq!(quad_functional(&f, c).to_bits(), quad_functional(&direct, c).to_bits());
    }
}

#[test]
fn simulate_projection_and_path() {
    let o = sheetlaw(&["simulate", "--process", "b0", "--n", "8", "--projection", "T2"]);
    assert_eq!(o.status.code(), Some(0));
    let head = stdout(&o).lines().take(2).collect::<Vec<_>>().join("\n");
    assert!(head.contains("version"), "{head}");
    let o = sheetlaw(&["simulate", "--process", "bridge1d", "--n", "32", "--seed", "4"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().count(), 3 + 33);
    assert_eq!(sheetlaw(&["simulate", "--process", "bridge1d", "--projection", "S1"]).status.code(), Some(2));
}

#[test]
fn spectrum_outputs() {
    let o = sheetlaw(&["spectrum", "--process", "bridge1d", "--n", "64"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let rows = data_rows(&out);
    assert_eq!(rows[0], "rank,eigenvalue");
    assert_eq!(rows.len(), 65);
    let top: f64 = rows[1].split(',').nth(1).unwrap().parse().unwrap();
    assert!((top - 1.0 / std::f64::consts::PI.powi(2)).abs() < 1e-3);
    assert!(out.contains("n=64"));

    let o = sheetlaw(&["spectrum", "--process", "b0", "--analytic", "--count", "10"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(data_rows(&stdout(&o)).len(), 101);
    assert_eq!(sheetlaw(&["spectrum", "--process", "bridge1d", "--centering", "row"]).status.code(), Some(2));
}

#[test]
fn cumulants_report() {
    let o = sheetlaw(&["cumulants", "--n", "4", "--m-max", "4", "--seed", "9"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["seed"], 9);
    assert_eq!(v["n"], 4);
    assert!(v["pass"].as_bool().unwrap());
    assert!(v["version"].is_string());
    assert_eq!(sheetlaw(&["cumulants", "--phi", "2", "--n", "6"]).status.code(), Some(0));
    assert_eq!(sheetlaw(&["cumulants", "--phi", "7"]).status.code(), Some(2));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(sheetlaw(&["suite", "--bogus"]).status.code(), Some(2));
    assert_eq!(sheetlaw(&["suite", "--samples", "500"]).status.code(), Some(2));
    assert_eq!(sheetlaw(&["verify", "--identity", "NOPE"]).status.code(), Some(2));
    let o = sheetlaw(&["verify", "--identity", "LEMMA4", "--channel", "spectral"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("usage"));
    assert_eq!(sheetlaw(&[]).status.code(), Some(2));
}

#[test]
fn verification_failure_exits_1() {
    // a 2×2 grid is far too coarse for the 1% spectral threshold
    let o = sheetlaw(&["verify", "--identity", "FUB1", "--channel", "spectral", "--n", "2"]);
    assert_eq!(o.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v[0]["status"], "fail");
    assert_eq!(v[0]["n"], 2);
}

#[test]
fn verify_passes_and_echoes_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let o = sheetlaw(&[
        "verify",
        "--identity",
        "T6J",
        "--channel",
        "closed_form",
        "--seed",
        "5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v[0]["identity"], "T6J");
    assert_eq!(v[0]["seed"], 5);
    assert!(v[0]["pass"].as_bool().unwrap());
    assert!(o.stdout.is_empty());
}

fn suite_with_threads(threads: &str, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sheetlaw"))
        .env("SHEETLAW_THREADS", threads)
        .args(["suite", "--seed", "7", "--n", "8", "--n1d", "64", "--samples", "1000", "--out"])
        .arg(out)
        .output()
        .unwrap()
}

#[test]
fn suite_output_independent_of_threads() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    let oa = suite_with_threads("1", &a);
    let ob = suite_with_threads("3", &b);
    assert_eq!(oa.status.code(), ob.status.code());
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let v: serde_json::Value = serde_json::from_slice(&fs::read(&a).unwrap()).unwrap();
    let reports = v.as_array().unwrap();
    let ids: std::collections::BTreeSet<&str> = reports.iter().map(|r| r["identity"].as_str().unwrap()).collect();
    assert_eq!(ids.len(), 13);
    assert!(reports.iter().filter(|r| r["channel"] == "monte_carlo").all(|r| r["status"] == "inconclusive"));
    assert_eq!(suite_with_threads("x", &a).status.code(), Some(2));
}
