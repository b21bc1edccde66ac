use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn brl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_brl"))
        .args(args)
        .env_remove("BRL_MAX_TERMS")
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("c.toml");
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

const RING: &str = "[domain]\nrho_in = 0.5\n[configuration]\nring = { k = 2, r = 0.6 }\n\
[reduce]\nepsilon = [0.2, 0.1]\n[profile]\nepsilon = 0.1\nn = 21\n";

#[test]
fn green_prints_versioned_json() {
    let out = brl(&[
        "green",
        "--rho",
        "0.5",
        "--x",
        "0.7,0,0,0",
        "--y",
        "0,0.7,0,0",
    ]);
    assert!(out.status.success());
    let v = json(&out);
    assert_eq!(v["schema_version"], 1);
    assert!(v["value"].as_f64().unwrap() > 0.0);
}

#[test]
fn usage_errors_exit_2() {
    let cases: [&[&str]; 4] = [
        &[
            "green",
            "--rho",
            "0.5",
            "--x",
            "0.7,0,0",
            "--y",
            "0,0.7,0,0",
        ],
        &[
            "green",
            "--rho",
            "0.5",
            "--x",
            "0.2,0,0,0",
            "--y",
            "0,0.7,0,0",
        ],
        &["robin", "--rho", "1.5", "--r", "0.7"],
        &["reduce", "--config", "/nonexistent/c.toml"],
    ];
    for args in cases {
        assert_eq!(brl(args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn bad_output_path_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), RING);
    let out = brl(&[
        "profile",
        "--config",
        &cfg,
        "--out",
        "/nonexistent/dir/p.csv",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn ring_scan_is_bitwise_reproducible_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for (path, workers) in [(&a, "1"), (&b, "3")] {
        let out = brl(&[
            "--workers",
            workers,
            "ring-scan",
            "--k",
            "2",
            "--rho",
            "0.5",
            "--n",
            "64",
            "--out",
            path.to_str().unwrap(),
        ]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let text = std::fs::read(&a).unwrap();
    assert_eq!(text, std::fs::read(&b).unwrap());
    let text = String::from_utf8(text).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("# schema_version=1"));
    assert_eq!(lines.next(), Some("r,lambda_1,lambda_2,tail_bound"));
    assert_eq!(lines.count(), 64);
}

#[test]
fn threshold_reports_one_signed_range() {
    let out = brl(&[
        "threshold",
        "--k",
        "2",
        "--lo",
        "0.3",
        "--hi",
        "0.9",
        "--tol",
        "1e-2",
        "--resolution",
        "32",
    ]);
    assert!(out.status.success());
    let v = json(&out);
    assert!(v["rho_star"].is_null());
    assert_eq!(v["schema_version"], 1);
}

#[test]
fn reduce_on_a_ring() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), RING);
    let out = brl(&["reduce", "--config", &cfg, "--epsilon", "0.1"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v = json(&out);
    // Equal weights by symmetry.
    let d = v["d"].as_array().unwrap();
    assert_eq!(d.len(), 1);
    assert!((d[0].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert_eq!(v["residuals"].as_array().unwrap().len(), 1);
}

#[test]
fn reduce_single_point_gives_robin_value() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[domain]\nrho_in = 0.5\n[configuration]\npoints = [[0.7, 0, 0, 0]]\n",
    );
    let out = brl(&["reduce", "--config", &cfg]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let lambda = json(&out)["lambda"].as_f64().unwrap();
    let tau = json(&brl(&["robin", "--rho", "0.5", "--r", "0.7"]))["value"]
        .as_f64()
        .unwrap();
    assert!((lambda - tau).abs() <= 1e-12 * tau.abs());
}

#[test]
fn profile_writes_csv_sidecar_and_record() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), RING);
    let csv = dir.path().join("p.csv");
    let rec = dir.path().join("rec.json");
    let out = brl(&[
        "--record",
        rec.to_str().unwrap(),
        "profile",
        "--config",
        &cfg,
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = std::fs::read_to_string(&csv).unwrap();
    let sidecar: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("p.csv.json")).unwrap())
            .unwrap();
    assert_eq!(sidecar["schema_version"], 1);
    // Grid points outside the annulus are skipped.
    let samples = sidecar["samples"].as_u64().unwrap() as usize;
    assert_eq!(
        samples + sidecar["skipped"].as_u64().unwrap() as usize,
        21 * 21
    );
    assert_eq!(text.lines().count(), 2 + samples);
    let record: Value = serde_json::from_str(&std::fs::read_to_string(&rec).unwrap()).unwrap();
    assert_eq!(record["command"], "profile");
    assert_eq!(record["input_hash"].as_str().unwrap().len(), 64);
    assert!(!record["outputs"].as_array().unwrap().is_empty());
}

#[test]
fn max_terms_env_is_honoured_and_validated() {
    let run = |v: &str| {
        Command::new(env!("CARGO_BIN_EXE_brl"))
            .args(["robin", "--rho", "0.5", "--r", "0.7"])
            .env("BRL_MAX_TERMS", v)
            .output()
            .unwrap()
    };
    let few = json(&run("3"));
    let many = json(&run("500"));
    assert!(few["tail_bound"].as_f64().unwrap() > many["tail_bound"].as_f64().unwrap());
    assert_eq!(run("lots").status.code(), Some(2));
}
