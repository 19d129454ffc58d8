use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const TINY_INVERT: &str = r#"
mode = "invert"
seed = 11

[system]
mass = 10.0
beads = 4
truth = { kind = "showcase", amplitude = 5.0 }

[prior]
level = 4

[noise]
form = "scalar"
scale = 1e-2

[sampler]
n_steps = 3000
n_burnin = 500

[inversion]
n_runs = 2
n_proposals = 6
t_ac = 2
truth_replicas = 1

[output]
snapshot_every = 2
max_lag = 3

[[observables.train]]
gaussian_bump = { center = -1.0, exponent = 1.0 }
[[observables.train]]
gaussian_bump = { center = 1.0, exponent = 1.0 }

[[observables.test]]
gaussian_bump = { center = 0.0, exponent = 1.0 }
"#;

fn qti(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qti"))
        .args(args)
        .env_remove("QTI_WORKERS")
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn stderr_json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stderr)
        .unwrap_or_else(|_| panic!("{}", String::from_utf8_lossy(&o.stderr)))
}

fn csvs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv" || e == "jsonl"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    v.sort();
    v
}

#[test]
fn missing_fields_exit_2_with_json() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "empty.toml", "");
    let o = qti(&["forward", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr_json(&o);
    assert_eq!(e["error"], "config_validation");
    assert!(e["message"].as_str().unwrap().contains("mode"));
}

#[test]
fn parse_error_reports_line() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "dup.toml",
        "mode = \"invert\"\nseed = 1\nseed = 2\n",
    );
    let o = qti(&["invert", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["line"], 3);
}

#[test]
fn missing_file_is_config_error() {
    let o = qti(&["invert", "--config", "/nonexistent/x.toml"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn divergent_forward_exits_3() {
    let tmp = TempDir::new().unwrap();
    let text = TINY_INVERT.replace("n_steps = 3000", "n_steps = 3000\ndt = 1.9\nfriction = 0.0");
    let cfg = write(tmp.path(), "div.toml", &text);
    let out = tmp.path().join("o");
    let o = qti(&["forward", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(
        o.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert_eq!(stderr_json(&o)["error"], "numerical");
}

#[test]
fn forward_writes_estimates_with_oracle() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "f.toml", TINY_INVERT);
    let out = tmp.path().join("fwd");
    let o = qti(&["forward", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("forward.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "observable_id,role,mean,std_err,two_std_err,n_samples,oracle"
    );
    assert_eq!(lines.count(), 3);
    assert!(out.join("manifest.json").exists());
}

#[test]
fn invert_is_reproducible_across_workers_and_replay() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "inv.toml", TINY_INVERT);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let c = tmp.path().join("c");
    let o = qti(&[
        "invert",
        "--config",
        &cfg,
        "--workers",
        "1",
        "--out",
        a.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(summary["aborted"].is_null());
    let o = qti(&[
        "invert",
        "--config",
        &cfg,
        "--workers",
        "3",
        "--out",
        b.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert_eq!(csvs(&a), csvs(&b));

    let manifest = a.join("manifest.json");
    let o = qti(&[
        "invert",
        "--config",
        manifest.to_str().unwrap(),
        "--out",
        c.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(csvs(&a), csvs(&c));

    let m: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&manifest).unwrap()).unwrap();
    assert_eq!(m["seeds"]["master"], 11);
    assert_eq!(m["config"]["sampler"]["n_steps"], 3000);
    for name in [
        "predictions.csv",
        "chain_run0.csv",
        "chain_run1.csv",
        "autocorrelation.csv",
        "summary.json",
    ] {
        assert!(
            m["outputs"]
                .as_array()
                .unwrap()
                .iter()
                .any(|o| o["path"] == name),
            "{name}"
        );
    }
    let pred = fs::read_to_string(a.join("predictions.csv")).unwrap();
    assert!(pred.starts_with(
        "observable_id,initial,mean,se_runs,two_se_runs,se_pooled,two_se_pooled,truth,oracle"
    ));
}

#[test]
fn seed_override_changes_outputs() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "inv.toml", TINY_INVERT);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(
        qti(&["invert", "--config", &cfg, "--out", a.to_str().unwrap()])
            .status
            .success()
    );
    assert!(qti(&[
        "invert",
        "--config",
        &cfg,
        "--seed",
        "12",
        "--out",
        b.to_str().unwrap()
    ])
    .status
    .success());
    assert_ne!(
        fs::read(a.join("chain_run0.csv")).unwrap(),
        fs::read(b.join("chain_run0.csv")).unwrap()
    );
}

#[test]
fn shipped_configs_parse() {
    for f in ["showcase1.cfg", "twolevel.cfg"] {
        let p = Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("../core/examples")
            .join(f);
        qti_core::experiment::load_config_file(&p).unwrap();
    }
}
