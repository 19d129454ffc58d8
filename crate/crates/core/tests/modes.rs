//! End-to-end runs of every experiment mode on tiny settings.

use std::fs;
use std::path::Path;

use qti_core::experiment::{
    parse_config, resolve, run_experiment, Mode, Overrides, StabilitySection,
};

const BASE: &str = r#"
mode = "invert"
seed = 5

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
n_steps = 2000
n_burnin = 400

[inversion]
n_runs = 2
n_proposals = 8
t_ac = 2
burn_in = 2
truth_replicas = 1

[output]
max_lag = 3

[[observables.train]]
gaussian_bump = { center = -1.0, exponent = 1.0 }
[[observables.train]]
gaussian_bump = { center = 1.0, exponent = 1.0 }

[[observables.test]]
gaussian_bump = { center = 0.0, exponent = 1.0 }
"#;

fn lines(p: &Path) -> usize {
    fs::read_to_string(p).unwrap().lines().count()
}

#[test]
fn invert_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = resolve(
        parse_config(BASE).unwrap(),
        &Overrides {
            output_dir: Some(dir.path().to_path_buf()),
            ..Default::default()
        },
    )
    .unwrap();
    let out = run_experiment(&cfg, 2).unwrap();
    assert!(out.manifest.aborted.is_none());
    let d = dir.path();
    assert_eq!(lines(&d.join("chain_run0.csv")), 1 + 9);
    assert_eq!(lines(&d.join("predictions.csv")), 2);
    assert_eq!(lines(&d.join("running_predictions.csv")), 1 + 8);
    assert_eq!(lines(&d.join("acceptance.csv")), 1 + 2 * 8);
    assert_eq!(lines(&d.join("averaged_potential.csv")), 1 + 161);
    // iterations 0 and 50 are multiples of the snapshot period
    assert_eq!(lines(&d.join("potentials_run1.jsonl")), 1);
    let acf = fs::read_to_string(d.join("autocorrelation.csv")).unwrap();
    assert!(acf.starts_with("lag,test_0,xi_0,"));
    assert_eq!(acf.lines().count(), 1 + 4);
}

#[test]
fn noisy_observations_differ_from_clean() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut cfg = parse_config(BASE).unwrap();
    cfg.output_dir = a.path().to_path_buf();
    let cfg = resolve(cfg, &Overrides::default()).unwrap();
    run_experiment(&cfg, 1).unwrap();
    let mut noisy = cfg.clone();
    noisy.inversion.noisy_observations = true;
    noisy.output_dir = b.path().to_path_buf();
    run_experiment(&noisy, 1).unwrap();
    assert_ne!(
        fs::read(a.path().join("observations.csv")).unwrap(),
        fs::read(b.path().join("observations.csv")).unwrap()
    );
}

#[test]
fn stability_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = parse_config(BASE).unwrap();
    cfg.mode = Mode::Stability;
    cfg.stability = Some(StabilitySection {
        gamma_scales: vec![0.01, 0.1, 1.0],
        draws: 2,
        n_runs: Some(1),
        n_proposals: Some(6),
    });
    cfg.output_dir = dir.path().to_path_buf();
    let cfg = resolve(cfg, &Overrides::default()).unwrap();
    run_experiment(&cfg, 2).unwrap();
    let text = fs::read_to_string(dir.path().join("stability.csv")).unwrap();
    assert!(text.starts_with("scale,observable_id,mean_abs_error"));
    assert_eq!(text.lines().count(), 1 + 3);
    assert_eq!(
        lines(&dir.path().join("stability_predictions.csv")),
        1 + 3 * 2
    );
    let slopes: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("stability_slopes.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(slopes["fitted_slopes"].as_array().unwrap().len(), 1);
}

#[test]
fn stability_requires_section() {
    let mut text = BASE.replace("mode = \"invert\"", "mode = \"stability\"");
    text.push('\n');
    assert!(parse_config(&text).is_err());
}

#[test]
fn twolevel_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let text =
        fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/twolevel.cfg"))
            .unwrap();
    let mut cfg = parse_config(&text).unwrap();
    cfg.system.beads = 4;
    cfg.sampler.n_steps = Some(2000);
    cfg.sampler.n_burnin = Some(400);
    cfg.inversion.n_runs = 2;
    cfg.inversion.n_proposals = 5;
    cfg.inversion.t_ac = 2;
    cfg.inversion.truth_replicas = 1;
    cfg.output.max_lag = 2;
    cfg.output_dir = dir.path().to_path_buf();
    let cfg = resolve(cfg, &Overrides::default()).unwrap();
    assert!(cfg.twolevel.as_ref().unwrap().eta.is_some());
    let out = run_experiment(&cfg, 1).unwrap();
    assert!(out.manifest.aborted.is_none());
    let pot = fs::read_to_string(dir.path().join("averaged_potential.csv")).unwrap();
    assert!(pot.starts_with("x,v00_mean,v00_two_se_runs,v11_mean"));
    let pred = fs::read_to_string(dir.path().join("predictions.csv")).unwrap();
    assert_eq!(pred.lines().count(), 1 + 4);
    let acf = fs::read_to_string(dir.path().join("autocorrelation.csv")).unwrap();
    // 4 test series, 5 + 5 diagonal coordinates and 1 amplitude
    assert_eq!(acf.lines().next().unwrap().split(',').count(), 1 + 4 + 11);
}

#[test]
fn forward_mode_reports_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = parse_config(BASE).unwrap();
    cfg.mode = Mode::Forward;
    cfg.output_dir = dir.path().to_path_buf();
    let cfg = resolve(cfg, &Overrides::default()).unwrap();
    run_experiment(&cfg, 1).unwrap();
    let mut r = csv::Reader::from_path(dir.path().join("forward.csv")).unwrap();
    for rec in r.records() {
        let rec = rec.unwrap();
        let oracle: f64 = rec[6].parse().unwrap();
        assert!(oracle.is_finite() && (0.0..=1.0).contains(&oracle));
    }
}
