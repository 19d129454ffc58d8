//! Experiment configuration, orchestration and output files.
//!
//! A run is described by a TOML document (see `examples/showcase1.cfg`).
//! [`parse_config`] validates it and applies defaults; [`resolve`] folds in
//! command-line overrides so the stored config is fully explicit; and
//! [`run_experiment`] writes CSV/JSON artifacts plus a `manifest.json` from
//! which the run can be replayed bit for bit.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::basis::{GridSpec, Potential, PotentialCoeffs, PriorSpec, TruthPotential};
use crate::error::{Error, Result};
use crate::inversion::{
    autocorrelation, run_inversion, ForwardModel, InversionConfig, InversionResult, NoiseModel,
    OneLevelModel, TwoLevelModel,
};
use crate::metrics::{stability_sweep, SweepConfig};
use crate::pimd::{
    exact_thermal_average, forward_estimate, oracle_grid_default, InitialPosition, LangevinConfig,
};
use crate::ringpoly::{Observable, RingParams};
use crate::stats::{mean, mix_seed, std_err};
use crate::twolevel::{
    default_eta, exact_thermal_average_2level, oracle_grid_2level_default, pimd_sh_estimate,
    Placement, TwoLevelObservable, TwoLevelPotential,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Forward,
    Invert,
    Stability,
    Twolevel,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "forward" => Ok(Mode::Forward),
            "invert" => Ok(Mode::Invert),
            "stability" => Ok(Mode::Stability),
            "twolevel" => Ok(Mode::Twolevel),
            other => Err(Error::ConfigValidation {
                field: "mode".into(),
                message: format!("unknown mode `{other}`"),
            }),
        }
    }
}

/// Observable as written in a config file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ObservableSpec {
    GaussianBump {
        center: f64,
        exponent: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bound: Option<f64>,
    },
    ScaledHermite {
        order: usize,
        scale: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bound: Option<f64>,
    },
}

impl ObservableSpec {
    pub fn build(&self) -> Result<Observable> {
        let o = match *self {
            ObservableSpec::GaussianBump {
                center,
                exponent,
                bound,
            } => {
                let mut o = Observable::gaussian(center, exponent);
                if let Some(b) = bound {
                    o.bound = b;
                }
                o
            }
            ObservableSpec::ScaledHermite {
                order,
                scale,
                bound,
            } => {
                let mut o = Observable::scaled_hermite(order, scale);
                if let Some(b) = bound {
                    o.bound = b;
                }
                o
            }
        };
        o.validate()?;
        Ok(o)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoLevelObservableSpec {
    pub placement: Placement,
    pub observable: ObservableSpec,
}

impl TwoLevelObservableSpec {
    pub fn build(&self) -> Result<TwoLevelObservable> {
        Ok(TwoLevelObservable {
            placement: self.placement,
            base: self.observable.build()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub mass: f64,
    #[serde(default = "unit")]
    pub beta: f64,
    pub beads: usize,
    /// Ground truth for the 1-level modes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<TruthPotential>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_grid: Option<GridSpec>,
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservableSets {
    #[serde(default)]
    pub train: Vec<ObservableSpec>,
    #[serde(default)]
    pub test: Vec<ObservableSpec>,
}

/// Either explicit `gamma` or the power law `γ_j = scale·(j+1)^(−exponent)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exponent: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<Vec<f64>>,
}

impl PriorConfig {
    pub fn build(&self) -> Result<PriorSpec> {
        match (&self.gamma, self.level) {
            (Some(g), None) if self.scale.is_none() && self.exponent.is_none() => {
                PriorSpec::new(g.clone())
            }
            (None, Some(level)) => PriorSpec::power_law(
                level,
                self.scale.unwrap_or(4.0),
                self.exponent.unwrap_or(1.2),
            ),
            _ => Err(Error::ConfigValidation {
                field: "prior".into(),
                message: "give either `gamma` or `level` (with optional `scale`, `exponent`)"
                    .into(),
            }),
        }
    }
}

/// Overrides of the default Langevin settings; unset fields take the
/// defaults for the ring.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub friction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_burnin: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thin: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_batches: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialPosition>,
}

impl SamplerConfig {
    pub fn build(&self, ring: &RingParams, seed: u64) -> Result<LangevinConfig> {
        let d = LangevinConfig::default_for(ring);
        let cfg = LangevinConfig {
            dt: self.dt.unwrap_or(d.dt),
            friction: self.friction.unwrap_or(d.friction),
            n_steps: self.n_steps.unwrap_or(d.n_steps),
            n_burnin: self.n_burnin.unwrap_or(d.n_burnin),
            thin: self.thin.unwrap_or(d.thin),
            n_batches: self.n_batches.unwrap_or(d.n_batches),
            initial: self.initial.unwrap_or(d.initial),
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn fill(&mut self, ring: &RingParams) {
        let d = LangevinConfig::default_for(ring);
        self.dt.get_or_insert(d.dt);
        self.friction.get_or_insert(d.friction);
        self.n_steps.get_or_insert(d.n_steps);
        self.n_burnin.get_or_insert(d.n_burnin);
        self.thin.get_or_insert(d.thin);
        self.n_batches.get_or_insert(d.n_batches);
        self.initial.get_or_insert(d.initial);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InversionSection {
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_runs")]
    pub n_runs: usize,
    #[serde(default = "default_proposals")]
    pub n_proposals: usize,
    /// Used instead of `n_runs`/`n_proposals` under `--paper-scale`.
    #[serde(default = "default_paper_runs")]
    pub paper_runs: usize,
    #[serde(default = "default_paper_proposals")]
    pub paper_proposals: usize,
    #[serde(default = "default_t_ac")]
    pub t_ac: usize,
    #[serde(default)]
    pub burn_in: usize,
    /// Add a draw of `N(0, Γ_η)` to the generated training observations.
    #[serde(default)]
    pub noisy_observations: bool,
    /// Independent forward runs averaged into the generated truth values.
    #[serde(default = "default_replicas")]
    pub truth_replicas: usize,
    /// Explicit training observations; generated from the truth when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observations: Option<Vec<f64>>,
    /// Explicit ground-truth test values; generated when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_truth: Option<Vec<f64>>,
}

fn default_rho() -> f64 {
    0.95
}
fn default_runs() -> usize {
    4
}
fn default_proposals() -> usize {
    400
}
fn default_paper_runs() -> usize {
    10
}
fn default_paper_proposals() -> usize {
    1600
}
fn default_t_ac() -> usize {
    50
}
fn default_replicas() -> usize {
    8
}

impl Default for InversionSection {
    fn default() -> Self {
        Self {
            rho: default_rho(),
            n_runs: default_runs(),
            n_proposals: default_proposals(),
            paper_runs: default_paper_runs(),
            paper_proposals: default_paper_proposals(),
            t_ac: default_t_ac(),
            burn_in: 0,
            noisy_observations: false,
            truth_replicas: default_replicas(),
            observations: None,
            test_truth: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilitySection {
    pub gamma_scales: Vec<f64>,
    #[serde(default = "default_draws")]
    pub draws: usize,
    /// Per-draw chain settings; default to the inversion section.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_runs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_proposals: Option<usize>,
}

fn default_draws() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoLevelSection {
    pub truth: TwoLevelPotential,
    /// Hopping scale; `1/β_N` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default = "unit")]
    pub amplitude_mean: f64,
    pub train: Vec<TwoLevelObservableSpec>,
    pub test: Vec<TwoLevelObservableSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_grid: Option<GridSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// Grid for the averaged-potential CSV.
    #[serde(default = "default_potential_grid")]
    pub potential_grid: GridSpec,
    #[serde(default = "default_snapshot")]
    pub snapshot_every: usize,
    #[serde(default = "default_max_lag")]
    pub max_lag: usize,
}

fn default_potential_grid() -> GridSpec {
    GridSpec {
        x_min: -4.0,
        x_max: 4.0,
        n_points: 161,
    }
}
fn default_snapshot() -> usize {
    50
}
fn default_max_lag() -> usize {
    100
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            potential_grid: default_potential_grid(),
            snapshot_every: default_snapshot(),
            max_lag: default_max_lag(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub seed: u64,
    #[serde(default = "default_out")]
    pub output_dir: PathBuf,
    pub system: SystemSpec,
    #[serde(default)]
    pub observables: ObservableSets,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<PriorConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseModel>,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub inversion: InversionSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stability: Option<StabilitySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub twolevel: Option<TwoLevelSection>,
    #[serde(default)]
    pub output: OutputSection,
}

fn default_out() -> PathBuf {
    PathBuf::from("qti-out")
}

fn invalid(field: &str, message: impl Into<String>) -> Error {
    Error::ConfigValidation {
        field: field.into(),
        message: message.into(),
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Parses and validates a TOML experiment description.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let table: toml::Table = toml::from_str(text).map_err(|e| Error::ConfigParse {
        line: e.span().map(|s| line_of(text, s.start)),
        message: e.message().to_string(),
    })?;
    let missing: Vec<&str> = ["mode", "seed", "system"]
        .into_iter()
        .filter(|k| !table.contains_key(*k))
        .collect();
    if !missing.is_empty() {
        return Err(invalid(
            "<root>",
            format!("missing required fields: {}", missing.join(", ")),
        ));
    }
    let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::ConfigParse {
        line: e.span().map(|s| line_of(text, s.start)),
        message: e.message().to_string(),
    })?;
    cfg.validate()?;
    Ok(cfg)
}

/// Reads a TOML config, or the resolved config stored in a run manifest.
pub fn load_config_file(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path)?;
    if path.extension().is_some_and(|e| e == "json") {
        let m: RunManifest = serde_json::from_str(&text).map_err(|e| Error::ConfigParse {
            line: Some(e.line()),
            message: e.to_string(),
        })?;
        m.config.validate()?;
        return Ok(m.config);
    }
    parse_config(&text)
}

impl ExperimentConfig {
    pub fn ring(&self) -> Result<RingParams> {
        RingParams::new(self.system.beads, self.system.mass, self.system.beta)
            .map_err(|e| invalid("system", e.to_string()))
    }

    fn observables(list: &[ObservableSpec], field: &str) -> Result<Vec<Observable>> {
        list.iter()
            .map(|o| o.build().map_err(|e| invalid(field, e.to_string())))
            .collect()
    }

    pub fn train(&self) -> Result<Vec<Observable>> {
        Self::observables(&self.observables.train, "observables.train")
    }

    pub fn test(&self) -> Result<Vec<Observable>> {
        Self::observables(&self.observables.test, "observables.test")
    }

    pub fn prior_spec(&self) -> Result<PriorSpec> {
        self.prior
            .as_ref()
            .ok_or_else(|| invalid("prior", "required for this mode"))?
            .build()
            .map_err(|e| invalid("prior", e.to_string()))
    }

    fn noise_model(&self) -> Result<NoiseModel> {
        self.noise
            .clone()
            .ok_or_else(|| invalid("noise", "required for this mode"))
    }

    /// Checks everything the chosen mode needs.
    pub fn validate(&self) -> Result<()> {
        let ring = self.ring()?;
        self.sampler
            .build(&ring, 0)
            .map_err(|e| invalid("sampler", e.to_string()))?;
        let train = self.train()?;
        let test = self.test()?;
        let inv = &self.inversion;
        if !(inv.rho > 0.0 && inv.rho < 1.0) {
            return Err(invalid("inversion.rho", "must lie in (0, 1)"));
        }
        if inv.n_runs == 0
            || inv.n_proposals == 0
            || inv.paper_runs == 0
            || inv.paper_proposals == 0
        {
            return Err(invalid(
                "inversion",
                "run and proposal counts must be positive",
            ));
        }
        if inv.t_ac == 0 || inv.truth_replicas == 0 {
            return Err(invalid(
                "inversion",
                "t_ac and truth_replicas must be positive",
            ));
        }
        if inv.burn_in >= inv.n_proposals.min(inv.paper_proposals) {
            return Err(invalid(
                "inversion.burn_in",
                "must be smaller than the proposal count",
            ));
        }
        if self.output.snapshot_every == 0 {
            return Err(invalid("output.snapshot_every", "must be positive"));
        }
        self.output
            .potential_grid
            .validate(2)
            .map_err(|e| invalid("output.potential_grid", e.to_string()))?;
        match self.mode {
            Mode::Forward => {
                if self.system.truth.is_none() {
                    return Err(invalid(
                        "system.truth",
                        "forward mode needs a truth potential",
                    ));
                }
                if train.is_empty() && test.is_empty() {
                    return Err(invalid("observables", "need at least one observable"));
                }
            }
            Mode::Invert | Mode::Stability => {
                if train.is_empty() || test.is_empty() {
                    return Err(invalid(
                        "observables",
                        "need training and testing observables",
                    ));
                }
                self.prior_spec()?;
                let generated = inv.observations.is_none() || inv.test_truth.is_none();
                if generated && self.system.truth.is_none() {
                    return Err(invalid("system.truth", "needed to generate observations"));
                }
                if let Some(y) = &inv.observations {
                    if y.len() != train.len() {
                        return Err(invalid(
                            "inversion.observations",
                            "one value per training observable",
                        ));
                    }
                }
                if let Some(t) = &inv.test_truth {
                    if t.len() != test.len() {
                        return Err(invalid(
                            "inversion.test_truth",
                            "one value per testing observable",
                        ));
                    }
                }
                if self.mode == Mode::Invert {
                    let n = self.noise_model()?;
                    if let Some(d) = n.dim() {
                        if d != train.len() {
                            return Err(invalid(
                                "noise",
                                "dimension must match the training observables",
                            ));
                        }
                    }
                } else {
                    let s = self
                        .stability
                        .as_ref()
                        .ok_or_else(|| invalid("stability", "required for stability mode"))?;
                    if s.gamma_scales.len() < 3
                        || s.gamma_scales.iter().any(|g| !(g.is_finite() && *g > 0.0))
                    {
                        return Err(invalid(
                            "stability.gamma_scales",
                            "need at least three positive scales",
                        ));
                    }
                    if s.draws == 0 || s.n_runs == Some(0) || s.n_proposals == Some(0) {
                        return Err(invalid("stability", "counts must be positive"));
                    }
                    if s.n_proposals.is_some_and(|p| p <= inv.burn_in) {
                        return Err(invalid(
                            "stability.n_proposals",
                            "must exceed inversion.burn_in",
                        ));
                    }
                }
            }
            Mode::Twolevel => {
                let tl = self
                    .twolevel
                    .as_ref()
                    .ok_or_else(|| invalid("twolevel", "required for twolevel mode"))?;
                tl.truth
                    .validate()
                    .map_err(|e| invalid("twolevel.truth", e.to_string()))?;
                let prior = self.prior_spec()?;
                if tl.truth.v00.truncation() != prior.truncation()
                    || tl.truth.v11.truncation() != prior.truncation()
                {
                    return Err(invalid(
                        "twolevel.truth",
                        "diagonal truncation must match the prior",
                    ));
                }
                if tl.train.is_empty() || tl.test.is_empty() {
                    return Err(invalid("twolevel", "need training and testing observables"));
                }
                for o in tl.train.iter().chain(&tl.test) {
                    o.build()
                        .map_err(|e| invalid("twolevel.observables", e.to_string()))?;
                }
                if let Some(eta) = tl.eta {
                    if !(eta.is_finite() && eta > 0.0) {
                        return Err(invalid("twolevel.eta", "must be positive"));
                    }
                }
                if !(tl.amplitude_mean.is_finite() && tl.amplitude_mean > 0.0) {
                    return Err(invalid("twolevel.amplitude_mean", "must be positive"));
                }
                let n = self.noise_model()?;
                if let Some(d) = n.dim() {
                    if d != tl.train.len() {
                        return Err(invalid(
                            "noise",
                            "dimension must match the training observables",
                        ));
                    }
                }
                if let Some(y) = &inv.observations {
                    if y.len() != tl.train.len() {
                        return Err(invalid(
                            "inversion.observations",
                            "one value per training observable",
                        ));
                    }
                }
                if let Some(t) = &inv.test_truth {
                    if t.len() != tl.test.len() {
                        return Err(invalid(
                            "inversion.test_truth",
                            "one value per testing observable",
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Command-line overrides.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub paper_scale: bool,
    pub output_dir: Option<PathBuf>,
}

/// Applies overrides and makes every defaulted setting explicit.
pub fn resolve(mut cfg: ExperimentConfig, ov: &Overrides) -> Result<ExperimentConfig> {
    if let Some(s) = ov.seed {
        cfg.seed = s;
    }
    if let Some(d) = &ov.output_dir {
        cfg.output_dir = d.clone();
    }
    if ov.paper_scale {
        cfg.inversion.n_runs = cfg.inversion.paper_runs;
        cfg.inversion.n_proposals = cfg.inversion.paper_proposals;
    }
    let ring = cfg.ring()?;
    cfg.sampler.fill(&ring);
    if cfg.mode == Mode::Twolevel {
        let eta = default_eta(&ring);
        if let Some(tl) = cfg.twolevel.as_mut() {
            tl.eta.get_or_insert(eta);
            tl.oracle_grid.get_or_insert(oracle_grid_2level_default());
        }
    } else {
        cfg.system.oracle_grid.get_or_insert(oracle_grid_default());
    }
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub mode: Mode,
    /// SHA-256 of the canonical JSON form of `config`.
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub seeds: BTreeMap<String, u64>,
    pub workers: usize,
    pub wall_clock_seconds: f64,
    pub outputs: Vec<OutputFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aborted: Option<String>,
}

pub fn config_hash(cfg: &ExperimentConfig) -> Result<String> {
    let bytes = serde_json::to_vec(cfg)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn file_hash(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn csv(&mut self, name: &str) -> Result<csv::Writer<BufWriter<File>>> {
        self.files.push(name.to_string());
        Ok(csv::Writer::from_writer(BufWriter::new(File::create(
            self.dir.join(name),
        )?)))
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.files.push(name.to_string());
        let mut w = BufWriter::new(File::create(self.dir.join(name))?);
        serde_json::to_writer_pretty(&mut w, value)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    fn text(&mut self, name: &str) -> Result<BufWriter<File>> {
        self.files.push(name.to_string());
        Ok(BufWriter::new(File::create(self.dir.join(name))?))
    }

    fn hashed(&self) -> Result<Vec<OutputFile>> {
        self.files
            .iter()
            .map(|f| {
                Ok(OutputFile {
                    path: f.clone(),
                    sha256: file_hash(&self.dir.join(f))?,
                })
            })
            .collect()
    }
}

/// Result of [`run_experiment`]; `aborted` is set when an inversion run
/// stopped on a numerical failure (outputs are still written).
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub manifest: RunManifest,
    pub manifest_path: PathBuf,
}

/// Runs a resolved config and writes all artifacts into `cfg.output_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, workers: usize) -> Result<RunOutcome> {
    cfg.validate()?;
    let start = Instant::now();
    let mut out = Outputs::new(&cfg.output_dir)?;
    let mut seeds = BTreeMap::new();
    seeds.insert("master".to_string(), cfg.seed);
    let aborted = match cfg.mode {
        Mode::Forward => run_forward(cfg, &mut out, &mut seeds)?,
        Mode::Invert => run_invert(cfg, &mut out, &mut seeds, workers)?,
        Mode::Stability => run_stability(cfg, &mut out, &mut seeds, workers)?,
        Mode::Twolevel => run_twolevel(cfg, &mut out, &mut seeds, workers)?,
    };
    let manifest = RunManifest {
        tool: "qti".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        mode: cfg.mode,
        config_hash: config_hash(cfg)?,
        config: cfg.clone(),
        seeds,
        workers,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        outputs: out.hashed()?,
        aborted,
    };
    let manifest_path = cfg.output_dir.join("manifest.json");
    let mut w = BufWriter::new(File::create(&manifest_path)?);
    serde_json::to_writer_pretty(&mut w, &manifest)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(RunOutcome {
        manifest,
        manifest_path,
    })
}

fn truth_potential(cfg: &ExperimentConfig) -> Result<&TruthPotential> {
    cfg.system
        .truth
        .as_ref()
        .ok_or_else(|| invalid("system.truth", "required"))
}

fn run_forward(
    cfg: &ExperimentConfig,
    out: &mut Outputs,
    seeds: &mut BTreeMap<String, u64>,
) -> Result<Option<String>> {
    let ring = cfg.ring()?;
    let truth = truth_potential(cfg)?;
    let seed = mix_seed(&[cfg.seed, 0xf0]);
    seeds.insert("forward".into(), seed);
    let lcfg = cfg.sampler.build(&ring, seed)?;
    let train = cfg.train()?;
    let test = cfg.test()?;
    let all: Vec<(&str, Observable)> = train
        .iter()
        .map(|o| ("train", *o))
        .chain(test.iter().map(|o| ("test", *o)))
        .collect();
    let obs: Vec<Observable> = all.iter().map(|(_, o)| *o).collect();
    let est = forward_estimate(truth, &obs, &ring, &lcfg)?;
    let grid = cfg.system.oracle_grid.unwrap_or_else(oracle_grid_default);
    let oracle = crate::pimd::ThermalOracle::new(truth, ring.beta, ring.mass, &grid)?;
    let mut w = out.csv("forward.csv")?;
    w.write_record([
        "observable_id",
        "role",
        "mean",
        "std_err",
        "two_std_err",
        "n_samples",
        "oracle",
    ])?;
    for (i, ((role, o), e)) in all.iter().zip(&est).enumerate() {
        w.write_record([
            i.to_string(),
            role.to_string(),
            e.mean.to_string(),
            e.std_err.to_string(),
            (2.0 * e.std_err).to_string(),
            e.n_samples.to_string(),
            oracle.average(o).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(None)
}

/// Means of `replicas` independent forward runs.
fn replicated<F>(replicas: usize, seed: u64, n: usize, mut f: F) -> Result<Vec<f64>>
where
    F: FnMut(u64) -> Result<Vec<f64>>,
{
    let mut acc = vec![0.0; n];
    for r in 0..replicas {
        let v = f(mix_seed(&[seed, r as u64]))?;
        for (a, x) in acc.iter_mut().zip(v) {
            *a += x;
        }
    }
    Ok(acc.iter().map(|a| a / replicas as f64).collect())
}

/// `(training observations, ground-truth test values)` for the 1-level modes.
fn one_level_truth(
    cfg: &ExperimentConfig,
    train: &[Observable],
    test: &[Observable],
    seeds: &mut BTreeMap<String, u64>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let inv = &cfg.inversion;
    let ring = cfg.ring()?;
    let seed = mix_seed(&[cfg.seed, 0x7a]);
    let (y, t) = match (&inv.observations, &inv.test_truth) {
        (Some(y), Some(t)) => (y.clone(), t.clone()),
        _ => {
            seeds.insert("truth".into(), seed);
            let truth = truth_potential(cfg)?;
            let obs: Vec<Observable> = train.iter().chain(test).copied().collect();
            let all = replicated(inv.truth_replicas, seed, obs.len(), |s| {
                let lcfg = cfg.sampler.build(&ring, s)?;
                Ok(forward_estimate(truth, &obs, &ring, &lcfg)?
                    .iter()
                    .map(|e| e.mean)
                    .collect())
            })?;
            let (a, b) = all.split_at(train.len());
            (
                inv.observations.clone().unwrap_or_else(|| a.to_vec()),
                inv.test_truth.clone().unwrap_or_else(|| b.to_vec()),
            )
        }
    };
    Ok((y, t))
}

fn add_noise(
    cfg: &ExperimentConfig,
    y: Vec<f64>,
    seeds: &mut BTreeMap<String, u64>,
) -> Result<Vec<f64>> {
    if !cfg.inversion.noisy_observations {
        return Ok(y);
    }
    let seed = mix_seed(&[cfg.seed, 0x0b5e]);
    seeds.insert("observation_noise".into(), seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eta = cfg.noise_model()?.sample(y.len(), &mut rng)?;
    Ok(y.iter().zip(eta).map(|(a, b)| a + b).collect())
}

fn inversion_config(cfg: &ExperimentConfig, noise: NoiseModel) -> Result<InversionConfig> {
    let ring = cfg.ring()?;
    let inv = &cfg.inversion;
    Ok(InversionConfig {
        rho: inv.rho,
        n_proposals: inv.n_proposals,
        n_runs: inv.n_runs,
        t_ac: inv.t_ac,
        burn_in: inv.burn_in,
        noise,
        prior: cfg.prior_spec()?,
        ring,
        forward: cfg.sampler.build(&ring, 0)?,
        seed: mix_seed(&[cfg.seed, 0x1a]),
    })
}

fn run_invert(
    cfg: &ExperimentConfig,
    out: &mut Outputs,
    seeds: &mut BTreeMap<String, u64>,
    workers: usize,
) -> Result<Option<String>> {
    let train = cfg.train()?;
    let test = cfg.test()?;
    let (y_clean, truth_test) = one_level_truth(cfg, &train, &test, seeds)?;
    let y = add_noise(cfg, y_clean, seeds)?;
    let icfg = inversion_config(cfg, cfg.noise_model()?)?;
    seeds.insert("inversion".into(), icfg.seed);
    let model = OneLevelModel::new(&icfg, train, test.clone());
    let res = run_inversion(&model, &y, &icfg, workers)?;

    let ring = cfg.ring()?;
    let grid = cfg.system.oracle_grid.unwrap_or_else(oracle_grid_default);
    let oracle_vals = match &cfg.system.truth {
        Some(t) => {
            let o = crate::pimd::ThermalOracle::new(t, ring.beta, ring.mass, &grid)?;
            Some(test.iter().map(|a| o.average(a)).collect::<Vec<f64>>())
        }
        None => None,
    };
    write_inversion_outputs(
        cfg,
        out,
        &res,
        &y,
        &truth_test,
        oracle_vals.as_deref(),
        &icfg,
        |v| {
            v.coeffs()
                .iter()
                .zip(icfg.prior.gamma())
                .map(|(a, g)| a / g)
                .collect()
        },
    )?;

    // averaged potential on a grid
    let xs: Vec<f64> = cfg.output.potential_grid.points().collect();
    let per_run: Vec<Vec<f64>> = res
        .chains
        .iter()
        .map(|c| {
            let states: Vec<&PotentialCoeffs> = c.records[1..]
                .iter()
                .skip(icfg.burn_in)
                .map(|r| &r.v)
                .collect();
            xs.iter()
                .map(|&x| {
                    states.iter().map(|v| v.value(x)).sum::<f64>() / states.len().max(1) as f64
                })
                .collect()
        })
        .collect();
    let initial = model.initial();
    let mut w = out.csv("averaged_potential.csv")?;
    w.write_record(["x", "mean", "two_se_runs", "initial", "truth"])?;
    for (i, &x) in xs.iter().enumerate() {
        let vals: Vec<f64> = per_run.iter().map(|r| r[i]).collect();
        let truth = cfg
            .system
            .truth
            .as_ref()
            .map(|t| t.value(x))
            .unwrap_or(f64::NAN);
        w.write_record([
            x.to_string(),
            mean(&vals).to_string(),
            (2.0 * std_err(&vals)).to_string(),
            initial.value(x).to_string(),
            truth.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(res.aborted().map(str::to_string))
}

fn two_level_truth(
    cfg: &ExperimentConfig,
    tl: &TwoLevelSection,
    train: &[TwoLevelObservable],
    test: &[TwoLevelObservable],
    seeds: &mut BTreeMap<String, u64>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let inv = &cfg.inversion;
    let ring = cfg.ring()?;
    if let (Some(y), Some(t)) = (&inv.observations, &inv.test_truth) {
        return Ok((y.clone(), t.clone()));
    }
    let seed = mix_seed(&[cfg.seed, 0x7a]);
    seeds.insert("truth".into(), seed);
    let obs: Vec<TwoLevelObservable> = train.iter().chain(test).copied().collect();
    let eta = tl.eta.unwrap_or_else(|| default_eta(&ring));
    let all = replicated(inv.truth_replicas, seed, obs.len(), |s| {
        let lcfg = cfg.sampler.build(&ring, s)?;
        Ok(pimd_sh_estimate(&tl.truth, &obs, &ring, &lcfg, eta)?
            .iter()
            .map(|e| e.mean)
            .collect())
    })?;
    let (a, b) = all.split_at(train.len());
    Ok((
        inv.observations.clone().unwrap_or_else(|| a.to_vec()),
        inv.test_truth.clone().unwrap_or_else(|| b.to_vec()),
    ))
}

fn run_twolevel(
    cfg: &ExperimentConfig,
    out: &mut Outputs,
    seeds: &mut BTreeMap<String, u64>,
    workers: usize,
) -> Result<Option<String>> {
    let tl = cfg
        .twolevel
        .as_ref()
        .ok_or_else(|| invalid("twolevel", "required"))?;
    let ring = cfg.ring()?;
    let train: Vec<TwoLevelObservable> =
        tl.train.iter().map(|o| o.build()).collect::<Result<_>>()?;
    let test: Vec<TwoLevelObservable> = tl.test.iter().map(|o| o.build()).collect::<Result<_>>()?;
    let (y_clean, truth_test) = two_level_truth(cfg, tl, &train, &test, seeds)?;
    let y = add_noise(cfg, y_clean, seeds)?;
    let icfg = inversion_config(cfg, cfg.noise_model()?)?;
    seeds.insert("inversion".into(), icfg.seed);
    let level = icfg.prior.truncation();
    let mut initial_coupling = tl.truth.v01.clone();
    for c in initial_coupling.iter_mut() {
        c.amplitude = tl.amplitude_mean;
    }
    let model = TwoLevelModel {
        prior: icfg.prior.clone(),
        amplitude_mean: tl.amplitude_mean,
        ring,
        forward: icfg.forward,
        eta: tl.eta.unwrap_or_else(|| default_eta(&ring)),
        train,
        test: test.clone(),
        initial: TwoLevelPotential::new(
            PotentialCoeffs::harmonic(level),
            PotentialCoeffs::harmonic(level),
            initial_coupling,
        )?,
    };
    let res = run_inversion(&model, &y, &icfg, workers)?;
    let grid = tl.oracle_grid.unwrap_or_else(oracle_grid_2level_default);
    let oracle = crate::twolevel::TwoLevelOracle::new(&tl.truth, ring.beta, ring.mass, &grid)?;
    let oracle_vals: Vec<f64> = test.iter().map(|a| oracle.average(a)).collect();
    let gamma = icfg.prior.gamma().to_vec();
    let amp_mean = tl.amplitude_mean;
    write_inversion_outputs(
        cfg,
        out,
        &res,
        &y,
        &truth_test,
        Some(&oracle_vals),
        &icfg,
        |v| {
            v.v00
                .coeffs()
                .iter()
                .zip(&gamma)
                .map(|(a, g)| a / g)
                .chain(v.v11.coeffs().iter().zip(&gamma).map(|(a, g)| a / g))
                .chain(v.v01.iter().map(|c| c.amplitude / amp_mean))
                .collect()
        },
    )?;

    let xs: Vec<f64> = cfg.output.potential_grid.points().collect();
    let component = |v: &TwoLevelPotential, which: usize, x: f64| match which {
        0 => v.v00.value(x),
        1 => v.v11.value(x),
        _ => v.coupling(x),
    };
    let per_run: Vec<Vec<[f64; 3]>> = res
        .chains
        .iter()
        .map(|c| {
            let states: Vec<&TwoLevelPotential> = c.records[1..]
                .iter()
                .skip(icfg.burn_in)
                .map(|r| &r.v)
                .collect();
            let n = states.len().max(1) as f64;
            xs.iter()
                .map(|&x| {
                    let mut acc = [0.0; 3];
                    for v in &states {
                        for (k, a) in acc.iter_mut().enumerate() {
                            *a += component(v, k, x);
                        }
                    }
                    acc.map(|a| a / n)
                })
                .collect()
        })
        .collect();
    let mut w = out.csv("averaged_potential.csv")?;
    w.write_record([
        "x",
        "v00_mean",
        "v00_two_se_runs",
        "v11_mean",
        "v11_two_se_runs",
        "v01_mean",
        "v01_two_se_runs",
        "v00_truth",
        "v11_truth",
        "v01_truth",
    ])?;
    for (i, &x) in xs.iter().enumerate() {
        let mut row = vec![x.to_string()];
        for k in 0..3 {
            let vals: Vec<f64> = per_run.iter().map(|r| r[i][k]).collect();
            row.push(mean(&vals).to_string());
            row.push((2.0 * std_err(&vals)).to_string());
        }
        for k in 0..3 {
            row.push(component(&tl.truth, k, x).to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(res.aborted().map(str::to_string))
}

#[allow(clippy::too_many_arguments)]
fn write_inversion_outputs<P: Serialize, F>(
    cfg: &ExperimentConfig,
    out: &mut Outputs,
    res: &InversionResult<P>,
    y_star: &[f64],
    truth_test: &[f64],
    oracle: Option<&[f64]>,
    icfg: &InversionConfig,
    coordinates: F,
) -> Result<()>
where
    F: Fn(&P) -> Vec<f64>,
{
    let n_test = truth_test.len();
    let n_train = y_star.len();

    // per-run chains
    for c in &res.chains {
        let mut w = out.csv(&format!("chain_run{}.csv", c.run))?;
        let mut head = vec![
            "iteration".to_string(),
            "phi".into(),
            "phi_proposed".into(),
            "accepted".into(),
        ];
        head.extend((0..n_train).map(|i| format!("y_hat_{i}")));
        head.extend((0..n_test).map(|j| format!("test_{j}")));
        w.write_record(&head)?;
        for r in &c.records {
            let mut row = vec![
                r.iteration.to_string(),
                r.phi.to_string(),
                r.phi_proposed.to_string(),
                u8::from(r.accepted).to_string(),
            ];
            row.extend(r.y_hat.iter().map(|x| x.to_string()));
            row.extend(r.test.iter().map(|x| x.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;

        let mut s = out.text(&format!("potentials_run{}.jsonl", c.run))?;
        for r in c
            .records
            .iter()
            .filter(|r| r.iteration % cfg.output.snapshot_every == 0)
        {
            serde_json::to_writer(
                &mut s,
                &serde_json::json!({"iteration": r.iteration, "v": r.v}),
            )?;
            s.write_all(b"\n")?;
        }
        s.flush()?;
    }

    // observations used
    let mut w = out.csv("observations.csv")?;
    w.write_record(["observable_id", "y_star"])?;
    for (i, y) in y_star.iter().enumerate() {
        w.write_record([i.to_string(), y.to_string()])?;
    }
    w.flush()?;

    // final predictions
    let mut w = out.csv("predictions.csv")?;
    w.write_record([
        "observable_id",
        "initial",
        "mean",
        "se_runs",
        "two_se_runs",
        "se_pooled",
        "two_se_pooled",
        "truth",
        "oracle",
    ])?;
    for (j, p) in res.predictions.iter().enumerate() {
        w.write_record([
            j.to_string(),
            p.initial.to_string(),
            p.mean.to_string(),
            p.se_runs.to_string(),
            (2.0 * p.se_runs).to_string(),
            p.se_pooled.to_string(),
            (2.0 * p.se_pooled).to_string(),
            truth_test[j].to_string(),
            oracle.map(|o| o[j]).unwrap_or(f64::NAN).to_string(),
        ])?;
    }
    w.flush()?;

    // running averages across runs
    let running: Vec<Vec<Vec<f64>>> = (0..n_test).map(|j| res.running_means(j)).collect();
    let len = res
        .chains
        .iter()
        .map(|c| c.records.len() - 1)
        .min()
        .unwrap_or(0);
    let mut w = out.csv("running_predictions.csv")?;
    w.write_record(["iteration", "observable_id", "mean", "two_se_runs", "truth"])?;
    for k in 0..len {
        for (j, per_run) in running.iter().enumerate() {
            let vals: Vec<f64> = per_run.iter().map(|r| r[k]).collect();
            w.write_record([
                (k + 1).to_string(),
                j.to_string(),
                mean(&vals).to_string(),
                (2.0 * std_err(&vals)).to_string(),
                truth_test[j].to_string(),
            ])?;
        }
    }
    w.flush()?;

    // acceptance
    let mut w = out.csv("acceptance.csv")?;
    w.write_record(["run", "iteration", "accepted", "transition_ratio"])?;
    for c in &res.chains {
        for pair in c.records.windows(2) {
            let ratio = (pair[0].phi - pair[1].phi_proposed).min(0.0).exp();
            w.write_record([
                c.run.to_string(),
                pair[1].iteration.to_string(),
                u8::from(pair[1].accepted).to_string(),
                ratio.to_string(),
            ])?;
        }
    }
    w.flush()?;
    let mut w = out.csv("acceptance_rate.csv")?;
    w.write_record(["run", "acceptance_rate"])?;
    for c in &res.chains {
        w.write_record([c.run.to_string(), c.acceptance_rate().to_string()])?;
    }
    w.write_record(["all".to_string(), res.acceptance_rate.to_string()])?;
    w.flush()?;

    // autocorrelation averaged over runs
    let series_len = res
        .chains
        .iter()
        .map(|c| c.records.len().saturating_sub(1 + icfg.burn_in))
        .min()
        .unwrap_or(0);
    let max_lag = cfg.output.max_lag.min(series_len.saturating_sub(1));
    let n_coord = res
        .chains
        .first()
        .map(|c| coordinates(&c.records[0].v).len())
        .unwrap_or(0);
    let mut columns: Vec<(String, Vec<f64>)> = Vec::new();
    let mut degenerate = Vec::new();
    let mut avg_acf =
        |name: String, series: &dyn Fn(&crate::inversion::Chain<P>) -> Vec<f64>| -> Result<()> {
            let mut acc = vec![0.0; max_lag + 1];
            for c in &res.chains {
                let s: Vec<f64> = series(c).into_iter().skip(icfg.burn_in).collect();
                let a = autocorrelation(&s, max_lag)?;
                if a.degenerate {
                    degenerate.push(format!("{name}@run{}", c.run));
                }
                for (x, v) in acc.iter_mut().zip(&a.values) {
                    *x += v / res.chains.len() as f64;
                }
            }
            columns.push((name, acc));
            Ok(())
        };
    if series_len > 1 {
        for j in 0..n_test {
            avg_acf(format!("test_{j}"), &|c| c.test_series(j))?;
        }
        for i in 0..n_coord {
            avg_acf(format!("xi_{i}"), &|c| {
                c.records[1..]
                    .iter()
                    .map(|r| coordinates(&r.v)[i])
                    .collect()
            })?;
        }
    }
    let mut w = out.csv("autocorrelation.csv")?;
    let mut head = vec!["lag".to_string()];
    head.extend(columns.iter().map(|(n, _)| n.clone()));
    w.write_record(&head)?;
    if !columns.is_empty() {
        for lag in 0..=max_lag {
            let mut row = vec![lag.to_string()];
            row.extend(columns.iter().map(|(_, v)| v[lag].to_string()));
            w.write_record(&row)?;
        }
    }
    w.flush()?;

    let mse = |f: &dyn Fn(usize) -> f64| {
        (0..n_test)
            .map(|j| (f(j) - truth_test[j]).powi(2))
            .sum::<f64>()
            / n_test as f64
    };
    let summary = serde_json::json!({
        "acceptance_rate": res.acceptance_rate,
        "run_acceptance_rates": res.chains.iter().map(|c| c.acceptance_rate()).collect::<Vec<_>>(),
        "mse_initial": mse(&|j| res.predictions[j].initial),
        "mse_final": mse(&|j| res.predictions[j].mean),
        "predictions": res.predictions,
        "truth": truth_test,
        "oracle": oracle,
        "degenerate_autocorrelation": degenerate,
        "aborted": res.chains.iter().filter_map(|c| c.aborted.clone()).collect::<Vec<_>>(),
    });
    out.json("summary.json", &summary)
}

fn run_stability(
    cfg: &ExperimentConfig,
    out: &mut Outputs,
    seeds: &mut BTreeMap<String, u64>,
    workers: usize,
) -> Result<Option<String>> {
    let st = cfg
        .stability
        .as_ref()
        .ok_or_else(|| invalid("stability", "required"))?;
    let train = cfg.train()?;
    let test = cfg.test()?;
    let (y_clean, truth_test) = one_level_truth(cfg, &train, &test, seeds)?;
    let mut base = inversion_config(cfg, NoiseModel::scalar(st.gamma_scales[0])?)?;
    if let Some(r) = st.n_runs {
        base.n_runs = r;
    }
    if let Some(p) = st.n_proposals {
        base.n_proposals = p;
    }
    seeds.insert("inversion".into(), base.seed);
    let model = OneLevelModel::new(&base, train, test);
    let sweep = SweepConfig {
        gamma_scales: st.gamma_scales.clone(),
        draws: st.draws,
    };
    let report = stability_sweep(&model, &y_clean, &truth_test, &sweep, &base, workers)?;
    {
        let name = "stability.csv";
        out.files.push(name.into());
        let f = BufWriter::new(File::create(out.dir.join(name))?);
        report.write_csv(f)?;
    }
    out.json("stability_slopes.json", &report.slopes_json())?;
    let mut w = out.csv("stability_predictions.csv")?;
    w.write_record(["scale", "draw", "observable_id", "prediction", "truth"])?;
    for (s, draws) in report.predictions.iter().enumerate() {
        for (d, preds) in draws.iter().enumerate() {
            for (j, p) in preds.iter().enumerate() {
                w.write_record([
                    report.gamma_scales[s].to_string(),
                    d.to_string(),
                    j.to_string(),
                    p.to_string(),
                    truth_test[j].to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(None)
}

/// Shared helper for the 2-level oracle used by tests and tools.
pub fn two_level_oracle_values(
    v: &TwoLevelPotential,
    obs: &[TwoLevelObservable],
    ring: &RingParams,
    grid: &GridSpec,
) -> Result<Vec<f64>> {
    obs.iter()
        .map(|a| exact_thermal_average_2level(v, a, ring.beta, ring.mass, grid))
        .collect()
}

/// 1-level oracle values for a list of observables.
pub fn one_level_oracle_values<P: Potential + ?Sized>(
    v: &P,
    obs: &[Observable],
    ring: &RingParams,
    grid: &GridSpec,
) -> Result<Vec<f64>> {
    obs.iter()
        .map(|a| exact_thermal_average(v, a, ring.beta, ring.mass, grid))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const SHOWCASE: &str = include_str!("../examples/showcase1.cfg");

    #[test]
    fn empty_document_lists_required_fields() {
        let e = parse_config("").unwrap_err();
        let msg = e.to_string();
        assert!(
            msg.contains("mode") && msg.contains("seed") && msg.contains("system"),
            "{msg}"
        );
    }

    #[test]
    fn duplicate_key_is_parse_error_with_line() {
        let text = "mode = \"forward\"\nseed = 1\nseed = 2\n";
        match parse_config(text) {
            Err(Error::ConfigParse { line, .. }) => assert_eq!(line, Some(3)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_key_rejected() {
        let text = SHOWCASE.replacen("seed =", "sede = 3\nseed =", 1);
        assert!(matches!(
            parse_config(&text),
            Err(Error::ConfigParse { .. })
        ));
    }

    #[test]
    fn showcase_recipe() {
        let cfg = parse_config(SHOWCASE).unwrap();
        assert_eq!(cfg.mode, Mode::Invert);
        assert_eq!(cfg.system.mass, 10.0);
        assert_eq!(cfg.system.beads, 16);
        assert_eq!(cfg.prior_spec().unwrap().truncation(), 12);
        assert_eq!(cfg.noise, Some(NoiseModel::scalar(1e-3).unwrap()));
        assert_eq!(cfg.inversion.rho, 0.95);
        assert_eq!(cfg.inversion.t_ac, 50);
        assert_eq!((cfg.inversion.n_runs, cfg.inversion.n_proposals), (4, 400));
        let train = cfg.train().unwrap();
        assert_eq!(train.len(), 9);
        for (i, o) in train.iter().enumerate() {
            assert_eq!(*o, Observable::gaussian(i as f64 / 2.0 - 2.0, 1.0));
        }
        assert_eq!(cfg.test().unwrap().len(), 5);
        let r = resolve(
            cfg,
            &Overrides {
                paper_scale: true,
                seed: Some(9),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(
            (r.inversion.n_runs, r.inversion.n_proposals, r.seed),
            (10, 1600, 9)
        );
        assert!(r.sampler.dt.is_some() && r.system.oracle_grid.is_some());
    }

    #[test]
    fn validation_names_field() {
        let text = SHOWCASE.replace("rho = 0.95", "rho = 1.5");
        match parse_config(&text) {
            Err(Error::ConfigValidation { field, .. }) => assert_eq!(field, "inversion.rho"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn config_hash_is_stable() {
        let cfg = parse_config(SHOWCASE).unwrap();
        assert_eq!(
            config_hash(&cfg).unwrap(),
            config_hash(&cfg.clone()).unwrap()
        );
        let mut other = cfg.clone();
        other.seed += 1;
        assert_ne!(config_hash(&cfg).unwrap(), config_hash(&other).unwrap());
    }
}
