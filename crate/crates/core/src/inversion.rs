//! Bayesian inversion sampler: proposal, forward evaluation, Metropolis
//! decision and chain bookkeeping, plus the predictions drawn from the chain.
//!
//! The forward map is pluggable through [`ForwardModel`]; the 1-level PIMD
//! solver, the 2-level PIMD-SH solver and a deterministic linear surrogate
//! are provided.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::basis::{PotentialCoeffs, PriorSpec};
use crate::error::{check_len, Error, Result};
use crate::pimd::{forward_estimate, LangevinConfig};
use crate::ringpoly::{Observable, RingParams};
use crate::stats::{mean, mix_seed};
use crate::twolevel::{pimd_sh_estimate, TwoLevelObservable, TwoLevelPotential};

/// Observation noise covariance `Γ_η`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum NoiseForm {
    /// `scale · I`
    Scalar {
        scale: f64,
    },
    Diagonal {
        entries: Vec<f64>,
    },
    Full {
        matrix: Vec<Vec<f64>>,
    },
}

/// Validated noise model with its inverse and Cholesky factor cached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NoiseForm", into = "NoiseForm")]
pub struct NoiseModel {
    form: NoiseForm,
    inverse: Option<DMatrix<f64>>,
    chol: Option<DMatrix<f64>>,
}

impl TryFrom<NoiseForm> for NoiseModel {
    type Error = Error;

    fn try_from(form: NoiseForm) -> Result<Self> {
        match &form {
            NoiseForm::Scalar { scale } => {
                if !(scale.is_finite() && *scale > 0.0) {
                    return Err(Error::param("noise", "scale must be positive"));
                }
                Ok(Self {
                    form,
                    inverse: None,
                    chol: None,
                })
            }
            NoiseForm::Diagonal { entries } => {
                if entries.is_empty() || entries.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
                    return Err(Error::param("noise", "diagonal entries must be positive"));
                }
                Ok(Self {
                    form,
                    inverse: None,
                    chol: None,
                })
            }
            NoiseForm::Full { matrix } => {
                let n = matrix.len();
                if n == 0 || matrix.iter().any(|r| r.len() != n) {
                    return Err(Error::param(
                        "noise",
                        "covariance must be a non-empty square matrix",
                    ));
                }
                let m = DMatrix::from_fn(n, n, |i, j| matrix[i][j]);
                for i in 0..n {
                    for j in 0..i {
                        let tol = 1e-12 * (m[(i, j)].abs() + m[(j, i)].abs()).max(1e-300);
                        if (m[(i, j)] - m[(j, i)]).abs() > tol {
                            return Err(Error::param("noise", "covariance must be symmetric"));
                        }
                    }
                }
                let chol = m
                    .clone()
                    .cholesky()
                    .ok_or_else(|| Error::param("noise", "covariance must be positive definite"))?;
                Ok(Self {
                    inverse: Some(chol.inverse()),
                    chol: Some(chol.l()),
                    form,
                })
            }
        }
    }
}

impl From<NoiseModel> for NoiseForm {
    fn from(n: NoiseModel) -> Self {
        n.form
    }
}

impl NoiseModel {
    pub fn scalar(scale: f64) -> Result<Self> {
        NoiseForm::Scalar { scale }.try_into()
    }

    pub fn diagonal(entries: Vec<f64>) -> Result<Self> {
        NoiseForm::Diagonal { entries }.try_into()
    }

    pub fn full(matrix: Vec<Vec<f64>>) -> Result<Self> {
        NoiseForm::Full { matrix }.try_into()
    }

    pub fn form(&self) -> &NoiseForm {
        &self.form
    }

    /// Fixed observation dimension, or `None` for the scalar form.
    pub fn dim(&self) -> Option<usize> {
        match &self.form {
            NoiseForm::Scalar { .. } => None,
            NoiseForm::Diagonal { entries } => Some(entries.len()),
            NoiseForm::Full { matrix } => Some(matrix.len()),
        }
    }

    fn check_dim(&self, n: usize) -> Result<()> {
        match self.dim() {
            Some(d) => check_len(d, n),
            None => Ok(()),
        }
    }

    /// `Γ⁻¹ x`.
    pub fn apply_inverse(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x.len())?;
        Ok(match &self.form {
            NoiseForm::Scalar { scale } => x.iter().map(|v| v / scale).collect(),
            NoiseForm::Diagonal { entries } => x.iter().zip(entries).map(|(v, e)| v / e).collect(),
            NoiseForm::Full { .. } => {
                let inv = self.inverse.as_ref().expect("cached inverse");
                (inv * DVector::from_column_slice(x))
                    .iter()
                    .copied()
                    .collect()
            }
        })
    }

    /// One draw of `η ~ N(0, Γ)` of length `n`.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<f64>> {
        self.check_dim(n)?;
        let g: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        Ok(match &self.form {
            NoiseForm::Scalar { scale } => g.iter().map(|x| x * scale.sqrt()).collect(),
            NoiseForm::Diagonal { entries } => {
                g.iter().zip(entries).map(|(x, e)| x * e.sqrt()).collect()
            }
            NoiseForm::Full { .. } => {
                let l = self.chol.as_ref().expect("cached factor");
                (l * DVector::from_vec(g)).iter().copied().collect()
            }
        })
    }
}

/// `Φ = ⟨ŷ, Γ⁻¹(½ŷ − y*)⟩`.
pub fn neg_log_likelihood(y_hat: &[f64], y_star: &[f64], noise: &NoiseModel) -> Result<f64> {
    check_len(y_star.len(), y_hat.len())?;
    let r: Vec<f64> = y_hat.iter().zip(y_star).map(|(h, s)| 0.5 * h - s).collect();
    let w = noise.apply_inverse(&r)?;
    Ok(y_hat.iter().zip(&w).map(|(a, b)| a * b).sum())
}

/// Accept with probability `exp(min{0, φ_old − φ_new})`, one uniform draw.
pub fn mh_decide<R: Rng + ?Sized>(phi_old: f64, phi_new: f64, rng: &mut R) -> bool {
    let u: f64 = rng.random();
    u < (phi_old - phi_new).min(0.0).exp()
}

/// `ρξ + √(1−ρ²) g`.
pub fn pcn_gaussian<R: Rng + ?Sized>(xi: f64, rho: f64, rng: &mut R) -> f64 {
    let g: f64 = rng.sample(StandardNormal);
    rho * xi + (1.0 - rho * rho).max(0.0).sqrt() * g
}

/// `(ρ√r + ρ̄g₁)² + (ρ̄g₂)²` with `ρ̄ = √((1−ρ²)/2)`; preserves `Exp(1)`.
pub fn pcn_exponential<R: Rng + ?Sized>(r: f64, rho: f64, rng: &mut R) -> f64 {
    let rb = ((1.0 - rho * rho).max(0.0) / 2.0).sqrt();
    let g1: f64 = rng.sample(StandardNormal);
    let g2: f64 = rng.sample(StandardNormal);
    let a = rho * r.sqrt() + rb * g1;
    let b = rb * g2;
    a * a + b * b
}

/// pCN step on every normalized coordinate `ξ_i = v_i / γ_i`.
pub fn propose_potential<R: Rng + ?Sized>(
    v: &PotentialCoeffs,
    prior: &PriorSpec,
    rho: f64,
    rng: &mut R,
) -> Result<PotentialCoeffs> {
    check_len(prior.gamma().len(), v.coeffs().len())?;
    let out = v
        .coeffs()
        .iter()
        .zip(prior.gamma())
        .map(|(vi, g)| g * pcn_gaussian(vi / g, rho, rng))
        .collect();
    PotentialCoeffs::new(out)
}

/// Maps a parameter to its training and testing predictions.
pub trait ForwardModel: Sync {
    type Param: Clone + Serialize + Send + Sync;

    fn initial(&self) -> Self::Param;

    fn propose(&self, current: &Self::Param, rho: f64, rng: &mut ChaCha8Rng)
        -> Result<Self::Param>;

    /// `(training predictions, testing predictions)`.
    fn evaluate(&self, v: &Self::Param, seed: u64) -> Result<(Vec<f64>, Vec<f64>)>;

    fn n_train(&self) -> usize;

    fn n_test(&self) -> usize;
}

fn split(all: Vec<crate::stats::ForwardEstimate>, n_train: usize) -> (Vec<f64>, Vec<f64>) {
    let means: Vec<f64> = all.iter().map(|e| e.mean).collect();
    let (a, b) = means.split_at(n_train);
    (a.to_vec(), b.to_vec())
}

/// PIMD forward map over Hermite coefficients.
#[derive(Debug, Clone)]
pub struct OneLevelModel {
    pub prior: PriorSpec,
    pub ring: RingParams,
    pub forward: LangevinConfig,
    pub train: Vec<Observable>,
    pub test: Vec<Observable>,
    pub initial: PotentialCoeffs,
}

impl OneLevelModel {
    /// Starts from `V_o` (all coefficients zero).
    pub fn new(cfg: &InversionConfig, train: Vec<Observable>, test: Vec<Observable>) -> Self {
        Self {
            initial: PotentialCoeffs::harmonic(cfg.prior.truncation()),
            prior: cfg.prior.clone(),
            ring: cfg.ring,
            forward: cfg.forward,
            train,
            test,
        }
    }
}

impl ForwardModel for OneLevelModel {
    type Param = PotentialCoeffs;

    fn initial(&self) -> PotentialCoeffs {
        self.initial.clone()
    }

    fn propose(
        &self,
        current: &PotentialCoeffs,
        rho: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<PotentialCoeffs> {
        propose_potential(current, &self.prior, rho, rng)
    }

    fn evaluate(&self, v: &PotentialCoeffs, seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
        let obs: Vec<Observable> = self.train.iter().chain(&self.test).copied().collect();
        let est = forward_estimate(v, &obs, &self.ring, &self.forward.with_seed(seed))?;
        Ok(split(est, self.train.len()))
    }

    fn n_train(&self) -> usize {
        self.train.len()
    }

    fn n_test(&self) -> usize {
        self.test.len()
    }
}

/// PIMD-SH forward map; diagonals get the Gaussian prior, coupling
/// amplitudes an exponential prior with mean `amplitude_mean`.
#[derive(Debug, Clone)]
pub struct TwoLevelModel {
    pub prior: PriorSpec,
    pub amplitude_mean: f64,
    pub ring: RingParams,
    pub forward: LangevinConfig,
    pub eta: f64,
    pub train: Vec<TwoLevelObservable>,
    pub test: Vec<TwoLevelObservable>,
    pub initial: TwoLevelPotential,
}

impl ForwardModel for TwoLevelModel {
    type Param = TwoLevelPotential;

    fn initial(&self) -> TwoLevelPotential {
        self.initial.clone()
    }

    fn propose(
        &self,
        current: &TwoLevelPotential,
        rho: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<TwoLevelPotential> {
        let v00 = propose_potential(&current.v00, &self.prior, rho, rng)?;
        let v11 = propose_potential(&current.v11, &self.prior, rho, rng)?;
        let mut v01 = current.v01.clone();
        for c in v01.iter_mut() {
            let r = pcn_exponential(c.amplitude / self.amplitude_mean, rho, rng);
            // an exact zero would break the positivity invariant
            c.amplitude = (r * self.amplitude_mean).max(f64::MIN_POSITIVE);
        }
        TwoLevelPotential::new(v00, v11, v01)
    }

    fn evaluate(&self, v: &TwoLevelPotential, seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
        let obs: Vec<TwoLevelObservable> = self.train.iter().chain(&self.test).copied().collect();
        let est = pimd_sh_estimate(v, &obs, &self.ring, &self.forward.with_seed(seed), self.eta)?;
        Ok(split(est, self.train.len()))
    }

    fn n_train(&self) -> usize {
        self.train.len()
    }

    fn n_test(&self) -> usize {
        self.test.len()
    }
}

/// Deterministic linear forward map `G(V) = (v_i)_{i ∈ picks}`, used to
/// check the sampler against a quadrature posterior.
#[derive(Debug, Clone)]
pub struct LinearSurrogate {
    pub prior: PriorSpec,
    pub picks: Vec<usize>,
}

impl ForwardModel for LinearSurrogate {
    type Param = PotentialCoeffs;

    fn initial(&self) -> PotentialCoeffs {
        PotentialCoeffs::harmonic(self.prior.truncation())
    }

    fn propose(
        &self,
        current: &PotentialCoeffs,
        rho: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<PotentialCoeffs> {
        propose_potential(current, &self.prior, rho, rng)
    }

    fn evaluate(&self, v: &PotentialCoeffs, _seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
        let y: Vec<f64> = self.picks.iter().map(|&i| v.coeffs()[i]).collect();
        Ok((y.clone(), y))
    }

    fn n_train(&self) -> usize {
        self.picks.len()
    }

    fn n_test(&self) -> usize {
        self.picks.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InversionConfig {
    pub rho: f64,
    pub n_proposals: usize,
    pub n_runs: usize,
    pub t_ac: usize,
    /// Leading chain states left out of the predictions.
    #[serde(default)]
    pub burn_in: usize,
    pub noise: NoiseModel,
    pub prior: PriorSpec,
    pub ring: RingParams,
    pub forward: LangevinConfig,
    #[serde(default)]
    pub seed: u64,
}

impl InversionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::param("rho", "must lie in (0, 1)"));
        }
        if self.n_proposals == 0 || self.n_runs == 0 {
            return Err(Error::param(
                "n_proposals",
                "need at least one proposal and one run",
            ));
        }
        if self.t_ac == 0 {
            return Err(Error::param("t_ac", "must be at least 1"));
        }
        if self.burn_in >= self.n_proposals {
            return Err(Error::param("burn_in", "must be smaller than n_proposals"));
        }
        self.ring.validate()?;
        self.forward.validate()
    }
}

/// One stored chain state after the decision at `iteration`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainRecord<P> {
    pub iteration: usize,
    pub v: P,
    pub y_hat: Vec<f64>,
    pub phi: f64,
    pub accepted: bool,
    /// `Φ` of the proposal considered at this iteration.
    pub phi_proposed: f64,
    /// Test predictions of the stored state.
    pub test: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Chain<P> {
    pub run: usize,
    pub records: Vec<ChainRecord<P>>,
    /// Set when the forward solver failed and the run stopped early.
    pub aborted: Option<String>,
}

impl<P> Chain<P> {
    /// Fraction of accepted proposals (iteration 0 excluded).
    pub fn acceptance_rate(&self) -> f64 {
        let n = self.records.len().saturating_sub(1);
        if n == 0 {
            return 0.0;
        }
        self.records[1..].iter().filter(|r| r.accepted).count() as f64 / n as f64
    }

    pub fn test_series(&self, j: usize) -> Vec<f64> {
        self.records[1..].iter().map(|r| r.test[j]).collect()
    }
}

/// Per-test-observable summary across runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Prediction {
    /// Prediction of the initial state, averaged over runs.
    pub initial: f64,
    pub mean: f64,
    /// Standard error of the per-run means.
    pub se_runs: f64,
    /// Within-run error treating every `t_ac`-th state as independent,
    /// combined over runs.
    pub se_pooled: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InversionResult<P> {
    pub chains: Vec<Chain<P>>,
    pub predictions: Vec<Prediction>,
    pub acceptance_rate: f64,
}

impl<P> InversionResult<P> {
    pub fn aborted(&self) -> Option<&str> {
        self.chains.iter().find_map(|c| c.aborted.as_deref())
    }

    /// Running mean of test prediction `j` along iterations for each run.
    pub fn running_means(&self, j: usize) -> Vec<Vec<f64>> {
        self.chains
            .iter()
            .map(|c| {
                let mut s = 0.0;
                c.test_series(j)
                    .iter()
                    .enumerate()
                    .map(|(k, x)| {
                        s += x;
                        s / (k + 1) as f64
                    })
                    .collect()
            })
            .collect()
    }
}

/// Seeds: proposal/decision stream and forward solver for `(run, iteration)`.
fn iteration_seeds(master: u64, run: usize, iteration: usize) -> (u64, u64) {
    (
        mix_seed(&[master, run as u64, iteration as u64, 1]),
        mix_seed(&[master, run as u64, iteration as u64, 2]),
    )
}

/// One chain of the proposal–forward–decide loop.
pub fn run_chain<M: ForwardModel>(
    model: &M,
    y_star: &[f64],
    cfg: &InversionConfig,
    run: usize,
) -> Result<Chain<M::Param>> {
    check_len(model.n_train(), y_star.len())?;
    let v0 = model.initial();
    let (_, fwd0) = iteration_seeds(cfg.seed, run, 0);
    let (y0, t0) = model.evaluate(&v0, fwd0)?;
    let phi0 = neg_log_likelihood(&y0, y_star, &cfg.noise)?;
    let mut records = Vec::with_capacity(cfg.n_proposals + 1);
    records.push(ChainRecord {
        iteration: 0,
        v: v0.clone(),
        y_hat: y0.clone(),
        phi: phi0,
        accepted: true,
        phi_proposed: phi0,
        test: t0.clone(),
    });
    let (mut cur, mut cur_y, mut cur_phi, mut cur_t) = (v0, y0, phi0, t0);
    for k in 1..=cfg.n_proposals {
        let (prop_seed, fwd_seed) = iteration_seeds(cfg.seed, run, k);
        let mut rng = ChaCha8Rng::seed_from_u64(prop_seed);
        let cand = model.propose(&cur, cfg.rho, &mut rng)?;
        let (y, t) = match model.evaluate(&cand, fwd_seed) {
            Ok(r) => r,
            Err(e) if e.is_numerical() => {
                return Ok(Chain {
                    run,
                    records,
                    aborted: Some(format!("iteration {k}: {e}")),
                })
            }
            Err(e) => return Err(e),
        };
        let phi = neg_log_likelihood(&y, y_star, &cfg.noise)?;
        let accepted = phi.is_finite() && mh_decide(cur_phi, phi, &mut rng);
        if accepted {
            cur = cand;
            cur_y = y;
            cur_phi = phi;
            cur_t = t;
        }
        records.push(ChainRecord {
            iteration: k,
            v: cur.clone(),
            y_hat: cur_y.clone(),
            phi: cur_phi,
            accepted,
            phi_proposed: phi,
            test: cur_t.clone(),
        });
    }
    Ok(Chain {
        run,
        records,
        aborted: None,
    })
}

/// Runs `cfg.n_runs` independent chains on up to `workers` threads and
/// summarizes the test predictions. Results do not depend on `workers`.
pub fn run_inversion<M: ForwardModel>(
    model: &M,
    y_star: &[f64],
    cfg: &InversionConfig,
    workers: usize,
) -> Result<InversionResult<M::Param>> {
    cfg.validate()?;
    let n_runs = cfg.n_runs;
    type Slot<P> = Option<Result<Chain<P>>>;
    let slots: Mutex<Vec<Slot<M::Param>>> = Mutex::new((0..n_runs).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, n_runs) {
            s.spawn(|| loop {
                let run = next.fetch_add(1, Ordering::SeqCst);
                if run >= n_runs {
                    break;
                }
                let chain = run_chain(model, y_star, cfg, run);
                slots.lock().unwrap()[run] = Some(chain);
            });
        }
    });
    let chains = slots
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|c| c.expect("every run is scheduled"))
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(chains, model.n_test(), cfg))
}

fn summarize<P>(chains: Vec<Chain<P>>, n_test: usize, cfg: &InversionConfig) -> InversionResult<P> {
    let r = chains.len() as f64;
    let predictions = (0..n_test)
        .map(|j| {
            let initial = chains.iter().map(|c| c.records[0].test[j]).sum::<f64>() / r;
            let mut run_means = Vec::new();
            let mut pooled_var = 0.0;
            for c in &chains {
                let series: Vec<f64> = c.test_series(j).into_iter().skip(cfg.burn_in).collect();
                if series.is_empty() {
                    continue;
                }
                let m = mean(&series);
                run_means.push(m);
                let eff = (series.len() as f64 / cfg.t_ac as f64).max(1.0);
                let var = if series.len() > 1 {
                    crate::stats::variance(&series)
                } else {
                    0.0
                };
                pooled_var += var / eff;
            }
            let k = run_means.len().max(1) as f64;
            Prediction {
                initial,
                mean: mean(&run_means),
                se_runs: crate::stats::std_err(&run_means),
                se_pooled: pooled_var.sqrt() / k,
            }
        })
        .collect();
    let total: usize = chains.iter().map(|c| c.records.len() - 1).sum();
    let acc: usize = chains
        .iter()
        .map(|c| c.records[1..].iter().filter(|x| x.accepted).count())
        .sum();
    InversionResult {
        acceptance_rate: if total == 0 {
            0.0
        } else {
            acc as f64 / total as f64
        },
        chains,
        predictions,
    }
}

/// Normalized empirical autocorrelation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Autocorrelation {
    pub values: Vec<f64>,
    /// The series was constant; `values` is then identically 1.
    pub degenerate: bool,
}

pub fn autocorrelation(series: &[f64], max_lag: usize) -> Result<Autocorrelation> {
    if series.len() <= max_lag {
        return Err(Error::param(
            "max_lag",
            "series must be longer than the largest lag",
        ));
    }
    let m = mean(series);
    let c0: f64 = series.iter().map(|x| (x - m) * (x - m)).sum();
    if c0 == 0.0 || !c0.is_finite() {
        return Ok(Autocorrelation {
            values: vec![1.0; max_lag + 1],
            degenerate: true,
        });
    }
    let values = (0..=max_lag)
        .map(|k| {
            series
                .iter()
                .zip(&series[k..])
                .map(|(a, b)| (a - m) * (b - m))
                .sum::<f64>()
                / c0
        })
        .collect();
    Ok(Autocorrelation {
        values,
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{lag_correlation, variance};

    #[test]
    fn nll_examples() {
        let n = NoiseModel::scalar(1e-3).unwrap();
        assert_eq!(
            neg_log_likelihood(&[0.0, 0.0], &[3.0, -1.0], &n).unwrap(),
            0.0
        );
        let phi = neg_log_likelihood(&[1.0, 1.0], &[1.0, 1.0], &n).unwrap();
        assert!((phi + 1000.0).abs() < 1e-9);
        assert!(matches!(
            neg_log_likelihood(&[1.0], &[1.0, 2.0], &n),
            Err(Error::Dimension { .. })
        ));
    }

    fn two_norm_form(y_hat: &[f64], y_star: &[f64], noise: &NoiseModel) -> f64 {
        let d: Vec<f64> = y_star.iter().zip(y_hat).map(|(s, h)| s - h).collect();
        let a: f64 = d
            .iter()
            .zip(noise.apply_inverse(&d).unwrap())
            .map(|(x, y)| x * y)
            .sum();
        let b: f64 = y_star
            .iter()
            .zip(noise.apply_inverse(y_star).unwrap())
            .map(|(x, y)| x * y)
            .sum();
        0.5 * a - 0.5 * b
    }

    #[test]
    fn nll_forms_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let full = NoiseModel::full(vec![
            vec![2.0, 0.3, 0.1],
            vec![0.3, 1.0, -0.2],
            vec![0.1, -0.2, 0.5],
        ])
        .unwrap();
        let diag = NoiseModel::diagonal(vec![0.1, 2.0, 0.7]).unwrap();
        let sc = NoiseModel::scalar(0.03).unwrap();
        for _ in 0..1000 {
            let y: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let s: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            for n in [&full, &diag, &sc] {
                let a = neg_log_likelihood(&y, &s, n).unwrap();
                let b = two_norm_form(&y, &s, n);
                assert!(
                    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0),
                    "{a} vs {b}"
                );
            }
        }
    }

    #[test]
    fn noise_validation() {
        assert!(NoiseModel::scalar(0.0).is_err());
        assert!(NoiseModel::diagonal(vec![1.0, -1.0]).is_err());
        assert!(NoiseModel::full(vec![vec![1.0, 2.0], vec![2.0, 1.0]]).is_err());
        assert!(NoiseModel::full(vec![vec![1.0, 0.5], vec![0.4, 1.0]]).is_err());
        let n = NoiseModel::diagonal(vec![1.0, 2.0]).unwrap();
        assert!(n.apply_inverse(&[1.0]).is_err());
        let json = serde_json::to_string(&NoiseModel::scalar(1e-3).unwrap()).unwrap();
        assert_eq!(json, r#"{"form":"scalar","scale":0.001}"#);
        let back: NoiseModel = serde_json::from_str(&json).unwrap();
        assert_eq!(back, NoiseModel::scalar(1e-3).unwrap());
    }

    #[test]
    fn noise_sample_covariance() {
        let n = NoiseModel::full(vec![vec![2.0, 0.6], vec![0.6, 0.5]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let draws: Vec<Vec<f64>> = (0..200_000)
            .map(|_| n.sample(2, &mut rng).unwrap())
            .collect();
        let c = |i: usize, j: usize| {
            draws.iter().map(|d| d[i] * d[j]).sum::<f64>() / draws.len() as f64
        };
        assert!((c(0, 0) - 2.0).abs() < 0.03);
        assert!((c(0, 1) - 0.6).abs() < 0.02);
        assert!((c(1, 1) - 0.5).abs() < 0.01);
    }

    #[test]
    fn mh_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..1000 {
            assert!(mh_decide(1.0, 0.5, &mut rng));
            assert!(mh_decide(1.0, 1.0, &mut rng));
        }
        for (d, p) in [
            (-1.0f64, 1.0f64),
            (0.0, 1.0),
            (2f64.ln(), 0.5),
            (2.0, (-2.0f64).exp()),
        ] {
            let n = 200_000;
            let hits = (0..n).filter(|_| mh_decide(0.0, d, &mut rng)).count() as f64 / n as f64;
            let sd = (p * (1.0 - p) / n as f64).sqrt();
            assert!((hits - p).abs() <= 3.0 * sd + 1e-12, "{d}: {hits} vs {p}");
        }
    }

    #[test]
    fn pcn_gaussian_degenerate_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        assert_eq!(pcn_gaussian(0.7, 1.0, &mut rng), 0.7);
        let xs: Vec<f64> = (0..100_000)
            .map(|_| pcn_gaussian(5.0, 0.0, &mut rng))
            .collect();
        assert!(mean(&xs).abs() < 0.02);
        assert!((variance(&xs) - 1.0).abs() < 0.02);
    }

    #[test]
    fn pcn_gaussian_chain_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let mut x: f64 = rng.sample(StandardNormal);
        let xs: Vec<f64> = (0..1_000_000)
            .map(|_| {
                x = pcn_gaussian(x, 0.95, &mut rng);
                x
            })
            .collect();
        assert!(mean(&xs).abs() < 0.03);
        assert!((variance(&xs) - 1.0).abs() < 0.02);
        assert!((lag_correlation(&xs, 1) - 0.95).abs() < 0.02);
    }

    #[test]
    fn pcn_exponential_identity_and_refresh() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        assert!((pcn_exponential(2.5, 1.0, &mut rng) - 2.5).abs() < 1e-15);
        let xs: Vec<f64> = (0..200_000)
            .map(|_| pcn_exponential(3.0, 0.0, &mut rng))
            .collect();
        // Exp(1): P(X > t) = e^{−t}
        for t in [0.5, 1.0, 2.0, 3.0] {
            let tail = xs.iter().filter(|&&x| x > t).count() as f64 / xs.len() as f64;
            let p = (-t).exp();
            assert!((tail - p).abs() < 4.0 * (p * (1.0 - p) / xs.len() as f64).sqrt());
        }
    }

    #[test]
    fn pcn_exponential_chain_preserves_law() {
        let rho = 0.9;
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut r = -rng.random::<f64>().ln();
        let xs: Vec<f64> = (0..1_000_000)
            .map(|_| {
                r = pcn_exponential(r, rho, &mut rng);
                r
            })
            .collect();
        assert!((mean(&xs) - 1.0).abs() < 0.01);
        assert!((variance(&xs) - 1.0).abs() < 0.02);
        // E[r* r] − 1 = ρ² Var r, so the lag-1 correlation is ρ², not ρ.
        assert!((lag_correlation(&xs, 1) - rho * rho).abs() < 0.02);
    }

    #[test]
    fn proposal_preserves_prior_marginals() {
        let prior = PriorSpec::power_law(3, 4.0, 1.2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let mut v = crate::basis::sample_prior(&prior, &mut rng);
        let mut acc: Vec<Vec<f64>> = (0..4).map(|_| Vec::with_capacity(400_000)).collect();
        for _ in 0..400_000 {
            v = propose_potential(&v, &prior, 0.5, &mut rng).unwrap();
            for (a, x) in acc.iter_mut().zip(v.coeffs()) {
                a.push(*x);
            }
        }
        for (a, g) in acc.iter().zip(prior.gamma()) {
            assert!(mean(a).abs() < 0.02 * g);
            assert!((variance(a) / (g * g) - 1.0).abs() < 0.02);
        }
        let same = propose_potential(&v, &prior, 1.0, &mut rng).unwrap();
        assert_eq!(same, v);
    }

    fn surrogate_cfg(rho: f64, noise: f64) -> (LinearSurrogate, InversionConfig) {
        let prior = PriorSpec::new(vec![1.0, 0.5]).unwrap();
        let ring = RingParams::new(2, 1.0, 1.0).unwrap();
        let cfg = InversionConfig {
            rho,
            n_proposals: 2000,
            n_runs: 2,
            t_ac: 10,
            burn_in: 0,
            noise: NoiseModel::scalar(noise).unwrap(),
            prior: prior.clone(),
            ring,
            forward: LangevinConfig::default_for(&ring),
            seed: 3,
        };
        (
            LinearSurrogate {
                prior,
                picks: vec![0, 1],
            },
            cfg,
        )
    }

    #[test]
    fn flat_likelihood_samples_prior() {
        let (m, mut cfg) = surrogate_cfg(0.5, 1e12);
        cfg.n_proposals = 20_000;
        let res = run_inversion(&m, &[0.3, -0.2], &cfg, 1).unwrap();
        assert!(res.acceptance_rate > 0.99);
        let v1: Vec<f64> = res.chains.iter().flat_map(|c| c.test_series(1)).collect();
        assert!((variance(&v1) - 0.25).abs() < 0.03);
        assert!(res.predictions[0].mean.abs() < 0.1);
    }

    #[test]
    fn identity_proposal_keeps_chain() {
        // ρ = 1 is outside the validated range, so drive the chain directly
        let (m, mut cfg) = surrogate_cfg(1.0, 0.1);
        cfg.n_proposals = 50;
        let c = run_chain(&m, &[0.3, -0.2], &cfg, 0).unwrap();
        assert_eq!(c.records.len(), 51);
        for r in &c.records {
            assert_eq!(r.v, PotentialCoeffs::harmonic(1));
        }
    }

    #[test]
    fn runs_independent_of_worker_count() {
        let (m, cfg) = surrogate_cfg(0.8, 0.1);
        let a = run_inversion(&m, &[0.3, -0.2], &cfg, 1).unwrap();
        let b = run_inversion(&m, &[0.3, -0.2], &cfg, 3).unwrap();
        assert_eq!(
            serde_json::to_string(&a.chains).unwrap(),
            serde_json::to_string(&b.chains).unwrap()
        );
        assert_ne!(a.chains[0].records, a.chains[1].records);
    }

    #[test]
    fn config_validation() {
        let (_, mut cfg) = surrogate_cfg(0.8, 0.1);
        cfg.rho = 1.0;
        assert!(cfg.validate().is_err());
        cfg.rho = 0.5;
        cfg.t_ac = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn autocorrelation_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let white: Vec<f64> = (0..100_000).map(|_| rng.sample(StandardNormal)).collect();
        let acf = autocorrelation(&white, 10).unwrap();
        assert_eq!(acf.values[0], 1.0);
        assert!(acf.values[10].abs() < 3.0 / (white.len() as f64).sqrt());

        let mut x = 0.0;
        let ar: Vec<f64> = (0..400_000)
            .map(|_| {
                x = 0.95 * x + (1.0 - 0.95f64 * 0.95).sqrt() * rng.sample::<f64, _>(StandardNormal);
                x
            })
            .collect();
        let a = autocorrelation(&ar, 50).unwrap();
        // Bartlett SE for AR(1) at lag 50 ≈ √((1+φ²)/(1−φ²)/n)
        let se = ((1.0 + 0.9025) / (1.0 - 0.9025) / ar.len() as f64).sqrt();
        assert!(
            (a.values[50] - 0.95f64.powi(50)).abs() < 3.0 * se,
            "{}",
            a.values[50]
        );

        let flat = autocorrelation(&[2.0; 20], 5).unwrap();
        assert!(flat.degenerate);
        assert!(flat.values.iter().all(|&v| v == 1.0));
        assert!(autocorrelation(&[1.0, 2.0], 2).is_err());
    }
}
