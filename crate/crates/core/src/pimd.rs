//! BAOAB Langevin sampling of the ring-polymer Gibbs distribution, the Monte
//! Carlo forward map `V ↦ ⟨A⟩_N`, and deterministic oracles used to check it.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::basis::{GridSpec, Potential};
use crate::error::{check_len, Error, Result};
use crate::ringpoly::{force_into, ring_average, Observable, RingParams, RingState};
use crate::stats::BatchMeans;

pub use crate::stats::ForwardEstimate;

/// Where the beads start before burn-in.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialPosition {
    #[default]
    Origin,
    /// Minimizer of `V` on a coarse grid over `[-5, 5]`.
    CoarseMinimum,
    At(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LangevinConfig {
    pub dt: f64,
    pub friction: f64,
    pub n_steps: usize,
    pub n_burnin: usize,
    #[serde(default = "one")]
    pub thin: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_batches")]
    pub n_batches: usize,
    #[serde(default)]
    pub initial: InitialPosition,
}

fn one() -> usize {
    1
}

fn default_batches() -> usize {
    32
}

impl LangevinConfig {
    /// `dt = 0.05 √M β_N`, `γ = 1`, 10⁵ recorded steps after 10⁴ burn-in.
    pub fn default_for(params: &RingParams) -> Self {
        Self {
            dt: 0.05 * params.mass.sqrt() * params.beta_n(),
            friction: 1.0,
            n_steps: 110_000,
            n_burnin: 10_000,
            thin: 1,
            seed: 0,
            n_batches: 32,
            initial: InitialPosition::Origin,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::param("dt", "must be positive"));
        }
        if !(self.friction.is_finite() && self.friction >= 0.0) {
            return Err(Error::param("friction", "must be non-negative"));
        }
        if self.dt * self.friction >= 2.0 {
            return Err(Error::param("dt", "dt·γ must stay below 2"));
        }
        if self.n_burnin >= self.n_steps {
            return Err(Error::param("n_burnin", "must be smaller than n_steps"));
        }
        if self.thin == 0 {
            return Err(Error::param("thin", "must be at least 1"));
        }
        if self.n_batches < 2 {
            return Err(Error::param("n_batches", "need at least 2 batches"));
        }
        Ok(())
    }

    /// `(n_steps − n_burnin) / thin`.
    pub fn n_samples(&self) -> usize {
        (self.n_steps - self.n_burnin) / self.thin
    }
}

/// Stateful BAOAB integrator that carries the force from the end of one
/// step into the next.
pub struct Baoab<'a, P: Potential + ?Sized> {
    v: &'a P,
    mass: f64,
    dt: f64,
    spring: f64,
    ou_decay: f64,
    ou_noise: f64,
    force: Vec<f64>,
    thermal_p: Vec<f64>,
    steps: usize,
}

impl<'a, P: Potential + ?Sized> Baoab<'a, P> {
    pub fn new(v: &'a P, params: &RingParams, dt: f64, friction: f64, q: &[f64]) -> Self {
        let decay = (-friction * dt).exp();
        let mut force = vec![0.0; q.len()];
        force_into(q, v, params.spring(), &mut force);
        Self {
            v,
            mass: params.mass,
            dt,
            spring: params.spring(),
            ou_decay: decay,
            ou_noise: ((1.0 - decay * decay) * params.mass / params.beta_n()).sqrt(),
            force,
            thermal_p: vec![0.0; q.len()],
            steps: 0,
        }
    }

    /// One B–A–O–A–B step in place.
    pub fn step<R: Rng + ?Sized>(&mut self, state: &mut RingState, rng: &mut R) -> Result<()> {
        let half = 0.5 * self.dt;
        let drift = half / self.mass;
        for ((q, p), f) in state.q.iter_mut().zip(state.p.iter_mut()).zip(&self.force) {
            *p += half * f;
            *q += drift * *p;
        }
        for (p, t) in state.p.iter_mut().zip(self.thermal_p.iter_mut()) {
            *p = self.ou_decay * *p + self.ou_noise * rng.sample::<f64, _>(StandardNormal);
            *t = *p;
        }
        for (q, p) in state.q.iter_mut().zip(&state.p) {
            *q += drift * p;
        }
        force_into(&state.q, self.v, self.spring, &mut self.force);
        for (p, f) in state.p.iter_mut().zip(&self.force) {
            *p += half * f;
        }
        self.steps += 1;
        if !state.is_finite() {
            return Err(Error::Divergence {
                step: self.steps,
                dt: self.dt,
            });
        }
        Ok(())
    }

    /// Momenta right after the most recent O-update. For a harmonic system
    /// these carry the exact `N(0, M/β_N)` marginal; end-of-step momenta do not.
    pub fn thermal_momenta(&self) -> &[f64] {
        &self.thermal_p
    }
}

/// Applies one BAOAB step to a copy of `state`.
pub fn baoab_step<P: Potential + ?Sized, R: Rng + ?Sized>(
    state: &RingState,
    v: &P,
    params: &RingParams,
    cfg: &LangevinConfig,
    rng: &mut R,
) -> Result<RingState> {
    check_len(params.n_beads, state.q.len())?;
    check_len(params.n_beads, state.p.len())?;
    let mut next = state.clone();
    let mut integrator = Baoab::new(v, params, cfg.dt, cfg.friction, &state.q);
    integrator.step(&mut next, rng)?;
    Ok(next)
}

pub(crate) fn thermal_momenta<R: Rng + ?Sized>(params: &RingParams, rng: &mut R) -> Vec<f64> {
    let sd = (params.mass / params.beta_n()).sqrt();
    (0..params.n_beads)
        .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

pub(crate) fn initial_position<P: Potential + ?Sized>(v: &P, init: InitialPosition) -> f64 {
    match init {
        InitialPosition::Origin => 0.0,
        InitialPosition::At(x) => x,
        InitialPosition::CoarseMinimum => {
            (0..=100)
                .map(|i| -5.0 + 0.1 * i as f64)
                .map(|x| (x, v.value(x)))
                .fold((0.0, f64::INFINITY), |best, cur| {
                    if cur.1 < best.1 {
                        cur
                    } else {
                        best
                    }
                })
                .0
        }
    }
}

/// Time averages of `ring_average(A, q)` along a BAOAB trajectory, one
/// estimate per observable, with batch-means standard errors.
pub fn forward_estimate<P: Potential + ?Sized>(
    v: &P,
    observables: &[Observable],
    params: &RingParams,
    cfg: &LangevinConfig,
) -> Result<Vec<ForwardEstimate>> {
    if observables.is_empty() {
        return Err(Error::param(
            "observables",
            "at least one observable required",
        ));
    }
    params.validate()?;
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let x0 = initial_position(v, cfg.initial);
    let mut state = RingState {
        q: vec![x0; params.n_beads],
        p: thermal_momenta(params, &mut rng),
    };
    let mut integrator = Baoab::new(v, params, cfg.dt, cfg.friction, &state.q);
    for _ in 0..cfg.n_burnin {
        integrator.step(&mut state, &mut rng)?;
    }
    let n_samples = cfg.n_samples();
    let mut acc: Vec<BatchMeans> = observables
        .iter()
        .map(|_| BatchMeans::new(n_samples, cfg.n_batches))
        .collect();
    for _ in 0..n_samples {
        for _ in 0..cfg.thin {
            integrator.step(&mut state, &mut rng)?;
        }
        for (a, o) in acc.iter_mut().zip(observables) {
            a.push(ring_average(o, &state.q));
        }
    }
    Ok(acc.iter().map(BatchMeans::finish).collect())
}

/// Per-bead marginal variance of the harmonic (`V = V_o`) ring polymer:
/// `(1/N) Σ_k 1/λ_k`, `λ_k = β_N [(2M/β_N²)(1 − cos(2πk/N)) + 1]`.
///
/// `n_beads = 1` is accepted and gives the classical value `1/β`.
pub fn rp_harmonic_variance(params: &RingParams) -> f64 {
    let n = params.n_beads.max(1);
    let bn = params.beta / n as f64;
    let stiff = 2.0 * params.mass / (bn * bn);
    (0..n)
        .map(|k| {
            let c = (2.0 * std::f64::consts::PI * k as f64 / n as f64).cos();
            1.0 / (bn * (stiff * (1.0 - c) + 1.0))
        })
        .sum::<f64>()
        / n as f64
}

/// Quantum `⟨x²⟩` of `−Δ/(2M) + x²/2` at inverse temperature `β`.
pub fn harmonic_exact_x2(mass: f64, beta: f64) -> f64 {
    let omega = 1.0 / mass.sqrt();
    let t = (0.5 * beta * omega).tanh();
    1.0 / (2.0 * mass * omega * t)
}

/// Fourth-order five-point kinetic operator `−Δ/(2M)` with Dirichlet walls.
pub(crate) fn kinetic_matrix(n: usize, h: f64, mass: f64) -> DMatrix<f64> {
    let c = 1.0 / (2.0 * mass * 12.0 * h * h);
    let mut t = DMatrix::zeros(n, n);
    for i in 0..n {
        t[(i, i)] = 30.0 * c;
        if i + 1 < n {
            t[(i, i + 1)] = -16.0 * c;
            t[(i + 1, i)] = -16.0 * c;
        }
        if i + 2 < n {
            t[(i, i + 2)] = c;
            t[(i + 2, i)] = c;
        }
    }
    t
}

/// Spectral decomposition of a grid Hamiltonian, reusable across observables.
pub struct ThermalOracle {
    grid: Vec<f64>,
    weights: Vec<f64>,
    vectors: DMatrix<f64>,
    blocks: usize,
}

impl ThermalOracle {
    /// 1-level oracle for `−Δ/(2M) + V` on `grid`.
    pub fn new<P: Potential + ?Sized>(
        v: &P,
        beta: f64,
        mass: f64,
        grid: &GridSpec,
    ) -> Result<Self> {
        grid.validate(16)?;
        let xs: Vec<f64> = grid.points().collect();
        let mut h = kinetic_matrix(xs.len(), grid.spacing(), mass);
        for (i, &x) in xs.iter().enumerate() {
            h[(i, i)] += v.value(x);
        }
        Self::from_matrix(h, xs, beta, 1)
    }

    pub(crate) fn from_matrix(
        h: DMatrix<f64>,
        grid: Vec<f64>,
        beta: f64,
        blocks: usize,
    ) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::param("beta", "must be positive"));
        }
        let eig = SymmetricEigen::try_new(h, f64::EPSILON, 0)
            .ok_or_else(|| Error::Oracle("symmetric eigensolver did not converge".into()))?;
        let e0 = eig
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if !e0.is_finite() {
            return Err(Error::Oracle("non-finite eigenvalue".into()));
        }
        let weights = eig
            .eigenvalues
            .iter()
            .map(|e| (-beta * (e - e0)).exp())
            .collect();
        Ok(Self {
            grid,
            weights,
            vectors: eig.eigenvectors,
            blocks,
        })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// `Σ_k w_k ⟨ψ_k|D|ψ_k⟩ / Σ_k w_k` for a diagonal operator `D` given by
    /// its values on the (possibly block-stacked) grid.
    pub(crate) fn average_diagonal(&self, diag: &[f64]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (k, &w) in self.weights.iter().enumerate() {
            if w < 1e-300 {
                continue;
            }
            let col = self.vectors.column(k);
            let expect: f64 = col.iter().zip(diag).map(|(c, d)| c * c * d).sum();
            num += w * expect;
            den += w;
        }
        num / den
    }

    /// Same as [`Self::average_diagonal`] for a 2×2 block operator with zero
    /// diagonal blocks and `off` on both off-diagonal blocks.
    pub(crate) fn average_off_diagonal(&self, off: &[f64]) -> f64 {
        let n = self.grid.len();
        debug_assert_eq!(self.blocks, 2);
        let mut num = 0.0;
        let mut den = 0.0;
        for (k, &w) in self.weights.iter().enumerate() {
            if w < 1e-300 {
                continue;
            }
            let col = self.vectors.column(k);
            let expect: f64 = (0..n).map(|i| 2.0 * col[i] * col[n + i] * off[i]).sum();
            num += w * expect;
            den += w;
        }
        num / den
    }

    /// Thermal average of an arbitrary position function (1-level only).
    pub fn average_fn<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        let diag: Vec<f64> = (0..self.blocks)
            .flat_map(|_| self.grid.iter().map(|&x| f(x)))
            .collect();
        self.average_diagonal(&diag)
    }

    pub fn average(&self, a: &Observable) -> f64 {
        self.average_fn(|x| a.eval(x))
    }
}

/// `Tr[e^(−βĤ) Â] / Tr[e^(−βĤ)]` by full diagonalization on a grid.
pub fn exact_thermal_average<P: Potential + ?Sized>(
    v: &P,
    a: &Observable,
    beta: f64,
    mass: f64,
    grid: &GridSpec,
) -> Result<f64> {
    Ok(ThermalOracle::new(v, beta, mass, grid)?.average(a))
}

/// Default oracle grid for 1-level systems: `[-8, 8]`, 641 nodes.
pub fn oracle_grid_default() -> GridSpec {
    GridSpec {
        x_min: -8.0,
        x_max: 8.0,
        n_points: 641,
    }
}
