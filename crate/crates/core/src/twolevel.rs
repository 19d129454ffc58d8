//! Two-level ring polymer with surface hopping (PIMD-SH).
//!
//! Each bead carries a level index `l_k ∈ {0, 1}`. For a fixed level vector
//! the positions and momenta follow the same BAOAB dynamics as the 1-level
//! solver, driven by `H_N(q, p, l) = Σ_k ⟨l_k|G_k|l_{k+1}⟩`. Between force
//! steps the level vector jumps to a single-bead flip or to the full flip
//! with Metropolis-type intensities, which leave `exp(−β_N H_N)` invariant.
//!
//! The kinetic and spring parts of `G_k` do not depend on the levels, so all
//! energy differences below are assembled from the potential branch alone.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::basis::{GridSpec, Potential, PotentialCoeffs};
use crate::error::{check_len, Error, Result};
use crate::pimd::{
    initial_position, kinetic_matrix, thermal_momenta, LangevinConfig, ThermalOracle,
};
use crate::ringpoly::{spring_force_into, Observable, RingParams};
use crate::stats::{BatchMeans, ForwardEstimate};

/// One Gaussian term `A exp(−(x − c)² / (2σ²))` of the coupling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingComponent {
    #[serde(rename = "A")]
    pub amplitude: f64,
    pub c: f64,
    pub sigma: f64,
}

/// `[[V00, V01], [V01, V11]]` with a positive mixed-Gaussian coupling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoLevelPotential {
    pub v00: PotentialCoeffs,
    pub v11: PotentialCoeffs,
    pub v01: Vec<CouplingComponent>,
}

/// Potential values of one bead: `(V00, V11, V01)` and their derivatives.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct BeadPotential {
    v00: f64,
    v11: f64,
    v01: f64,
    d00: f64,
    d11: f64,
    d01: f64,
}

impl BeadPotential {
    fn diag(&self, l: u8) -> f64 {
        if l == 0 {
            self.v00
        } else {
            self.v11
        }
    }

    fn diag_slope(&self, l: u8) -> f64 {
        if l == 0 {
            self.d00
        } else {
            self.d11
        }
    }
}

impl TwoLevelPotential {
    pub fn new(
        v00: PotentialCoeffs,
        v11: PotentialCoeffs,
        v01: Vec<CouplingComponent>,
    ) -> Result<Self> {
        let v = Self { v00, v11, v01 };
        v.validate()?;
        Ok(v)
    }

    /// `V00 = x²/2 − 1.5 φ1`, `V11 = x²/2 − 0.75 φ0 − 1.5 φ1 − φ2`,
    /// `V01 = exp(−2x²)`, truncation level 4.
    pub fn crossing_showcase() -> Self {
        Self {
            v00: PotentialCoeffs::new(vec![0.0, -1.5, 0.0, 0.0, 0.0]).unwrap(),
            v11: PotentialCoeffs::new(vec![-0.75, -1.5, -1.0, 0.0, 0.0]).unwrap(),
            v01: vec![CouplingComponent {
                amplitude: 1.0,
                c: 0.0,
                sigma: 0.5,
            }],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for comp in &self.v01 {
            if !(comp.amplitude.is_finite() && comp.amplitude > 0.0) {
                return Err(Error::param(
                    "v01",
                    "coupling amplitudes must be strictly positive",
                ));
            }
            if !(comp.sigma.is_finite() && comp.sigma > 0.0 && comp.c.is_finite()) {
                return Err(Error::param("v01", "coupling widths must be positive"));
            }
        }
        Ok(())
    }

    pub fn coupling(&self, x: f64) -> f64 {
        self.v01
            .iter()
            .map(|c| {
                let d = x - c.c;
                c.amplitude * (-d * d / (2.0 * c.sigma * c.sigma)).exp()
            })
            .sum()
    }

    fn coupling_and_derivative(&self, x: f64) -> (f64, f64) {
        let mut v = 0.0;
        let mut dv = 0.0;
        for c in &self.v01 {
            let d = x - c.c;
            let s2 = c.sigma * c.sigma;
            let g = c.amplitude * (-d * d / (2.0 * s2)).exp();
            v += g;
            dv -= g * d / s2;
        }
        (v, dv)
    }

    pub(crate) fn at(&self, x: f64) -> BeadPotential {
        let (v00, d00) = self.v00.value_and_derivative(x);
        let (v11, d11) = self.v11.value_and_derivative(x);
        let (v01, d01) = self.coupling_and_derivative(x);
        BeadPotential {
            v00,
            v11,
            v01,
            d00,
            d11,
            d01,
        }
    }

    /// Same potential with the level labels exchanged.
    pub fn relabeled(&self) -> Self {
        Self {
            v00: self.v11.clone(),
            v11: self.v00.clone(),
            v01: self.v01.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoLevelState {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub l: Vec<u8>,
}

impl TwoLevelState {
    pub fn new(q: Vec<f64>, p: Vec<f64>, l: Vec<u8>) -> Result<Self> {
        check_len(q.len(), p.len())?;
        check_len(q.len(), l.len())?;
        if l.iter().any(|&x| x > 1) {
            return Err(Error::param("l", "level indices must be 0 or 1"));
        }
        Ok(Self { q, p, l })
    }

    fn check(&self, params: &RingParams) -> Result<()> {
        check_len(params.n_beads, self.q.len())?;
        check_len(params.n_beads, self.p.len())?;
        check_len(params.n_beads, self.l.len())?;
        if self.l.iter().any(|&x| x > 1) {
            return Err(Error::param("l", "level indices must be 0 or 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    /// `a(x)·I`
    Diagonal,
    /// `[[0, a(x)], [a(x), 0]]`
    OffDiagonal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoLevelObservable {
    pub placement: Placement,
    pub base: Observable,
}

impl TwoLevelObservable {
    pub fn diagonal(base: Observable) -> Self {
        Self {
            placement: Placement::Diagonal,
            base,
        }
    }

    pub fn off_diagonal(base: Observable) -> Self {
        Self {
            placement: Placement::OffDiagonal,
            base,
        }
    }
}

/// `ln cosh y` without overflow.
fn ln_cosh(y: f64) -> f64 {
    let a = y.abs();
    if a < 1.0 {
        // cosh a − 1 = 2 sinh²(a/2), keeps the a²/2 leading term exact
        let s = (0.5 * a).sinh();
        (2.0 * s * s).ln_1p()
    } else {
        a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
    }
}

/// `ln sinh y` for `y ≥ 0`; `−∞` at `y = 0`.
fn ln_sinh(y: f64) -> f64 {
    if y < 1.0 {
        y.sinh().ln()
    } else {
        y + (-(-2.0 * y).exp()).ln_1p() - std::f64::consts::LN_2
    }
}

/// Potential branch of `⟨l|G_k|l'⟩`; `+∞` when `l ≠ l'` and the coupling vanishes.
fn branch(l: u8, l_next: u8, b: &BeadPotential, beta_n: f64) -> f64 {
    let c = (beta_n * b.v01).abs();
    if l == l_next {
        b.diag(l) - ln_cosh(c) / beta_n
    } else if c == 0.0 {
        f64::INFINITY
    } else {
        0.5 * (b.v00 + b.v11) - ln_sinh(c) / beta_n
    }
}

/// Derivative of [`branch`] with respect to the bead position.
fn branch_slope(l: u8, l_next: u8, b: &BeadPotential, beta_n: f64) -> f64 {
    let c = beta_n * b.v01;
    let s = b.v01.signum();
    if l == l_next {
        b.diag_slope(l) - c.abs().tanh() * s * b.d01
    } else if c == 0.0 {
        0.0
    } else {
        0.5 * (b.d00 + b.d11) - s * b.d01 / c.abs().tanh()
    }
}

/// `⟨l|G_k|l'⟩` for bead `k` (0-based, cyclic neighbour `k + 1`).
pub fn g_entry(
    l: u8,
    l_next: u8,
    k: usize,
    state: &TwoLevelState,
    v: &TwoLevelPotential,
    params: &RingParams,
) -> Result<f64> {
    state.check(params)?;
    if l > 1 || l_next > 1 {
        return Err(Error::param("l", "level indices must be 0 or 1"));
    }
    let n = params.n_beads;
    if k >= n {
        return Err(Error::Dimension {
            expected: n,
            got: k + 1,
        });
    }
    let d = state.q[k] - state.q[(k + 1) % n];
    let free = state.p[k] * state.p[k] / (2.0 * params.mass) + 0.5 * params.spring() * d * d;
    Ok(free + branch(l, l_next, &v.at(state.q[k]), params.beta_n()))
}

/// Sum of the potential branches `Σ_k U(l_k, l_{k+1}, q_k)`.
fn branch_sum(l: &[u8], beads: &[BeadPotential], beta_n: f64) -> f64 {
    let n = l.len();
    (0..n)
        .map(|k| branch(l[k], l[(k + 1) % n], &beads[k], beta_n))
        .sum()
}

/// `H_N(q, p, l) = Σ_k ⟨l_k|G_k|l_{k+1}⟩`, `+∞` for states of zero weight.
pub fn h2(state: &TwoLevelState, v: &TwoLevelPotential, params: &RingParams) -> Result<f64> {
    state.check(params)?;
    let n = params.n_beads;
    let free: f64 = (0..n)
        .map(|k| {
            let d = state.q[k] - state.q[(k + 1) % n];
            state.p[k] * state.p[k] / (2.0 * params.mass) + 0.5 * params.spring() * d * d
        })
        .sum();
    let beads: Vec<BeadPotential> = state.q.iter().map(|&x| v.at(x)).collect();
    Ok(free + branch_sum(&state.l, &beads, params.beta_n()))
}

/// `exp[β_N(⟨l_k|G_k|l_{k+1}⟩ − ⟨l̄_k|G_k|l_{k+1}⟩)]` in closed form.
fn flip_ratio(l: u8, l_next: u8, b: &BeadPotential, beta_n: f64) -> f64 {
    let t = (beta_n * b.v01).abs().tanh();
    let half_gap = 0.5 * (b.v00 - b.v11);
    if l == l_next {
        // diagonal minus off-diagonal branch
        let shift = if l == 0 { half_gap } else { -half_gap };
        (beta_n * shift).exp() * t
    } else if t == 0.0 {
        // current state has zero weight
        0.0
    } else {
        let other = 1 - l;
        let shift = if other == 0 { -half_gap } else { half_gap };
        (beta_n * shift).exp() / t
    }
}

fn weight_from_beads(
    a: &TwoLevelObservable,
    q: &[f64],
    l: &[u8],
    beads: &[BeadPotential],
    beta_n: f64,
) -> f64 {
    let n = q.len();
    let total: f64 = match a.placement {
        Placement::Diagonal => q.iter().map(|&x| a.base.eval(x)).sum(),
        Placement::OffDiagonal => (0..n)
            .map(|k| {
                let sgn = beads[k].v01.signum();
                -sgn * a.base.eval(q[k]) * flip_ratio(l[k], l[(k + 1) % n], &beads[k], beta_n)
            })
            .sum(),
    };
    total / n as f64
}

/// Estimator `W_N[A](q, p, l)` whose Gibbs average is the thermal average.
pub fn weight_fn(
    a: &TwoLevelObservable,
    state: &TwoLevelState,
    v: &TwoLevelPotential,
    params: &RingParams,
) -> Result<f64> {
    state.check(params)?;
    let beads: Vec<BeadPotential> = state.q.iter().map(|&x| v.at(x)).collect();
    Ok(weight_from_beads(
        a,
        &state.q,
        &state.l,
        &beads,
        params.beta_n(),
    ))
}

/// Which neighbour a candidate level vector is.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Move {
    Single(usize),
    Full,
}

fn classify(from: &[u8], to: &[u8]) -> Result<Move> {
    check_len(from.len(), to.len())?;
    let diffs: Vec<usize> = (0..from.len()).filter(|&i| from[i] != to[i]).collect();
    if diffs.len() == from.len() {
        Ok(Move::Full)
    } else if diffs.len() == 1 {
        Ok(Move::Single(diffs[0]))
    } else {
        Err(Error::InvalidTransition(format!(
            "target differs in {} of {} beads; only single flips and the full flip are allowed",
            diffs.len(),
            from.len()
        )))
    }
}

/// `H_N(l') − H_N(l)` for an allowed move.
fn move_delta(l: &[u8], mv: Move, beads: &[BeadPotential], beta_n: f64) -> f64 {
    let n = l.len();
    match mv {
        Move::Single(j) => {
            let prev = (j + n - 1) % n;
            let next = (j + 1) % n;
            let f = 1 - l[j];
            let old = branch(l[prev], l[j], &beads[prev], beta_n)
                + branch(l[j], l[next], &beads[j], beta_n);
            let new =
                branch(l[prev], f, &beads[prev], beta_n) + branch(f, l[next], &beads[j], beta_n);
            new - old
        }
        Move::Full => (0..n)
            .map(|k| {
                let m = (k + 1) % n;
                branch(1 - l[k], 1 - l[m], &beads[k], beta_n)
                    - branch(l[k], l[m], &beads[k], beta_n)
            })
            .sum(),
    }
}

fn rate_from_delta(old_energy_finite: bool, delta: f64, beta_n: f64, eta: f64) -> f64 {
    if !old_energy_finite {
        return eta;
    }
    if delta.is_nan() || delta == f64::INFINITY {
        return 0.0;
    }
    eta * (-beta_n * delta).exp().min(1.0)
}

/// Jump intensity `η · min{1, exp[β_N (H_N(z, l) − H_N(z, l'))]}` from the
/// current level vector to `l_new`.
pub fn hop_intensity(
    state: &TwoLevelState,
    l_new: &[u8],
    params: &RingParams,
    v: &TwoLevelPotential,
    eta: f64,
) -> Result<f64> {
    state.check(params)?;
    if !(eta.is_finite() && eta > 0.0) {
        return Err(Error::param("eta", "hopping scale must be positive"));
    }
    if l_new.iter().any(|&x| x > 1) {
        return Err(Error::InvalidTransition(
            "level indices must be 0 or 1".into(),
        ));
    }
    let mv = classify(&state.l, l_new)?;
    let beads: Vec<BeadPotential> = state.q.iter().map(|&x| v.at(x)).collect();
    let beta_n = params.beta_n();
    let finite = branch_sum(&state.l, &beads, beta_n).is_finite();
    Ok(rate_from_delta(
        finite,
        move_delta(&state.l, mv, &beads, beta_n),
        beta_n,
        eta,
    ))
}

/// Generator of the level jump process at frozen positions, over the `2^N`
/// level vectors in the order of [`all_level_vectors`].
pub fn jump_generator(
    q: &[f64],
    v: &TwoLevelPotential,
    params: &RingParams,
    eta: f64,
) -> Result<nalgebra::DMatrix<f64>> {
    let n = params.n_beads;
    check_len(n, q.len())?;
    if n > 12 {
        return Err(Error::param(
            "n_beads",
            "jump generator is limited to 12 beads",
        ));
    }
    let states = all_level_vectors(n);
    let index = |l: &[u8]| {
        l.iter()
            .enumerate()
            .map(|(i, &b)| (b as usize) << i)
            .sum::<usize>()
    };
    let mut g = nalgebra::DMatrix::zeros(states.len(), states.len());
    for (i, l) in states.iter().enumerate() {
        let s = TwoLevelState {
            q: q.to_vec(),
            p: vec![0.0; n],
            l: l.clone(),
        };
        for t in neighbours(l) {
            let r = hop_intensity(&s, &t, params, v, eta)?;
            g[(i, index(&t))] += r;
            g[(i, i)] -= r;
        }
    }
    Ok(g)
}

/// Default hopping scale `η = 1/β_N`.
pub fn default_eta(params: &RingParams) -> f64 {
    1.0 / params.beta_n()
}

struct ShIntegrator<'a> {
    v: &'a TwoLevelPotential,
    params: RingParams,
    dt: f64,
    eta: f64,
    ou_decay: f64,
    ou_noise: f64,
    beads: Vec<BeadPotential>,
    force: Vec<f64>,
    rates: Vec<f64>,
    steps: usize,
    hops: usize,
}

impl<'a> ShIntegrator<'a> {
    fn new(
        v: &'a TwoLevelPotential,
        params: &RingParams,
        cfg: &LangevinConfig,
        eta: f64,
        s: &TwoLevelState,
    ) -> Self {
        let decay = (-cfg.friction * cfg.dt).exp();
        let n = params.n_beads;
        let mut it = Self {
            v,
            params: *params,
            dt: cfg.dt,
            eta,
            ou_decay: decay,
            ou_noise: ((1.0 - decay * decay) * params.mass / params.beta_n()).sqrt(),
            beads: vec![BeadPotential::default(); n],
            force: vec![0.0; n],
            rates: vec![0.0; n + 1],
            steps: 0,
            hops: 0,
        };
        it.refresh_beads(&s.q);
        it.refresh_force(s);
        it
    }

    fn refresh_beads(&mut self, q: &[f64]) {
        for (b, &x) in self.beads.iter_mut().zip(q) {
            *b = self.v.at(x);
        }
    }

    fn refresh_force(&mut self, s: &TwoLevelState) {
        let n = s.q.len();
        let bn = self.params.beta_n();
        spring_force_into(&s.q, self.params.spring(), &mut self.force);
        for k in 0..n {
            self.force[k] -= branch_slope(s.l[k], s.l[(k + 1) % n], &self.beads[k], bn);
        }
    }

    fn step<R: Rng + ?Sized>(&mut self, s: &mut TwoLevelState, rng: &mut R) -> Result<()> {
        let half = 0.5 * self.dt;
        let drift = half / self.params.mass;
        for ((q, p), f) in s.q.iter_mut().zip(s.p.iter_mut()).zip(&self.force) {
            *p += half * f;
            *q += drift * *p;
        }
        for p in s.p.iter_mut() {
            *p = self.ou_decay * *p + self.ou_noise * rng.sample::<f64, _>(StandardNormal);
        }
        for (q, p) in s.q.iter_mut().zip(&s.p) {
            *q += drift * p;
        }
        self.refresh_beads(&s.q);
        self.refresh_force(s);
        for (p, f) in s.p.iter_mut().zip(&self.force) {
            *p += half * f;
        }
        self.steps += 1;
        if !(s.q.iter().chain(&s.p).all(|x| x.is_finite())) {
            return Err(Error::Divergence {
                step: self.steps,
                dt: self.dt,
            });
        }
        self.hop(s, rng);
        Ok(())
    }

    /// At most one jump per step, taken with probability `1 − e^{−R dt}`.
    fn hop<R: Rng + ?Sized>(&mut self, s: &mut TwoLevelState, rng: &mut R) {
        let n = s.l.len();
        let bn = self.params.beta_n();
        let finite = branch_sum(&s.l, &self.beads, bn).is_finite();
        let mut total = 0.0;
        for j in 0..n {
            let d = move_delta(&s.l, Move::Single(j), &self.beads, bn);
            self.rates[j] = rate_from_delta(finite, d, bn, self.eta);
            total += self.rates[j];
        }
        let d = move_delta(&s.l, Move::Full, &self.beads, bn);
        self.rates[n] = rate_from_delta(finite, d, bn, self.eta);
        total += self.rates[n];
        if total <= 0.0 {
            return;
        }
        let u: f64 = rng.random();
        if u >= 1.0 - (-total * self.dt).exp() {
            return;
        }
        let mut pick = rng.random::<f64>() * total;
        let mut chosen = n;
        for (i, r) in self.rates.iter().enumerate() {
            if pick < *r {
                chosen = i;
                break;
            }
            pick -= r;
        }
        if chosen == n {
            for x in s.l.iter_mut() {
                *x = 1 - *x;
            }
        } else {
            s.l[chosen] = 1 - s.l[chosen];
        }
        self.hops += 1;
        self.refresh_force(s);
    }
}

/// Ergodic average of `W_N[A]` along a PIMD-SH trajectory.
pub fn pimd_sh_estimate(
    v: &TwoLevelPotential,
    observables: &[TwoLevelObservable],
    params: &RingParams,
    cfg: &LangevinConfig,
    eta: f64,
) -> Result<Vec<ForwardEstimate>> {
    Ok(pimd_sh_run(v, observables, params, cfg, eta)?.0)
}

/// As [`pimd_sh_estimate`], also returning the number of accepted hops.
pub fn pimd_sh_run(
    v: &TwoLevelPotential,
    observables: &[TwoLevelObservable],
    params: &RingParams,
    cfg: &LangevinConfig,
    eta: f64,
) -> Result<(Vec<ForwardEstimate>, usize)> {
    if observables.is_empty() {
        return Err(Error::param(
            "observables",
            "at least one observable required",
        ));
    }
    if !(eta.is_finite() && eta > 0.0) {
        return Err(Error::param("eta", "hopping scale must be positive"));
    }
    v.validate()?;
    params.validate()?;
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let x0 = initial_position(&v.v00, cfg.initial);
    let mut state = TwoLevelState {
        q: vec![x0; params.n_beads],
        p: thermal_momenta(params, &mut rng),
        l: vec![0; params.n_beads],
    };
    let mut integ = ShIntegrator::new(v, params, cfg, eta, &state);
    for _ in 0..cfg.n_burnin {
        integ.step(&mut state, &mut rng)?;
    }
    let n_samples = cfg.n_samples();
    let mut acc: Vec<BatchMeans> = observables
        .iter()
        .map(|_| BatchMeans::new(n_samples, cfg.n_batches))
        .collect();
    let bn = params.beta_n();
    for _ in 0..n_samples {
        for _ in 0..cfg.thin {
            integ.step(&mut state, &mut rng)?;
        }
        for (a, o) in acc.iter_mut().zip(observables) {
            a.push(weight_from_beads(o, &state.q, &state.l, &integ.beads, bn));
        }
    }
    Ok((acc.iter().map(BatchMeans::finish).collect(), integ.hops))
}

/// Default 2-level oracle grid: `[-6, 6]`, 400 nodes per level.
pub fn oracle_grid_2level_default() -> GridSpec {
    GridSpec {
        x_min: -6.0,
        x_max: 6.0,
        n_points: 400,
    }
}

/// Grid diagonalization of the 2×2 block Hamiltonian.
pub struct TwoLevelOracle {
    inner: ThermalOracle,
}

impl TwoLevelOracle {
    pub fn new(v: &TwoLevelPotential, beta: f64, mass: f64, grid: &GridSpec) -> Result<Self> {
        grid.validate(16)?;
        let xs: Vec<f64> = grid.points().collect();
        let n = xs.len();
        let t = kinetic_matrix(n, grid.spacing(), mass);
        let mut h = nalgebra::DMatrix::zeros(2 * n, 2 * n);
        h.view_mut((0, 0), (n, n)).copy_from(&t);
        h.view_mut((n, n), (n, n)).copy_from(&t);
        for (i, &x) in xs.iter().enumerate() {
            h[(i, i)] += v.v00.value(x);
            h[(n + i, n + i)] += v.v11.value(x);
            let c = v.coupling(x);
            h[(i, n + i)] = c;
            h[(n + i, i)] = c;
        }
        Ok(Self {
            inner: ThermalOracle::from_matrix(h, xs, beta, 2)?,
        })
    }

    pub fn average(&self, a: &TwoLevelObservable) -> f64 {
        let vals: Vec<f64> = self.inner.grid().iter().map(|&x| a.base.eval(x)).collect();
        match a.placement {
            Placement::Diagonal => {
                let diag: Vec<f64> = vals.iter().chain(&vals).copied().collect();
                self.inner.average_diagonal(&diag)
            }
            Placement::OffDiagonal => self.inner.average_off_diagonal(&vals),
        }
    }
}

/// `Tr[e^(−βH) A] / Tr[e^(−βH)]` for the 2-level block Hamiltonian.
pub fn exact_thermal_average_2level(
    v: &TwoLevelPotential,
    a: &TwoLevelObservable,
    beta: f64,
    mass: f64,
    grid: &GridSpec,
) -> Result<f64> {
    Ok(TwoLevelOracle::new(v, beta, mass, grid)?.average(a))
}

/// All `2^N` level vectors of an `N`-bead ring, in binary counting order.
pub fn all_level_vectors(n: usize) -> Vec<Vec<u8>> {
    (0..1usize << n)
        .map(|m| (0..n).map(|i| ((m >> i) & 1) as u8).collect())
        .collect()
}

/// Allowed jump targets from `l`: every single flip, then the full flip.
pub fn neighbours(l: &[u8]) -> Vec<Vec<u8>> {
    let mut out: Vec<Vec<u8>> = (0..l.len())
        .map(|j| {
            let mut m = l.to_vec();
            m[j] = 1 - m[j];
            m
        })
        .collect();
    out.push(l.iter().map(|x| 1 - x).collect());
    out
}
