//! Hermite-function basis and the truncated potential space.
//!
//! A 1-level potential is stored as its deviation from the harmonic reference
//! `V_o(x) = x²/2`, expanded in normalized Hermite functions
//! `φ_n(x) = (2ⁿ n! √π)^(-1/2) H_n(x) e^(-x²/2)`. The harmonic part is implicit.

use std::f64::consts::PI;
use std::sync::OnceLock;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `π^(-1/4)`, the value of `φ_0(0)` and the uniform bound on every `φ_n`.
pub const PI_POW_NEG_QUARTER: f64 = 0.751_125_544_464_942_5;

const TABLE_LEN: usize = 512;

/// `(√(2/(n+1)), √(n/(n+1)), √(2(n+1)))` for the three-term recurrence and
/// the derivative identity.
fn recurrence_table() -> &'static [(f64, f64, f64)] {
    static TABLE: OnceLock<Vec<(f64, f64, f64)>> = OnceLock::new();
    TABLE.get_or_init(|| {
        (0..TABLE_LEN)
            .map(|n| {
                let n = n as f64;
                (
                    (2.0 / (n + 1.0)).sqrt(),
                    (n / (n + 1.0)).sqrt(),
                    (2.0 * (n + 1.0)).sqrt(),
                )
            })
            .collect()
    })
}

/// Fills `out[n] = φ_n(x)` for `n < out.len()`.
pub fn hermite_functions(x: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    assert!(out.len() <= TABLE_LEN, "Hermite order above {TABLE_LEN}");
    let table = recurrence_table();
    out[0] = PI_POW_NEG_QUARTER * (-0.5 * x * x).exp();
    if out.len() > 1 {
        out[1] = std::f64::consts::SQRT_2 * x * out[0];
    }
    for n in 1..out.len().saturating_sub(1) {
        let (a, b, _) = table[n];
        out[n + 1] = x * a * out[n] - b * out[n - 1];
    }
}

/// Evaluates `φ_n` for `n ≤ max_order`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HermiteEvaluator {
    max_order: usize,
}

impl HermiteEvaluator {
    pub fn new(max_order: usize) -> Result<Self> {
        if max_order >= TABLE_LEN {
            return Err(Error::OrderOverflow {
                order: max_order,
                max: TABLE_LEN - 1,
            });
        }
        Ok(Self { max_order })
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    pub fn eval(&self, n: usize, x: f64) -> Result<f64> {
        if n > self.max_order {
            return Err(Error::OrderOverflow {
                order: n,
                max: self.max_order,
            });
        }
        Ok(hermite_single(n, x))
    }

    /// All of `φ_0(x) … φ_max(x)`.
    pub fn eval_all(&self, x: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.max_order + 1];
        hermite_functions(x, &mut out);
        out
    }
}

/// `φ_n(x)` by running the recurrence up to `n` without allocating.
pub(crate) fn hermite_single(n: usize, x: f64) -> f64 {
    let table = recurrence_table();
    let mut prev = 0.0;
    let mut cur = PI_POW_NEG_QUARTER * (-0.5 * x * x).exp();
    for &(a, b, _) in &table[..n] {
        let next = x * a * cur - b * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Anything the forward solvers can use as a 1-level potential.
pub trait Potential: Sync {
    fn value(&self, x: f64) -> f64;

    /// `(V(x), V'(x))`.
    fn value_and_derivative(&self, x: f64) -> (f64, f64);
}

/// Truncated Hermite coefficients of `V − V_o`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCoeffs", into = "RawCoeffs")]
pub struct PotentialCoeffs {
    v: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawCoeffs {
    #[serde(rename = "L")]
    level: usize,
    v: Vec<f64>,
}

impl TryFrom<RawCoeffs> for PotentialCoeffs {
    type Error = Error;

    fn try_from(raw: RawCoeffs) -> Result<Self> {
        if raw.v.len() != raw.level + 1 {
            return Err(Error::Dimension {
                expected: raw.level + 1,
                got: raw.v.len(),
            });
        }
        PotentialCoeffs::new(raw.v)
    }
}

impl From<PotentialCoeffs> for RawCoeffs {
    fn from(c: PotentialCoeffs) -> Self {
        RawCoeffs {
            level: c.truncation(),
            v: c.v,
        }
    }
}

impl PotentialCoeffs {
    pub fn new(v: Vec<f64>) -> Result<Self> {
        if v.is_empty() {
            return Err(Error::param("v", "at least one coefficient required"));
        }
        if v.len() > TABLE_LEN - 1 {
            return Err(Error::OrderOverflow {
                order: v.len() - 1,
                max: TABLE_LEN - 2,
            });
        }
        if let Some(i) = v.iter().position(|c| !c.is_finite()) {
            return Err(Error::param("v", format!("coefficient {i} is not finite")));
        }
        Ok(Self { v })
    }

    /// The harmonic reference `V_o` at truncation level `level`.
    pub fn harmonic(level: usize) -> Self {
        Self {
            v: vec![0.0; level + 1],
        }
    }

    /// Truncation level `L` (there are `L + 1` coefficients).
    pub fn truncation(&self) -> usize {
        self.v.len() - 1
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.v
    }

    /// `Σ v_n φ_n(x)`, the deviation from the harmonic part.
    pub fn deviation(&self, x: f64) -> f64 {
        let table = recurrence_table();
        let mut prev = 0.0;
        let mut cur = PI_POW_NEG_QUARTER * (-0.5 * x * x).exp();
        let mut sum = 0.0;
        for (n, &c) in self.v.iter().enumerate() {
            sum += c * cur;
            let (a, b, _) = table[n];
            let next = x * a * cur - b * prev;
            prev = cur;
            cur = next;
        }
        sum
    }
}

impl Potential for PotentialCoeffs {
    fn value(&self, x: f64) -> f64 {
        0.5 * x * x + self.deviation(x)
    }

    fn value_and_derivative(&self, x: f64) -> (f64, f64) {
        // φ_n' = x φ_n − √(2(n+1)) φ_{n+1}
        let table = recurrence_table();
        let mut prev = 0.0;
        let mut cur = PI_POW_NEG_QUARTER * (-0.5 * x * x).exp();
        let mut value = 0.0;
        let mut slope = 0.0;
        for (n, &c) in self.v.iter().enumerate() {
            let (a, b, d) = table[n];
            let next = x * a * cur - b * prev;
            value += c * cur;
            slope += c * (x * cur - d * next);
            prev = cur;
            cur = next;
        }
        (0.5 * x * x + value, x + slope)
    }
}

/// The show-case ground truth `x²/2 + a·sin(5x/π)·e^(-x²/2)` in closed form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShowcasePotential {
    pub amplitude: f64,
}

impl Default for ShowcasePotential {
    fn default() -> Self {
        Self { amplitude: 5.0 }
    }
}

impl Potential for ShowcasePotential {
    fn value(&self, x: f64) -> f64 {
        0.5 * x * x + self.amplitude * (5.0 * x / PI).sin() * (-0.5 * x * x).exp()
    }

    fn value_and_derivative(&self, x: f64) -> (f64, f64) {
        let k = 5.0 / PI;
        let (s, c) = (k * x).sin_cos();
        let g = (-0.5 * x * x).exp();
        (
            0.5 * x * x + self.amplitude * s * g,
            x + self.amplitude * g * (k * c - x * s),
        )
    }
}

/// A ground-truth potential: either an explicit coefficient vector or the
/// closed-form show-case well.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TruthPotential {
    Coefficients { coeffs: PotentialCoeffs },
    Showcase { amplitude: f64 },
}

impl Potential for TruthPotential {
    fn value(&self, x: f64) -> f64 {
        match self {
            TruthPotential::Coefficients { coeffs } => coeffs.value(x),
            TruthPotential::Showcase { amplitude } => ShowcasePotential {
                amplitude: *amplitude,
            }
            .value(x),
        }
    }

    fn value_and_derivative(&self, x: f64) -> (f64, f64) {
        match self {
            TruthPotential::Coefficients { coeffs } => coeffs.value_and_derivative(x),
            TruthPotential::Showcase { amplitude } => ShowcasePotential {
                amplitude: *amplitude,
            }
            .value_and_derivative(x),
        }
    }
}

/// Gaussian prior on the coefficients: `v_i = γ_i ξ_i`, `ξ_i ~ N(0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPrior", into = "RawPrior")]
pub struct PriorSpec {
    gamma: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawPrior {
    gamma: Vec<f64>,
}

impl TryFrom<RawPrior> for PriorSpec {
    type Error = Error;
    fn try_from(raw: RawPrior) -> Result<Self> {
        PriorSpec::new(raw.gamma)
    }
}

impl From<PriorSpec> for RawPrior {
    fn from(p: PriorSpec) -> Self {
        RawPrior { gamma: p.gamma }
    }
}

impl PriorSpec {
    pub fn new(gamma: Vec<f64>) -> Result<Self> {
        if gamma.is_empty() {
            return Err(Error::param("gamma", "at least one mode required"));
        }
        if let Some(i) = gamma.iter().position(|g| !(g.is_finite() && *g > 0.0)) {
            return Err(Error::param(
                "gamma",
                format!("γ_{i} = {} must be positive and finite", gamma[i]),
            ));
        }
        Ok(Self { gamma })
    }

    /// `γ_j = scale · (j + 1)^(-exponent)` for `j = 0..=level`.
    pub fn power_law(level: usize, scale: f64, exponent: f64) -> Result<Self> {
        Self::new(
            (0..=level)
                .map(|j| scale * ((j + 1) as f64).powf(-exponent))
                .collect(),
        )
    }

    pub fn truncation(&self) -> usize {
        self.gamma.len() - 1
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }
}

/// Draws `v_i = γ_i ξ_i` with independent standard normal `ξ_i`.
pub fn sample_prior<R: Rng + ?Sized>(spec: &PriorSpec, rng: &mut R) -> PotentialCoeffs {
    let v = spec
        .gamma
        .iter()
        .map(|g| g * rng.sample::<f64, _>(StandardNormal))
        .collect();
    PotentialCoeffs { v }
}

/// Uniform grid on `[x_min, x_max]` with `n_points` nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub n_points: usize,
}

impl GridSpec {
    pub fn new(x_min: f64, x_max: f64, n_points: usize) -> Result<Self> {
        let g = Self {
            x_min,
            x_max,
            n_points,
        };
        g.validate(2)?;
        Ok(g)
    }

    /// Norm quadrature default: `[-12, 12]`, 4801 nodes.
    pub fn norm_default() -> Self {
        Self {
            x_min: -12.0,
            x_max: 12.0,
            n_points: 4801,
        }
    }

    pub(crate) fn validate(&self, min_points: usize) -> Result<()> {
        if self.n_points < min_points {
            return Err(Error::InvalidGrid(format!(
                "{} points, need at least {min_points}",
                self.n_points
            )));
        }
        if !(self.x_min.is_finite() && self.x_max.is_finite() && self.x_min < self.x_max) {
            return Err(Error::InvalidGrid(format!(
                "bad interval [{}, {}]",
                self.x_min, self.x_max
            )));
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        (self.x_max - self.x_min) / (self.n_points - 1) as f64
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        let h = self.spacing();
        (0..self.n_points).map(move |i| self.x_min + i as f64 * h)
    }
}

/// `‖V1 − V2‖_{L²} + ‖V1 − V2‖_{L∞}` on the grid (trapezoid rule for L²).
pub fn w1_distance(a: &PotentialCoeffs, b: &PotentialCoeffs, grid: &GridSpec) -> Result<f64> {
    grid.validate(2)?;
    let len = a.v.len().max(b.v.len());
    let diff: Vec<f64> = (0..len)
        .map(|i| a.v.get(i).copied().unwrap_or(0.0) - b.v.get(i).copied().unwrap_or(0.0))
        .collect();
    let diff = PotentialCoeffs { v: diff };
    let h = grid.spacing();
    let last = grid.n_points - 1;
    let (mut l2, mut linf) = (0.0_f64, 0.0_f64);
    for (i, x) in grid.points().enumerate() {
        let d = diff.deviation(x);
        let w = if i == 0 || i == last { 0.5 } else { 1.0 };
        l2 += w * d * d;
        linf = linf.max(d.abs());
    }
    Ok((l2 * h).sqrt() + linf)
}
