//! Ring-polymer action, extended Hamiltonian, forces and bead averages.
//!
//! Beads are stored 0-based with the cyclic neighbour `q[N] ≡ q[0]`.

use serde::{Deserialize, Serialize};

use crate::basis::{hermite_single, Potential, PI_POW_NEG_QUARTER};
use crate::error::{check_len, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RingParams {
    pub n_beads: usize,
    pub mass: f64,
    pub beta: f64,
}

impl RingParams {
    pub fn new(n_beads: usize, mass: f64, beta: f64) -> Result<Self> {
        let p = Self {
            n_beads,
            mass,
            beta,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_beads < 2 {
            return Err(Error::param("n_beads", "need at least 2 beads"));
        }
        if !(self.mass.is_finite() && self.mass > 0.0) {
            return Err(Error::param("mass", "must be positive"));
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(Error::param("beta", "must be positive"));
        }
        Ok(())
    }

    /// `β_N = β / N`.
    pub fn beta_n(&self) -> f64 {
        self.beta / self.n_beads as f64
    }

    /// Stiffness `M / β_N²` of each inter-bead spring.
    pub fn spring(&self) -> f64 {
        let b = self.beta_n();
        self.mass / (b * b)
    }
}

/// Bead positions and auxiliary momenta.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RingState {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

impl RingState {
    pub fn new(q: Vec<f64>, p: Vec<f64>) -> Result<Self> {
        check_len(q.len(), p.len())?;
        Ok(Self { q, p })
    }

    pub fn at_rest(n: usize, x: f64) -> Self {
        Self {
            q: vec![x; n],
            p: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(&self.p).all(|v| v.is_finite())
    }

    pub fn kinetic(&self, mass: f64) -> f64 {
        self.p.iter().map(|p| p * p).sum::<f64>() / (2.0 * mass)
    }
}

/// Shape of a bounded position observable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "parameters", rename_all = "snake_case")]
pub enum ObservableKind {
    /// `e^(-a (x - c)²)`
    GaussianBump { center: f64, exponent: f64 },
    /// `φ_n(s x)`
    ScaledHermite { order: usize, scale: f64 },
}

/// Position observable with a declared sup-norm bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observable {
    #[serde(flatten)]
    pub kind: ObservableKind,
    pub bound: f64,
}

impl Observable {
    pub fn gaussian(center: f64, exponent: f64) -> Self {
        Self {
            kind: ObservableKind::GaussianBump { center, exponent },
            bound: 1.0,
        }
    }

    pub fn scaled_hermite(order: usize, scale: f64) -> Self {
        Self {
            kind: ObservableKind::ScaledHermite { order, scale },
            bound: PI_POW_NEG_QUARTER,
        }
    }

    /// Identity observable (a bump with zero exponent).
    pub fn constant_one() -> Self {
        Self::gaussian(0.0, 0.0)
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match self.kind {
            ObservableKind::GaussianBump { center, exponent } => {
                let d = x - center;
                (-exponent * d * d).exp()
            }
            ObservableKind::ScaledHermite { order, scale } => hermite_single(order, scale * x),
        }
    }

    /// Checks the declared bound on a dense grid over `[-50, 50]` and the
    /// parameter ranges.
    pub fn validate(&self) -> Result<()> {
        match self.kind {
            ObservableKind::GaussianBump { center, exponent } => {
                if !(center.is_finite() && exponent.is_finite() && exponent >= 0.0) {
                    return Err(Error::param(
                        "observable",
                        "bump needs finite center, exponent ≥ 0",
                    ));
                }
            }
            ObservableKind::ScaledHermite { order, scale } => {
                if order > 256 || !scale.is_finite() {
                    return Err(Error::param(
                        "observable",
                        "hermite order ≤ 256 and finite scale",
                    ));
                }
            }
        }
        if !(self.bound.is_finite() && self.bound > 0.0) {
            return Err(Error::param("observable", "bound must be positive"));
        }
        let n = 20_001;
        let worst = (0..n)
            .map(|i| self.eval(-50.0 + 100.0 * i as f64 / (n - 1) as f64).abs())
            .fold(0.0, f64::max);
        if worst > self.bound * (1.0 + 1e-12) {
            return Err(Error::param(
                "observable",
                format!("sup |A| ≈ {worst} exceeds declared bound {}", self.bound),
            ));
        }
        Ok(())
    }
}

fn spring_energy(q: &[f64]) -> f64 {
    let n = q.len();
    (0..n)
        .map(|i| {
            let d = q[i] - q[(i + 1) % n];
            d * d
        })
        .sum::<f64>()
}

/// `S_N(q) = β_N Σ [ M (q_i − q_{i+1})² / (2 β_N²) + V(q_i) ]`.
pub fn action<P: Potential + ?Sized>(q: &[f64], v: &P, params: &RingParams) -> Result<f64> {
    check_len(params.n_beads, q.len())?;
    Ok(params.beta_n() * ring_potential_energy(q, v, params))
}

/// Spring plus external energy, the `q`-part of `H_N`.
pub(crate) fn ring_potential_energy<P: Potential + ?Sized>(
    q: &[f64],
    v: &P,
    params: &RingParams,
) -> f64 {
    0.5 * params.spring() * spring_energy(q) + q.iter().map(|&x| v.value(x)).sum::<f64>()
}

/// `H_N(q, p) = |p|² / (2M) + Σ [ M (q_i − q_{i+1})² / (2 β_N²) + V(q_i) ]`.
pub fn hamiltonian<P: Potential + ?Sized>(
    state: &RingState,
    v: &P,
    params: &RingParams,
) -> Result<f64> {
    check_len(params.n_beads, state.q.len())?;
    check_len(params.n_beads, state.p.len())?;
    Ok(state.kinetic(params.mass) + ring_potential_energy(&state.q, v, params))
}

/// `-∇_q H_N`.
pub fn force<P: Potential + ?Sized>(q: &[f64], v: &P, params: &RingParams) -> Result<Vec<f64>> {
    check_len(params.n_beads, q.len())?;
    let mut out = vec![0.0; q.len()];
    force_into(q, v, params.spring(), &mut out);
    Ok(out)
}

#[inline]
pub(crate) fn spring_force_into(q: &[f64], k: f64, out: &mut [f64]) {
    let n = q.len();
    for i in 0..n {
        let prev = q[(i + n - 1) % n];
        let next = q[(i + 1) % n];
        out[i] = -k * (2.0 * q[i] - prev - next);
    }
}

#[inline]
pub(crate) fn force_into<P: Potential + ?Sized>(q: &[f64], v: &P, k: f64, out: &mut [f64]) {
    spring_force_into(q, k, out);
    for (f, &x) in out.iter_mut().zip(q) {
        *f -= v.value_and_derivative(x).1;
    }
}

/// `(1/N) Σ A(q_i)`.
pub fn ring_average(a: &Observable, q: &[f64]) -> f64 {
    q.iter().map(|&x| a.eval(x)).sum::<f64>() / q.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{PotentialCoeffs, ShowcasePotential};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn params_validation() {
        assert!(RingParams::new(1, 1.0, 1.0).is_err());
        assert!(RingParams::new(4, 0.0, 1.0).is_err());
        assert!(RingParams::new(4, 1.0, -1.0).is_err());
        let p = RingParams::new(8, 2.0, 3.0).unwrap();
        assert_eq!(p.beta_n(), 3.0 / 8.0);
    }

    #[test]
    fn action_examples() {
        let vo = PotentialCoeffs::harmonic(4);
        let p = RingParams::new(5, 1.3, 2.0).unwrap();
        assert_eq!(action(&[0.0; 5], &vo, &p).unwrap(), 0.0);

        // N=2, β=2 ⇒ β_N=1: two springs of ½ each plus V_o(1)=½.
        let p2 = RingParams::new(2, 1.0, 2.0).unwrap();
        assert!((action(&[0.0, 1.0], &vo, &p2).unwrap() - 1.5).abs() < 1e-15);

        let q = [0.3, -0.2, 1.1, 0.5, -0.8];
        let c = 0.7;
        let shifted: Vec<f64> = q.iter().map(|x| x + c).collect();
        let expected = p.beta_n()
            * q.iter()
                .map(|x| ((x + c) * (x + c) - x * x) / 2.0)
                .sum::<f64>();
        let delta = action(&shifted, &vo, &p).unwrap() - action(&q, &vo, &p).unwrap();
        assert!((delta - expected).abs() < 1e-12);

        assert!(matches!(
            action(&[0.0; 3], &vo, &p),
            Err(Error::Dimension {
                expected: 5,
                got: 3
            })
        ));
    }

    #[test]
    fn hamiltonian_examples() {
        let vo = PotentialCoeffs::harmonic(2);
        let p = RingParams::new(4, 2.5, 1.0).unwrap();
        let s = RingState::at_rest(4, 0.0);
        assert_eq!(hamiltonian(&s, &vo, &p).unwrap(), 0.0);
        let mut s = s;
        s.p[0] = 1.5;
        assert!((hamiltonian(&s, &vo, &p).unwrap() - 1.5 * 1.5 / 5.0).abs() < 1e-15);
    }

    #[test]
    fn kinetic_potential_split_and_cyclic_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let truth = ShowcasePotential::default();
        for _ in 0..50 {
            let n = rng.random_range(2..12);
            let p = RingParams::new(n, rng.random_range(0.5..10.0), rng.random_range(0.2..5.0))
                .unwrap();
            let q: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let mom: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let s = RingState::new(q.clone(), mom.clone()).unwrap();
            let h = hamiltonian(&s, &truth, &p).unwrap();
            let a = action(&q, &truth, &p).unwrap();
            let lhs = p.beta_n() * h - p.beta_n() * s.kinetic(p.mass);
            assert!((lhs - a).abs() <= 1e-12 * a.abs().max(1.0));

            let mut rq = q.clone();
            rq.rotate_left(1);
            let mut rp = mom.clone();
            rp.rotate_left(1);
            let rs = RingState::new(rq.clone(), rp).unwrap();
            assert!((action(&rq, &truth, &p).unwrap() - a).abs() <= 1e-12 * a.abs().max(1.0));
            assert!((hamiltonian(&rs, &truth, &p).unwrap() - h).abs() <= 1e-12 * h.abs().max(1.0));
        }
    }

    #[test]
    fn force_examples() {
        let even = PotentialCoeffs::new(vec![0.4, 0.0, -1.2, 0.0, 0.3]).unwrap();
        let p = RingParams::new(6, 1.0, 1.0).unwrap();
        let f = force(&[0.0; 6], &even, &p).unwrap();
        assert!(f.iter().all(|x| x.abs() < 1e-15));

        let vo = PotentialCoeffs::harmonic(3);
        let f = force(&[0.8; 6], &vo, &p).unwrap();
        assert!(f.iter().all(|x| (x + 0.8).abs() < 1e-12));
    }

    #[test]
    fn ring_average_examples() {
        let bump = Observable::gaussian(0.0, 1.0);
        assert_eq!(ring_average(&bump, &[0.0; 7]), 1.0);
        let h = Observable::scaled_hermite(3, 2.0);
        assert!((ring_average(&h, &[0.4; 5]) - h.eval(0.4)).abs() < 1e-15);
    }

    #[test]
    fn observable_bounds() {
        for o in [
            Observable::gaussian(-1.25, 1.0),
            Observable::scaled_hermite(1, 2.0),
            Observable::scaled_hermite(3, 3.0),
            Observable::constant_one(),
        ] {
            o.validate().unwrap();
        }
        let mut loose = Observable::gaussian(0.0, 1.0);
        loose.bound = 0.5;
        assert!(loose.validate().is_err());
    }

    #[test]
    fn observable_json_shape() {
        let o = Observable::gaussian(0.5, 1.0);
        let v: serde_json::Value = serde_json::to_value(o).unwrap();
        assert_eq!(v["kind"], "gaussian_bump");
        assert_eq!(v["parameters"]["center"], 0.5);
        assert_eq!(v["bound"], 1.0);
        let back: Observable = serde_json::from_value(v).unwrap();
        assert_eq!(back, o);
    }
}
