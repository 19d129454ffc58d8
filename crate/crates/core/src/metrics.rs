//! Distances between discrete distributions, a quadrature posterior for
//! 2-mode surrogate problems, and the noise-scale stability sweep.

use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::basis::PriorSpec;
use crate::error::{check_len, Error, Result};
use crate::inversion::{
    neg_log_likelihood, run_inversion, ForwardModel, InversionConfig, NoiseModel,
};
use crate::stats::mix_seed;

/// Probability weights on a finite, shared support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDist {
    weights: Vec<f64>,
}

impl DiscreteDist {
    /// Nonnegative weights summing to 1 within `1e-12`.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidDistribution("empty support".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidDistribution(
                "weights must be finite and nonnegative".into(),
            ));
        }
        let s: f64 = weights.iter().sum();
        if (s - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidDistribution(format!(
                "weights sum to {s}, not 1"
            )));
        }
        Ok(Self { weights })
    }

    /// Normalizes nonnegative weights with a positive total.
    pub fn from_unnormalized(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidDistribution(
                "weights must be finite and nonnegative".into(),
            ));
        }
        let s: f64 = weights.iter().sum();
        // also rejects NaN
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(s > 0.0) {
            return Err(Error::InvalidDistribution("total weight is zero".into()));
        }
        Ok(Self {
            weights: weights.iter().map(|w| w / s).collect(),
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// `½ Σ |p_i − q_i|`.
pub fn tv_distance(p: &DiscreteDist, q: &DiscreteDist) -> Result<f64> {
    check_len(p.len(), q.len())?;
    Ok(0.5
        * p.weights
            .iter()
            .zip(&q.weights)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>())
}

/// `√(½ Σ (√p_i − √q_i)²)`.
pub fn hellinger_distance(p: &DiscreteDist, q: &DiscreteDist) -> Result<f64> {
    check_len(p.len(), q.len())?;
    let s: f64 = p
        .weights
        .iter()
        .zip(&q.weights)
        .map(|(a, b)| {
            let d = a.sqrt() - b.sqrt();
            d * d
        })
        .sum();
    Ok((0.5 * s).sqrt().min(1.0))
}

/// Tensor grid of rectangular cells on a 2-D box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    pub cells: [usize; 2],
    /// Midpoint sub-quadrature nodes per cell and axis.
    pub sub: usize,
}

impl Grid2D {
    /// `±half_width · γ_i` around zero for the first two prior modes.
    pub fn covering(prior: &PriorSpec, half_width: f64, cells: usize, sub: usize) -> Result<Self> {
        if prior.truncation() < 1 {
            return Err(Error::param("prior", "need at least two modes"));
        }
        let g = prior.gamma();
        let grid = Self {
            lo: [-half_width * g[0], -half_width * g[1]],
            hi: [half_width * g[0], half_width * g[1]],
            cells: [cells, cells],
            sub,
        };
        grid.validate()?;
        Ok(grid)
    }

    fn validate(&self) -> Result<()> {
        for a in 0..2 {
            if !(self.lo[a].is_finite() && self.hi[a].is_finite() && self.hi[a] > self.lo[a]) {
                return Err(Error::InvalidGrid("each axis needs lo < hi".into()));
            }
            if self.cells[a] == 0 {
                return Err(Error::InvalidGrid("need at least one cell per axis".into()));
            }
        }
        if self.sub == 0 {
            return Err(Error::InvalidGrid(
                "need at least one sub-node per cell".into(),
            ));
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        self.cells[0] * self.cells[1]
    }

    fn width(&self, a: usize) -> f64 {
        (self.hi[a] - self.lo[a]) / self.cells[a] as f64
    }

    /// Row-major cell index (`axis 0` slow), `None` outside the box.
    pub fn cell_index(&self, x: [f64; 2]) -> Option<usize> {
        let mut idx = [0usize; 2];
        for a in 0..2 {
            if !(x[a] >= self.lo[a] && x[a] < self.hi[a]) {
                return None;
            }
            idx[a] = (((x[a] - self.lo[a]) / self.width(a)) as usize).min(self.cells[a] - 1);
        }
        Some(idx[0] * self.cells[1] + idx[1])
    }

    /// Same box with every cell split into `factor²` cells.
    pub fn refined(&self, factor: usize) -> Self {
        Self {
            cells: [self.cells[0] * factor, self.cells[1] * factor],
            ..*self
        }
    }
}

/// Empirical distribution of 2-D samples over the grid cells.
pub fn histogram(samples: &[[f64; 2]], grid: &Grid2D) -> Result<DiscreteDist> {
    grid.validate()?;
    let mut counts = vec![0.0; grid.n_cells()];
    for s in samples {
        if let Some(i) = grid.cell_index(*s) {
            counts[i] += 1.0;
        }
    }
    DiscreteDist::from_unnormalized(counts)
}

/// Cell masses of `prior(v) · exp(−Φ(G(v); y*))` for a 2-mode forward map.
pub fn brute_force_posterior<F>(
    forward: F,
    y_star: &[f64],
    noise: &NoiseModel,
    prior: &PriorSpec,
    grid: &Grid2D,
) -> Result<DiscreteDist>
where
    F: Fn([f64; 2]) -> Vec<f64>,
{
    grid.validate()?;
    check_len(2, prior.gamma().len())?;
    let g = prior.gamma();
    for ((&lo, &hi), &ga) in grid.lo.iter().zip(&grid.hi).zip(g) {
        if lo > -6.0 * ga * (1.0 - 1e-12) || hi < 6.0 * ga * (1.0 - 1e-12) {
            return Err(Error::InvalidGrid(
                "grid must cover ±6 prior standard deviations".into(),
            ));
        }
    }
    let (w0, w1) = (grid.width(0), grid.width(1));
    let s = grid.sub;
    let mut logw = Vec::with_capacity(grid.n_cells());
    for i in 0..grid.cells[0] {
        for j in 0..grid.cells[1] {
            let mut terms = Vec::with_capacity(s * s);
            for a in 0..s {
                for b in 0..s {
                    let x0 = grid.lo[0] + w0 * (i as f64 + (a as f64 + 0.5) / s as f64);
                    let x1 = grid.lo[1] + w1 * (j as f64 + (b as f64 + 0.5) / s as f64);
                    let log_prior = -0.5 * ((x0 / g[0]).powi(2) + (x1 / g[1]).powi(2));
                    let phi = neg_log_likelihood(&forward([x0, x1]), y_star, noise)?;
                    terms.push(log_prior - phi);
                }
            }
            logw.push(log_sum_exp(&terms));
        }
    }
    let top = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return Err(Error::DegeneratePosterior);
    }
    let w: Vec<f64> = logw.iter().map(|l| (l - top).exp()).collect();
    DiscreteDist::from_unnormalized(w).map_err(|_| Error::DegeneratePosterior)
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn fit_loglog_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    check_len(x.len(), y.len())?;
    if x.len() < 2 {
        return Err(Error::DegenerateDesign("need at least two points".into()));
    }
    if x.iter().chain(y).any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::DegenerateDesign(
            "log-log fit needs positive values".into(),
        ));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = crate::stats::mean(&lx);
    let my = crate::stats::mean(&ly);
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx <= 1e-24 * lx.iter().map(|a| a * a).sum::<f64>().max(1.0) {
        return Err(Error::DegenerateDesign("all scales are equal".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    Ok(sxy / sxx)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub gamma_scales: Vec<f64>,
    /// `mean_abs_errors[j][s]`: observable `j` at scale `s`.
    pub mean_abs_errors: Vec<Vec<f64>>,
    pub fitted_slopes: Vec<f64>,
    /// `predictions[s][d][j]`: chain-mean prediction for noisy draw `d`.
    pub predictions: Vec<Vec<Vec<f64>>>,
}

impl StabilityReport {
    pub fn from_errors(gamma_scales: Vec<f64>, mean_abs_errors: Vec<Vec<f64>>) -> Result<Self> {
        for e in &mean_abs_errors {
            check_len(gamma_scales.len(), e.len())?;
        }
        let fitted_slopes = mean_abs_errors
            .iter()
            .map(|e| fit_loglog_slope(&gamma_scales, e))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            gamma_scales,
            mean_abs_errors,
            fitted_slopes,
            predictions: Vec::new(),
        })
    }

    /// `scale,observable_id,mean_abs_error`
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["scale", "observable_id", "mean_abs_error"])?;
        for (s, g) in self.gamma_scales.iter().enumerate() {
            for (j, e) in self.mean_abs_errors.iter().enumerate() {
                out.write_record([g.to_string(), j.to_string(), e[s].to_string()])?;
            }
        }
        out.flush()?;
        Ok(())
    }

    /// `{"gamma_scales": [...], "fitted_slopes": [...]}`
    pub fn slopes_json(&self) -> serde_json::Value {
        serde_json::json!({
            "gamma_scales": self.gamma_scales,
            "fitted_slopes": self.fitted_slopes,
        })
    }
}

/// Settings of the noise sweep beyond the base inversion config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub gamma_scales: Vec<f64>,
    #[serde(default = "default_draws")]
    pub draws: usize,
}

fn default_draws() -> usize {
    4
}

/// For every scale `Γ̃` and noisy draw `y ~ N(y*, Γ̃ I)`, runs an inversion
/// with `Γ_η = Γ̃ I` and records the chain-mean test predictions; the error
/// per observable is the mean over draws of `|prediction − truth|`.
pub fn stability_sweep<M: ForwardModel>(
    model: &M,
    y_clean: &[f64],
    truth_test: &[f64],
    sweep: &SweepConfig,
    base: &InversionConfig,
    workers: usize,
) -> Result<StabilityReport> {
    let scales = &sweep.gamma_scales;
    if scales.len() < 3 {
        return Err(Error::param("gamma_scales", "need at least three scales"));
    }
    if scales.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
        return Err(Error::param("gamma_scales", "scales must be positive"));
    }
    if sweep.draws == 0 {
        return Err(Error::param("draws", "need at least one noisy draw"));
    }
    check_len(model.n_test(), truth_test.len())?;
    check_len(model.n_train(), y_clean.len())?;
    base.validate()?;

    let jobs: Vec<(usize, usize)> = (0..scales.len())
        .flat_map(|s| (0..sweep.draws).map(move |d| (s, d)))
        .collect();
    let results: Mutex<Vec<Option<Result<Vec<f64>>>>> =
        Mutex::new(jobs.iter().map(|_| None).collect());
    let next = AtomicUsize::new(0);
    std::thread::scope(|sc| {
        for _ in 0..workers.clamp(1, jobs.len()) {
            sc.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::SeqCst);
                if k >= jobs.len() {
                    break;
                }
                let (s, d) = jobs[k];
                let out = sweep_point(model, y_clean, scales[s], s, d, base);
                results.lock().unwrap()[k] = Some(out);
            });
        }
    });
    let flat = results
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every sweep point is scheduled"))
        .collect::<Result<Vec<_>>>()?;
    let predictions: Vec<Vec<Vec<f64>>> = flat.chunks(sweep.draws).map(|c| c.to_vec()).collect();
    let errors: Vec<Vec<f64>> = (0..truth_test.len())
        .map(|j| {
            predictions
                .iter()
                .map(|draws| {
                    draws
                        .iter()
                        .map(|p| (p[j] - truth_test[j]).abs())
                        .sum::<f64>()
                        / draws.len() as f64
                })
                .collect()
        })
        .collect();
    let mut report = StabilityReport::from_errors(scales.clone(), errors)?;
    report.predictions = predictions;
    Ok(report)
}

fn sweep_point<M: ForwardModel>(
    model: &M,
    y_clean: &[f64],
    scale: f64,
    s: usize,
    d: usize,
    base: &InversionConfig,
) -> Result<Vec<f64>> {
    let noise = NoiseModel::scalar(scale)?;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[base.seed, 0x5eed, s as u64, d as u64]));
    let eta = noise.sample(y_clean.len(), &mut rng)?;
    let y: Vec<f64> = y_clean.iter().zip(&eta).map(|(a, b)| a + b).collect();
    let cfg = InversionConfig {
        noise,
        seed: mix_seed(&[base.seed, s as u64, d as u64]),
        ..base.clone()
    };
    let res = run_inversion(model, &y, &cfg, 1)?;
    if let Some(msg) = res.aborted() {
        return Err(Error::RunAborted(msg.to_string()));
    }
    Ok(res.predictions.iter().map(|p| p.mean).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn dd(w: &[f64]) -> DiscreteDist {
        DiscreteDist::new(w.to_vec()).unwrap()
    }

    #[test]
    fn distance_examples() {
        let p = dd(&[0.2, 0.3, 0.5]);
        assert_eq!(tv_distance(&p, &p).unwrap(), 0.0);
        assert_eq!(hellinger_distance(&p, &p).unwrap(), 0.0);
        assert_eq!(
            tv_distance(&dd(&[1.0, 0.0]), &dd(&[0.0, 1.0])).unwrap(),
            1.0
        );
        assert!(
            (hellinger_distance(&dd(&[1.0, 0.0]), &dd(&[0.0, 1.0])).unwrap() - 1.0).abs() < 1e-15
        );
        assert!((tv_distance(&dd(&[1.0, 0.0]), &dd(&[0.5, 0.5])).unwrap() - 0.5).abs() < 1e-15);
        let h = hellinger_distance(&dd(&[1.0, 0.0]), &dd(&[0.5, 0.5])).unwrap();
        assert!((h - (1.0 - 0.5f64.sqrt()).sqrt()).abs() < 1e-15);
        assert!((h - 0.5412).abs() < 1e-4);
    }

    #[test]
    fn invalid_distributions() {
        assert!(DiscreteDist::new(vec![0.5, 0.4]).is_err());
        assert!(DiscreteDist::new(vec![1.5, -0.5]).is_err());
        assert!(DiscreteDist::new(vec![]).is_err());
        assert!(DiscreteDist::from_unnormalized(vec![0.0, 0.0]).is_err());
        assert!(tv_distance(&dd(&[1.0]), &dd(&[0.5, 0.5])).is_err());
    }

    #[test]
    fn sandwich_and_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..1000 {
            let n = rng.random_range(1..30);
            let p = DiscreteDist::from_unnormalized((0..n).map(|_| rng.random::<f64>()).collect())
                .unwrap();
            let q = DiscreteDist::from_unnormalized((0..n).map(|_| rng.random::<f64>()).collect())
                .unwrap();
            let tv = tv_distance(&p, &q).unwrap();
            let h = hellinger_distance(&p, &q).unwrap();
            assert!(tv / 2f64.sqrt() <= h + 1e-12);
            assert!(h <= tv.sqrt() + 1e-12);
            assert_eq!(tv, tv_distance(&q, &p).unwrap());
            assert_eq!(h, hellinger_distance(&q, &p).unwrap());
        }
    }

    fn surrogate_setup() -> (PriorSpec, NoiseModel, Grid2D) {
        let prior = PriorSpec::new(vec![1.0, 0.5]).unwrap();
        let noise = NoiseModel::scalar(0.1).unwrap();
        let grid = Grid2D::covering(&prior, 6.0, 60, 3).unwrap();
        (prior, noise, grid)
    }

    #[test]
    fn flat_likelihood_gives_prior() {
        let (prior, noise, grid) = surrogate_setup();
        let post = brute_force_posterior(|_| vec![0.0], &[0.7], &noise, &prior, &grid).unwrap();
        // independent prior cell masses via the normal CDF
        let cdf = |x: f64| 0.5 * statrs::function::erf::erfc(-x / 2f64.sqrt());
        let w: Vec<f64> = (0..60)
            .flat_map(|i| {
                (0..60).map(move |j| {
                    let a = -6.0 + 0.2 * i as f64;
                    let b = -6.0 + 0.2 * j as f64;
                    (cdf(a + 0.2) - cdf(a)) * (cdf(b + 0.2) - cdf(b))
                })
            })
            .collect();
        let exact = DiscreteDist::from_unnormalized(w).unwrap();
        assert!(tv_distance(&post, &exact).unwrap() < 1e-3);
    }

    #[test]
    fn concentrates_at_truth() {
        let (prior, _, grid) = surrogate_setup();
        let noise = NoiseModel::scalar(1e-8).unwrap();
        let truth = [0.41, -0.27];
        let post = brute_force_posterior(|v| v.to_vec(), &truth, &noise, &prior, &grid).unwrap();
        let cell = grid.cell_index(truth).unwrap();
        assert!(post.weights()[cell] > 0.99);
    }

    #[test]
    fn refinement_invariance() {
        let (prior, noise, grid) = surrogate_setup();
        let f = |v: [f64; 2]| v.to_vec();
        let y = [0.3, -0.2];
        let coarse = brute_force_posterior(f, &y, &noise, &prior, &grid).unwrap();
        let fine = brute_force_posterior(f, &y, &noise, &prior, &grid.refined(2)).unwrap();
        // aggregate fine cells back onto the coarse grid
        let mut agg = vec![0.0; grid.n_cells()];
        for i in 0..120 {
            for j in 0..120 {
                agg[(i / 2) * 60 + j / 2] += fine.weights()[i * 120 + j];
            }
        }
        let agg = DiscreteDist::from_unnormalized(agg).unwrap();
        assert!(tv_distance(&coarse, &agg).unwrap() < 1e-3);
    }

    #[test]
    fn grid_must_cover_prior() {
        let (prior, noise, _) = surrogate_setup();
        let small = Grid2D::covering(&prior, 3.0, 10, 1).unwrap();
        assert!(matches!(
            brute_force_posterior(|v| v.to_vec(), &[0.0, 0.0], &noise, &prior, &small),
            Err(Error::InvalidGrid(_))
        ));
        let grid = Grid2D::covering(&prior, 6.0, 10, 1).unwrap();
        assert!(matches!(
            brute_force_posterior(|_| vec![f64::INFINITY], &[0.0], &noise, &prior, &grid),
            Err(Error::DegeneratePosterior)
        ));
    }

    #[test]
    fn slope_fit_examples() {
        let x = [0.01, 0.03, 0.1, 0.3];
        let y: Vec<f64> = x.iter().map(|g: &f64| 0.7 * g.sqrt()).collect();
        assert!((fit_loglog_slope(&x, &y).unwrap() - 0.5).abs() < 1e-10);
        assert!(matches!(
            fit_loglog_slope(&[0.1, 0.1, 0.1], &[1.0, 2.0, 3.0]),
            Err(Error::DegenerateDesign(_))
        ));
        let r = StabilityReport::from_errors(x.to_vec(), vec![y.clone(), y]).unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("scale,observable_id,mean_abs_error\n"));
        assert_eq!(text.lines().count(), 9);
        assert_eq!(
            r.slopes_json()["fitted_slopes"].as_array().unwrap().len(),
            2
        );
    }

    #[test]
    fn histogram_bins() {
        let grid = Grid2D {
            lo: [0.0, 0.0],
            hi: [1.0, 1.0],
            cells: [2, 2],
            sub: 1,
        };
        let h = histogram(
            &[[0.1, 0.1], [0.9, 0.1], [0.9, 0.9], [0.9, 0.8], [5.0, 0.0]],
            &grid,
        )
        .unwrap();
        assert_eq!(h.weights(), &[0.25, 0.0, 0.25, 0.5]);
    }
}
