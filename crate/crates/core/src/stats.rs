//! Small statistics helpers shared by the samplers.

use serde::{Deserialize, Serialize};

/// Mean with a standard error that accounts for autocorrelation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForwardEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub n_samples: usize,
}

/// Streaming batch-means accumulator for a series of known length.
///
/// Sample `i` of `total` lands in batch `⌊i·B/total⌋`, so batch sizes differ
/// by at most one.
#[derive(Debug, Clone)]
pub struct BatchMeans {
    total: usize,
    seen: usize,
    sums: Vec<f64>,
    counts: Vec<usize>,
}

impl BatchMeans {
    pub fn new(total: usize, batches: usize) -> Self {
        let batches = batches.clamp(1, total.max(1));
        Self {
            total,
            seen: 0,
            sums: vec![0.0; batches],
            counts: vec![0; batches],
        }
    }

    #[inline]
    pub fn push(&mut self, x: f64) {
        debug_assert!(self.seen < self.total);
        let b = self.seen * self.sums.len() / self.total;
        self.sums[b] += x;
        self.counts[b] += 1;
        self.seen += 1;
    }

    pub fn finish(&self) -> ForwardEstimate {
        let n = self.seen;
        if n == 0 {
            return ForwardEstimate {
                mean: f64::NAN,
                std_err: f64::NAN,
                n_samples: 0,
            };
        }
        let mean = self.sums.iter().sum::<f64>() / n as f64;
        let means: Vec<f64> = self
            .sums
            .iter()
            .zip(&self.counts)
            .filter(|(_, &c)| c > 0)
            .map(|(s, &c)| s / c as f64)
            .collect();
        let b = means.len();
        let std_err = if b < 2 {
            0.0
        } else {
            let ss: f64 = means.iter().map(|m| (m - mean) * (m - mean)).sum();
            (ss / (b * (b - 1)) as f64).sqrt()
        };
        ForwardEstimate {
            mean,
            std_err,
            n_samples: n,
        }
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Standard error of the mean of independent values.
pub fn std_err(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    (variance(xs) / xs.len() as f64).sqrt()
}

/// Lag-`k` sample autocorrelation, normalized by the lag-0 sum.
pub fn lag_correlation(xs: &[f64], k: usize) -> f64 {
    let m = mean(xs);
    let c0: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    let ck: f64 = xs
        .iter()
        .zip(&xs[k..])
        .map(|(a, b)| (a - m) * (b - m))
        .sum();
    ck / c0
}

/// SplitMix64 finalizer, used to derive independent stream seeds.
pub fn mix_seed(parts: &[u64]) -> u64 {
    let mut z = 0x9E37_79B9_7F4A_7C15_u64;
    for &p in parts {
        z = z.wrapping_add(p).wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}
