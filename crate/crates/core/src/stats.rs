//! Summation, Monte Carlo summaries and goodness-of-fit helpers.

use serde::Serialize;

use crate::error::{Error, Result};

/// Compensated (Neumaier) summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Pairwise tree sum with a fixed split pattern, so the result depends only on
/// the order of `xs`.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if xs.len() <= LEAF {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Sample mean and unbiased variance, both reduced pairwise.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = pairwise_sum(xs) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    (mean, pairwise_sum(&dev) / (n - 1) as f64)
}

/// Median of the means of `groups` consecutive blocks.
pub fn median_of_means(xs: &[f64], groups: usize) -> f64 {
    let g = groups.clamp(1, xs.len().max(1));
    let size = xs.len() / g;
    if size == 0 {
        return f64::NAN;
    }
    let mut means: Vec<f64> = (0..g)
        .map(|i| pairwise_sum(&xs[i * size..(i + 1) * size]) / size as f64)
        .collect();
    means.sort_by(|a, b| a.total_cmp(b));
    if g % 2 == 1 {
        means[g / 2]
    } else {
        0.5 * (means[g / 2 - 1] + means[g / 2])
    }
}

/// Summary of a Monte Carlo run.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_samples: usize,
    pub seed: u64,
    /// True when `mean` estimates a raw moment `E[X^q]` rather than a centred quantity.
    pub raw_moment: bool,
    pub median_of_means: f64,
    /// Set when the relative standard error exceeds 10%.
    pub heavy_tail_warning: bool,
}

impl McEstimate {
    pub fn from_samples(xs: &[f64], seed: u64, raw_moment: bool) -> Self {
        let (mean, var) = mean_var(xs);
        let stderr = if xs.len() > 1 { (var / xs.len() as f64).sqrt() } else { 0.0 };
        let groups = (xs.len() / 1000).clamp(1, 25) | 1;
        McEstimate {
            mean,
            stderr,
            n_samples: xs.len(),
            seed,
            raw_moment,
            median_of_means: median_of_means(xs, groups),
            heavy_tail_warning: mean != 0.0 && stderr / mean.abs() > 0.1,
        }
    }

    /// `|mean - target| <= k * stderr`, with exact equality accepted when `stderr = 0`.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.stderr + 1e-12 * target.abs().max(1.0)
    }
}

/// Target distributions for [`ks_distance`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Cdf {
    Exp1,
    Normal { mean: f64, var: f64 },
}

impl Cdf {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Cdf::Exp1 => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-x).exp_m1()
                }
            }
            Cdf::Normal { mean, var } => {
                0.5 * libm::erfc(-(x - mean) / (2.0 * var).sqrt())
            }
        }
    }
}

/// Kolmogorov–Smirnov sup distance between the empirical CDF of `samples` and `cdf`.
pub fn ks_distance(samples: &[f64], cdf: Cdf) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::invalid("ks_distance needs at least one sample"));
    }
    if let Cdf::Normal { var, .. } = cdf {
        if var.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
            return Err(Error::domain("normal variance must be positive"));
        }
    }
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len() as f64;
    let mut d = 0.0f64;
    for (i, x) in xs.iter().enumerate() {
        let f = cdf.eval(*x);
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    Ok(d.clamp(0.0, 1.0))
}

/// Wilson score interval for `k` successes in `n` trials.
pub fn wilson_interval(k: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n_f = n as f64;
    let p = k as f64 / n_f;
    let z2 = z * z;
    let denom = 1.0 + z2 / n_f;
    let centre = (p + z2 / (2.0 * n_f)) / denom;
    let half = z * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Pearson chi-squared statistic of observed counts against expected counts.
pub fn chi_squared(observed: &[u64], expected: &[f64]) -> f64 {
    observed
        .iter()
        .zip(expected)
        .filter(|(_, e)| **e > 0.0)
        .map(|(o, e)| {
            let d = *o as f64 - e;
            d * d / e
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_sample_at_median_has_distance_half() {
        let med = std::f64::consts::LN_2;
        let d = ks_distance(&[med], Cdf::Exp1).unwrap();
        assert!((d - 0.5).abs() < 1e-15);
        let d = ks_distance(&[0.0], Cdf::Normal { mean: 0.0, var: 1.0 }).unwrap();
        assert!((d - 0.5).abs() < 1e-15);
    }

    #[test]
    fn empty_sample_is_rejected() {
        assert!(ks_distance(&[], Cdf::Exp1).is_err());
    }

    #[test]
    fn ks_of_target_draws_is_small() {
        // DKW: P(D > eps) <= 2 exp(-2 n eps^2) = 2e-3.5 for n = 10^4, eps = 0.02.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let xs: Vec<f64> = (0..10_000).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
        assert!(ks_distance(&xs, Cdf::Exp1).unwrap() < 0.02);
        let ys: Vec<f64> = (0..10_000)
            .map(|_| 2.0 + 3.0 * rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        assert!(ks_distance(&ys, Cdf::Normal { mean: 2.0, var: 9.0 }).unwrap() < 0.02);
    }

    #[test]
    fn normal_cdf_values() {
        let c = Cdf::Normal { mean: 0.0, var: 1.0 };
        assert!((c.eval(0.0) - 0.5).abs() < 1e-16);
        assert!((c.eval(1.959963984540054) - 0.975).abs() < 1e-12);
    }

    #[test]
    fn wilson_contains_proportion() {
        let (lo, hi) = wilson_interval(25, 100, 1.96);
        assert!(lo < 0.25 && 0.25 < hi);
        assert!((lo - 0.1754).abs() < 1e-3 && (hi - 0.3430).abs() < 1e-3);
        assert_eq!(wilson_interval(0, 0, 1.96), (0.0, 1.0));
    }

    #[test]
    fn estimate_of_constant_has_zero_stderr() {
        let e = McEstimate::from_samples(&[1.0; 50], 3, true);
        assert_eq!(e.mean, 1.0);
        assert_eq!(e.stderr, 0.0);
        assert!(e.within(1.0, 3.0));
        assert_eq!(e.median_of_means, 1.0);
    }

    proptest! {
        #[test]
        fn pairwise_matches_compensated(xs in prop::collection::vec(-1e3f64..1e3, 0..400)) {
            let mut acc = NeumaierSum::default();
            for x in &xs { acc.add(*x); }
            let p = pairwise_sum(&xs);
            prop_assert!((p - acc.value()).abs() <= 1e-9);
        }

        #[test]
        fn ks_is_a_distance(xs in prop::collection::vec(-5f64..5.0, 1..100)) {
            let d = ks_distance(&xs, Cdf::Normal { mean: 0.0, var: 1.0 }).unwrap();
            prop_assert!((0.0..=1.0).contains(&d));
            prop_assert!(d >= 0.5 / xs.len() as f64 - 1e-15);
        }
    }
}
