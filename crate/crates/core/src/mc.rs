//! Reproducible Monte-Carlo plumbing.
//!
//! Every sample draws from its own counter-based ChaCha substream keyed by
//! `(seed, estimator, stratum, index)`, so the value of sample `k` does not
//! depend on which worker computes it. Reductions run over index-ordered
//! vectors with a fixed pairwise tree, which makes every estimate
//! bit-identical for any thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{invalid, Error, Result};

/// Default two-sided confidence level.
pub const DEFAULT_LEVEL: f64 = 0.95;

/// Identifies one substream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub seed: u64,
    pub estimator_id: u32,
    pub stratum: u64,
    pub index: u64,
}

/// Estimator identifiers used in stream keys.
pub mod estimator {
    pub const CHANNEL: u32 = 1;
    pub const THETA: u32 = 2;
    pub const PD: u32 = 3;
    pub const UPPER: u32 = 4;
    pub const ORACLE: u32 = 5;
}

pub type Rng = ChaCha8Rng;

pub fn substream(key: StreamKey) -> Rng {
    let mut bytes = [0u8; 32];
    bytes[..8].copy_from_slice(&key.seed.to_le_bytes());
    bytes[8..12].copy_from_slice(&key.estimator_id.to_le_bytes());
    bytes[12..16].copy_from_slice(b"uwbb");
    bytes[16..24].copy_from_slice(&key.stratum.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(bytes);
    rng.set_stream(key.index);
    rng
}

/// SplitMix64 finalizer, used to derive per-point seeds.
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed context for one estimate: the run seed plus the sweep point it
/// belongs to. Quantities shared by a whole run (the fixed `h_1` draw) are
/// keyed by the run seed alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamContext {
    pub seed: u64,
    pub point: u64,
}

impl StreamContext {
    pub fn new(seed: u64) -> Self {
        Self { seed, point: 0 }
    }

    pub fn at_point(self, point: u64) -> Self {
        Self { point, ..self }
    }

    pub fn key(&self, estimator_id: u32, stratum: u64, index: u64) -> StreamKey {
        StreamKey {
            seed: mix_seed(self.seed, self.point),
            estimator_id,
            stratum,
            index,
        }
    }

    pub fn shared_key(&self, estimator_id: u32, stratum: u64, index: u64) -> StreamKey {
        StreamKey {
            seed: self.seed,
            estimator_id,
            stratum,
            index,
        }
    }
}

/// Evaluate `f` for sample indices `0..n` in parallel, returning results in
/// index order.
pub fn par_samples<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    (0..n as u64).into_par_iter().map(f).collect()
}

/// `ln(exp(a) + exp(b))`.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `ln(sum exp(x_i))` over a slice, reduced with a fixed pairwise tree.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    match values.len() {
        0 => f64::NEG_INFINITY,
        1 => values[0],
        n => {
            let (l, r) = values.split_at(n / 2);
            log_add_exp(log_sum_exp(l), log_sum_exp(r))
        }
    }
}

/// Running `ln sum x` and `ln sum x^2` for positive samples given by their
/// logarithms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogAccumulator {
    log_sum: f64,
    log_sum_sq: f64,
    count: usize,
}

impl Default for LogAccumulator {
    fn default() -> Self {
        Self::new()
    }
}

impl LogAccumulator {
    pub fn new() -> Self {
        Self {
            log_sum: f64::NEG_INFINITY,
            log_sum_sq: f64::NEG_INFINITY,
            count: 0,
        }
    }

    pub fn accumulate(&mut self, log_x: f64) -> Result<()> {
        if !log_x.is_finite() {
            return Err(Error::NonFinite(log_x));
        }
        self.log_sum = log_add_exp(self.log_sum, log_x);
        self.log_sum_sq = log_add_exp(self.log_sum_sq, 2.0 * log_x);
        self.count += 1;
        Ok(())
    }

    pub fn merge(&self, other: &Self) -> Self {
        Self {
            log_sum: log_add_exp(self.log_sum, other.log_sum),
            log_sum_sq: log_add_exp(self.log_sum_sq, other.log_sum_sq),
            count: self.count + other.count,
        }
    }

    /// Pairwise-tree reduction over log-samples in the given order.
    pub fn from_log_samples(log_xs: &[f64]) -> Result<Self> {
        match log_xs.len() {
            0 => Ok(Self::new()),
            1 => {
                let mut acc = Self::new();
                acc.accumulate(log_xs[0])?;
                Ok(acc)
            }
            n => {
                let (l, r) = log_xs.split_at(n / 2);
                Ok(Self::from_log_samples(l)?.merge(&Self::from_log_samples(r)?))
            }
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn log_sum(&self) -> f64 {
        self.log_sum
    }

    pub fn log_mean(&self) -> Result<f64> {
        if self.count == 0 {
            return Err(Error::InsufficientSamples { needed: 1, got: 0 });
        }
        Ok(self.log_sum - (self.count as f64).ln())
    }

    pub fn mean(&self) -> Result<f64> {
        self.log_mean().map(f64::exp)
    }

    /// Log of the unbiased sample variance; `-inf` when all samples agree.
    pub fn log_variance(&self) -> Result<f64> {
        if self.count < 2 {
            return Err(Error::InsufficientSamples {
                needed: 2,
                got: self.count,
            });
        }
        let n = self.count as f64;
        let a = self.log_sum_sq;
        let b = 2.0 * self.log_sum - n.ln();
        let diff = if b >= a {
            f64::NEG_INFINITY
        } else {
            a + (-(b - a).exp()).ln_1p()
        };
        Ok(diff - (n - 1.0).ln())
    }

    pub fn variance(&self) -> Result<f64> {
        self.log_variance().map(f64::exp)
    }

    /// Sample variance divided by the squared mean.
    pub fn relative_variance(&self) -> Result<f64> {
        Ok((self.log_variance()? - 2.0 * self.log_mean()?).exp())
    }

    /// Standard error of `ln(mean)` by the delta method.
    pub fn log_mean_std_error(&self) -> Result<f64> {
        Ok((self.relative_variance()? / self.count as f64).sqrt())
    }
}

/// Mean, unbiased variance and count of real samples (two-pass).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleStats {
    pub mean: f64,
    pub variance: f64,
    pub count: usize,
}

impl SampleStats {
    pub fn from_slice(xs: &[f64]) -> Result<Self> {
        if xs.len() < 2 {
            return Err(Error::InsufficientSamples {
                needed: 2,
                got: xs.len(),
            });
        }
        let n = xs.len() as f64;
        let mean = pairwise_sum(xs) / n;
        let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
        Ok(Self {
            mean,
            variance: pairwise_sum(&dev) / (n - 1.0),
            count: xs.len(),
        })
    }

    pub fn std_error(&self) -> f64 {
        (self.variance / self.count as f64).sqrt()
    }
}

fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let (l, r) = xs.split_at(xs.len() / 2);
    pairwise_sum(l) + pairwise_sum(r)
}

/// Two-sided Student-t quantile `t_{(1+level)/2, df}`.
pub fn t_quantile(level: f64, df: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(invalid("level", format!("{level} is outside (0, 1)")));
    }
    let t = StudentsT::new(0.0, 1.0, df).map_err(|e| invalid("df", e.to_string()))?;
    Ok(t.inverse_cdf(0.5 + level / 2.0))
}

/// Student-t half-width of the confidence interval for a mean.
pub fn gaussian_ci(mean: f64, variance: f64, count: usize, level: f64) -> Result<f64> {
    if count < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: count });
    }
    if !mean.is_finite() || !(variance >= 0.0) {
        return Err(invalid("variance", "must be finite and non-negative"));
    }
    if variance == 0.0 {
        return Ok(0.0);
    }
    Ok(t_quantile(level, (count - 1) as f64)? * (variance / count as f64).sqrt())
}

/// Interval for a log-normal quantity, built on its log-samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogNormalInterval {
    /// Mean of the log-samples, i.e. the log of the geometric mean.
    pub log_geometric_mean: f64,
    /// Multiplicative factor below the geometric mean, in (0, 1].
    pub lower_factor: f64,
    /// Multiplicative factor above the geometric mean, >= 1.
    pub upper_factor: f64,
    /// `ln` of the bias-corrected arithmetic-mean estimate `exp(m + s^2/2)`.
    pub log_arithmetic_mean: f64,
}

impl LogNormalInterval {
    pub fn geometric_mean(&self) -> f64 {
        self.log_geometric_mean.exp()
    }

    pub fn arithmetic_mean(&self) -> f64 {
        self.log_arithmetic_mean.exp()
    }

    /// Half-width of the interval relative to the geometric mean.
    pub fn relative_halfwidth(&self) -> f64 {
        0.5 * (self.upper_factor - self.lower_factor)
    }
}

pub fn lognormal_ci(log_stats: &SampleStats, level: f64) -> Result<LogNormalInterval> {
    let half = gaussian_ci(log_stats.mean, log_stats.variance, log_stats.count, level)?;
    Ok(LogNormalInterval {
        log_geometric_mean: log_stats.mean,
        lower_factor: (-half).exp(),
        upper_factor: half.exp(),
        log_arithmetic_mean: log_stats.mean + 0.5 * log_stats.variance,
    })
}

/// Probability-plot correlation coefficient against normal scores (Blom
/// plotting positions). Close to 1 for Gaussian samples; NaN when the
/// samples are constant.
pub fn normal_ppcc(samples: &[f64]) -> Result<f64> {
    let n = samples.len();
    if n < 3 {
        return Err(Error::InsufficientSamples { needed: 3, got: n });
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let std_normal = Normal::standard();
    let scores: Vec<f64> = (0..n)
        .map(|i| std_normal.inverse_cdf((i as f64 + 1.0 - 0.375) / (n as f64 + 0.25)))
        .collect();
    let mx = sorted.iter().sum::<f64>() / n as f64;
    let ms = scores.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, s) in sorted.iter().zip(&scores) {
        sxy += (x - mx) * (s - ms);
        sxx += (x - mx) * (x - mx);
        syy += (s - ms) * (s - ms);
    }
    Ok(sxy / (sxx * syy).sqrt())
}
