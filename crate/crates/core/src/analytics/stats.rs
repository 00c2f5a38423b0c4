//! Percentile bootstrap and Welch's two-sample t test.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatError {
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("statistic undefined: {0}")]
    Undefined(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub resamples: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            resamples: 1000,
            level: 0.95,
            seed: 0,
        }
    }
}

/// Mean of one bootstrap resample. Resample `b` draws `n` indices uniformly
/// from the stream seeded with `derive(seed, b)`.
pub fn resample_mean(values: &[f64], seed: u64, b: usize) -> f64 {
    let mut rng = seed::rng(seed::derive(seed, b as u64));
    let n = values.len();
    let sum: f64 = (0..n).map(|_| values[rng.gen_range(0..n)]).sum();
    sum / n as f64
}

/// Linear-interpolation quantile of sorted data (type 7).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Percentile interval of `resamples` resample means.
pub fn bootstrap_ci(values: &[f64], resamples: usize, level: f64, seed: u64) -> Result<(f64, f64), StatError> {
    if values.is_empty() {
        return Err(StatError::Invalid("no values".into()));
    }
    if resamples == 0 {
        return Err(StatError::Invalid("resamples must be at least 1".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(StatError::Invalid(format!("level {level} outside (0, 1)")));
    }
    let mut means: Vec<f64> = (0..resamples)
        .into_par_iter()
        .map(|b| resample_mean(values, seed, b))
        .collect();
    means.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    let low = quantile_sorted(&means, alpha);
    let high = quantile_sorted(&means, 1.0 - alpha);
    Ok((low, high.max(low)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchTest {
    pub mean_a: f64,
    pub mean_b: f64,
    pub t: f64,
    /// Welch-Satterthwaite degrees of freedom; infinite when both variances vanish.
    pub df: f64,
    /// Two-sided, normal approximation.
    pub p_value: f64,
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v)
}

/// Welch's t for `mean(a) - mean(b)`.
///
/// With both sample variances zero the statistic is infinite when the means
/// differ and undefined when they agree.
pub fn welch_t(a: &[f64], b: &[f64]) -> Result<WelchTest, StatError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(StatError::Undefined("each group needs at least two values"));
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (sa, sb) = (va / a.len() as f64, vb / b.len() as f64);
    let se2 = sa + sb;
    if se2 == 0.0 {
        if ma == mb {
            return Err(StatError::Undefined("both groups are constant and equal"));
        }
        return Ok(WelchTest {
            mean_a: ma,
            mean_b: mb,
            t: if ma > mb { f64::INFINITY } else { f64::NEG_INFINITY },
            df: f64::INFINITY,
            p_value: 0.0,
        });
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (a.len() as f64 - 1.0) + sb * sb / (b.len() as f64 - 1.0));
    Ok(WelchTest {
        mean_a: ma,
        mean_b: mb,
        t,
        df,
        p_value: libm::erfc(t.abs() / std::f64::consts::SQRT_2),
    })
}

/// Welch test on binary attack indicators.
pub fn diff_of_means_test(a: &[bool], b: &[bool]) -> Result<WelchTest, StatError> {
    let f = |x: &[bool]| x.iter().map(|v| f64::from(u8::from(*v))).collect::<Vec<_>>();
    welch_t(&f(a), &f(b))
}
