//! Point estimates with batch-means standard errors.

use crate::error::{Error, Result};

/// A Monte Carlo point estimate with its uncertainty and provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub replicas: usize,
    pub quantity_tag: String,
    pub t: f64,
    pub x: Option<usize>,
    pub y: Option<usize>,
}

impl Estimate {
    pub fn exact(value: f64, tag: &str, t: f64) -> Estimate {
        Estimate {
            value,
            stderr: 0.0,
            replicas: 0,
            quantity_tag: tag.to_string(),
            t,
            x: None,
            y: None,
        }
    }

    pub fn at(mut self, x: usize, y: usize) -> Estimate {
        self.x = Some(x);
        self.y = Some(y);
        self
    }
}

/// Compensated summation (Neumaier's variant, robust to large cancelling
/// terms).
pub fn kahan_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// Number of batches used for batch-means errors: floor(sqrt(n)).
pub fn batch_count(n: usize) -> usize {
    ((n as f64).sqrt().floor() as usize).max(2)
}

fn batch_bounds(n: usize, b: usize, k: usize) -> (usize, usize) {
    (k * n / b, (k + 1) * n / b)
}

fn require_replicas(n: usize) -> Result<()> {
    if n < 100 {
        return Err(Error::InsufficientReplicas(n));
    }
    Ok(())
}

/// Mean with batch-means standard error.
pub fn mean_estimate(values: &[f64], tag: &str, t: f64) -> Result<Estimate> {
    require_replicas(values.len())?;
    let n = values.len();
    let b = batch_count(n);
    let batch_means: Vec<f64> = (0..b)
        .map(|k| {
            let (lo, hi) = batch_bounds(n, b, k);
            values[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect();
    let value = values.iter().sum::<f64>() / n as f64;
    Ok(Estimate {
        value,
        stderr: spread(&batch_means),
        replicas: n,
        quantity_tag: tag.to_string(),
        t,
        x: None,
        y: None,
    })
}

/// Empirical covariance of paired samples (empirical means subtracted), with
/// the standard error taken across per-batch covariances.
pub fn covariance_estimate(pairs: &[(f64, f64)], tag: &str, t: f64) -> Result<Estimate> {
    require_replicas(pairs.len())?;
    let n = pairs.len();
    let b = batch_count(n);
    let batch_covs: Vec<f64> = (0..b)
        .map(|k| {
            let (lo, hi) = batch_bounds(n, b, k);
            raw_covariance(&pairs[lo..hi])
        })
        .collect();
    Ok(Estimate {
        value: raw_covariance(pairs),
        stderr: spread(&batch_covs),
        replicas: n,
        quantity_tag: tag.to_string(),
        t,
        x: None,
        y: None,
    })
}

/// Frequency of a binary event with the binomial standard error.
pub fn binomial_estimate(successes: usize, n: usize, tag: &str, t: f64) -> Result<Estimate> {
    require_replicas(n)?;
    let p = successes as f64 / n as f64;
    Ok(Estimate {
        value: p,
        stderr: (p * (1.0 - p) / n as f64).sqrt(),
        replicas: n,
        quantity_tag: tag.to_string(),
        t,
        x: None,
        y: None,
    })
}

fn raw_covariance(pairs: &[(f64, f64)]) -> f64 {
    let n = pairs.len() as f64;
    let mu = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let mv = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    pairs
        .iter()
        .map(|&(u, v)| (u - mu) * (v - mv))
        .sum::<f64>()
        / (n - 1.0)
}

/// Standard error of the mean of `batch_values`.
fn spread(batch_values: &[f64]) -> f64 {
    let b = batch_values.len() as f64;
    let m = batch_values.iter().sum::<f64>() / b;
    let var = batch_values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (b - 1.0);
    (var / b).sqrt()
}
