//! Estimators shared by the experiments.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

/// Point estimate with standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub estimate: f64,
    pub standard_error: f64,
    /// Number of batches (or samples) behind the standard error.
    pub batches: usize,
}

impl Estimate {
    /// `|estimate - target| ≤ z · SE`.
    pub fn within(&self, target: f64, z: f64) -> bool {
        (self.estimate - target).abs() <= z * self.standard_error
    }
}

/// Neumaier-compensated sum; insensitive to summation order up to rounding
/// of the final result.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut carry = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            carry += (sum - t) + v;
        } else {
            carry += (v - t) + sum;
        }
        sum = t;
    }
    sum + carry
}

pub fn mean(values: &[f64]) -> f64 {
    compensated_sum(values.iter().copied()) / values.len() as f64
}

/// Mean and standard error of i.i.d. samples.
pub fn sample_mean(values: &[f64]) -> Estimate {
    let n = values.len();
    let m = mean(values);
    let var = if n > 1 {
        compensated_sum(values.iter().map(|v| (v - m) * (v - m))) / (n - 1) as f64
    } else {
        0.0
    };
    Estimate {
        estimate: m,
        standard_error: (var / n as f64).sqrt(),
        batches: n,
    }
}

/// Mean of a correlated series with a standard error from `batches`
/// contiguous batch means. A trailing remainder shorter than a batch is
/// dropped from the error but kept in the mean.
pub fn batch_means(values: &[f64], batches: usize) -> Result<Estimate> {
    if batches < 2 || values.len() < batches {
        return Err(Error::Degenerate(format!(
            "{} values cannot fill {batches} batches",
            values.len()
        )));
    }
    let size = values.len() / batches;
    let means: Vec<f64> = values.chunks_exact(size).take(batches).map(mean).collect();
    let spread = sample_mean(&means);
    Ok(Estimate {
        estimate: mean(values),
        standard_error: spread.standard_error,
        batches,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub degrees_of_freedom: usize,
    pub p_value: f64,
}

/// Pearson goodness-of-fit of `observed` counts to `expected` probabilities.
/// Cells with zero expected probability must be empty and are skipped.
pub fn chi_square_test(observed: &[u64], expected: &[f64]) -> Result<ChiSquareTest> {
    if observed.len() != expected.len() {
        return Err(Error::Degenerate("observed and expected differ in length".into()));
    }
    let total: u64 = observed.iter().sum();
    let mut statistic = 0.0;
    let mut cells = 0usize;
    for (&o, &p) in observed.iter().zip(expected) {
        if p <= 0.0 {
            if o > 0 {
                return Err(Error::Degenerate("count in a cell of zero probability".into()));
            }
            continue;
        }
        let e = p * total as f64;
        statistic += (o as f64 - e).powi(2) / e;
        cells += 1;
    }
    if cells < 2 {
        return Err(Error::Degenerate("need at least two cells".into()));
    }
    let dof = cells - 1;
    let dist = ChiSquared::new(dof as f64).map_err(|e| Error::Degenerate(e.to_string()))?;
    Ok(ChiSquareTest {
        statistic,
        degrees_of_freedom: dof,
        p_value: 1.0 - dist.cdf(statistic),
    })
}

/// Median of a nonempty slice.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
