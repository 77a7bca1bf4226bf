//! Inter-spike interval statistics of single spike trains.

pub mod experiments;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::SpikeField;
use crate::stats::{batch_means, Estimate};

pub use experiments::{
    covariance_experiment, locality_check, loss_of_memory_profile, CovarianceExperiment, CovarianceReport,
    LocalityReport, LossOfMemoryReport,
};

/// Spikes required before an interval covariance is estimated.
pub const DEFAULT_MIN_SPIKES: usize = 1000;
/// Batches behind every batch-means standard error.
pub const DEFAULT_BATCHES: usize = 30;

/// Sorted spike times of neuron `i` in `field`.
pub fn extract_spikes(field: &SpikeField, i: usize) -> Vec<i64> {
    field.spike_times(i).to_vec()
}

/// Differences of successive spike times.
pub fn intervals(times: &[i64]) -> Vec<f64> {
    times.windows(2).map(|w| (w[1] - w[0]) as f64).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpikeTrainStats {
    pub spikes: usize,
    pub mean_isi: Estimate,
    pub adjacent_covariance: Estimate,
}

/// Overlapping-pairs estimate of `Cov(ISI_{k+1}, ISI_k)`: the mean of
/// `(d_k - d̄)(d_{k+1} - d̄)` over all adjacent pairs, with a batch-means
/// standard error.
pub fn adjacent_isi_covariance(times: &[i64], min_spikes: usize) -> Result<Estimate> {
    let d = checked_intervals(times, min_spikes)?;
    let center = crate::stats::mean(&d);
    let products: Vec<f64> = d.windows(2).map(|w| (w[0] - center) * (w[1] - center)).collect();
    batch_means(&products, DEFAULT_BATCHES)
}

pub fn spike_train_stats(times: &[i64], min_spikes: usize) -> Result<SpikeTrainStats> {
    let d = checked_intervals(times, min_spikes)?;
    Ok(SpikeTrainStats {
        spikes: times.len(),
        mean_isi: batch_means(&d, DEFAULT_BATCHES)?,
        adjacent_covariance: adjacent_isi_covariance(times, min_spikes)?,
    })
}

fn checked_intervals(times: &[i64], min_spikes: usize) -> Result<Vec<f64>> {
    let needed = min_spikes.max(DEFAULT_BATCHES + 2);
    if times.len() < needed {
        return Err(Error::TooFewSpikes {
            needed,
            found: times.len(),
        });
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Degenerate("spike times must be strictly increasing".into()));
    }
    Ok(intervals(times))
}

/// `3/δ² · N (1 - δ)^{√N}`: bound on the adjacent-interval covariance of a
/// neuron whose information needs more than `2√N` steps to come back.
pub fn isi_covariance_bound(n: usize, delta: f64) -> f64 {
    let n = n as f64;
    3.0 / (delta * delta) * n * (1.0 - delta).powf(n.sqrt())
}
