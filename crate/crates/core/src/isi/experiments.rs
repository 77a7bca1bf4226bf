//! Monte Carlo experiments on random graphs and small models.

use rayon::prelude::*;
use serde::Serialize;

use super::{adjacent_isi_covariance, isi_covariance_bound, Estimate};
use crate::error::{Error, Result};
use crate::forward::ForwardModel;
use crate::graph::{default_k, event_a, return_time_tau, sample_indexed, Proportion, SynapticGraph};
use crate::model::{AgingFunction, ModelSpec, NeighborhoodRule, RateFunction};
use crate::rng::RandomCoordinateSource;
use crate::stats::{median, sample_mean};

/// Neurons whose activity can reach `i`, including `i`, in increasing order.
pub fn ancestors(graph: &SynapticGraph, i: usize) -> Vec<usize> {
    let n = graph.neuron_count();
    let mut incoming = vec![Vec::new(); n];
    for (a, b) in graph.edges() {
        incoming[b].push(a);
    }
    let mut seen = vec![false; n];
    let mut stack = vec![i];
    seen[i] = true;
    while let Some(u) = stack.pop() {
        for &v in &incoming[u] {
            if !seen[v] {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    (0..n).filter(|&v| seen[v]).collect()
}

/// Model on the ancestors of `i` with unit weights; neuron `i` keeps the
/// returned index. The law of `i`'s spike train is the same as in the model
/// on the whole graph.
fn ancestral_model(
    graph: &SynapticGraph,
    i: usize,
    phi: &RateFunction,
    aging: &AgingFunction,
    delta: f64,
) -> Result<(ModelSpec, usize)> {
    let keep = ancestors(graph, i);
    let mut index = vec![usize::MAX; graph.neuron_count()];
    for (new, &old) in keep.iter().enumerate() {
        index[old] = new;
    }
    let edges: Vec<(usize, usize, f64)> = graph
        .edges()
        .filter(|&(a, b)| index[a] != usize::MAX && index[b] != usize::MAX)
        .map(|(a, b)| (index[a], index[b], 1.0))
        .collect();
    let spec = ModelSpec::new(
        keep.len(),
        edges,
        vec![phi.clone(); keep.len()],
        vec![aging.clone(); keep.len()],
        delta,
        phi.lipschitz(),
        NeighborhoodRule::ByWeight,
    )?;
    Ok((spec, index[i]))
}

/// Spike train of neuron `i` over `steps` steps after `burnin`.
fn spike_train(spec: &ModelSpec, i: usize, steps: u64, burnin: u64, src: &RandomCoordinateSource) -> Result<Vec<i64>> {
    let model = ForwardModel::new(spec)?;
    let mut state = model.initial_state();
    let field = model.run(&mut state, &[i], steps, burnin, src);
    Ok(field.spike_times(i).to_vec())
}

/// Settings of the interval-covariance experiment on random graphs.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CovarianceExperiment {
    pub neurons: usize,
    pub theta: f64,
    pub phi: RateFunction,
    pub aging: AgingFunction,
    pub graphs: u64,
    pub steps: u64,
    pub burnin: u64,
    pub min_spikes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GraphCovariance {
    pub graph: u64,
    pub edges: usize,
    pub return_time: Option<u64>,
    pub in_event_a: bool,
    pub ancestors: usize,
    pub covariance: Option<Estimate>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CovarianceReport {
    pub neurons: usize,
    pub theta: f64,
    pub delta: f64,
    /// `k(N) = ⌊√N⌋`; event A is `τ > 2 k(N)`.
    pub k: u64,
    pub a_complement: Proportion,
    /// `e^{2θ} N^{-1/2}`.
    pub a_complement_bound: f64,
    pub bound: f64,
    /// Median over graphs in A of `|Cov|`, and of its standard error.
    pub median_abs_covariance: f64,
    pub median_standard_error: f64,
    /// Every estimate on A is at most `bound + 3 SE`.
    pub within_bound: bool,
    pub rows: Vec<GraphCovariance>,
}

/// Sample graphs, keep those where information from neuron 0 needs more
/// than `2⌊√N⌋` steps to return, and estimate the adjacent-interval
/// covariance of neuron 0 on each.
pub fn covariance_experiment(cfg: &CovarianceExperiment, src: &RandomCoordinateSource) -> Result<CovarianceReport> {
    let delta = cfg.phi.floor();
    if !(delta > 0.0) {
        return Err(Error::RegimeMismatch("the covariance experiment needs a spontaneous floor".into()));
    }
    let k = default_k(cfg.neurons);
    let rows = (0..cfg.graphs)
        .into_par_iter()
        .map(|g| {
            let graph = sample_indexed(cfg.neurons, cfg.theta, src, g)?;
            let in_a = event_a(&graph, 0, k);
            let (spec, target) = ancestral_model(&graph, 0, &cfg.phi, &cfg.aging, delta)?;
            let covariance = if in_a {
                let times = spike_train(&spec, target, cfg.steps, cfg.burnin, &src.child(g))?;
                Some(adjacent_isi_covariance(&times, cfg.min_spikes)?)
            } else {
                None
            };
            Ok(GraphCovariance {
                graph: g,
                edges: graph.edge_count(),
                return_time: return_time_tau(&graph, 0, cfg.neurons as u64),
                in_event_a: in_a,
                ancestors: spec.neuron_count(),
                covariance,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let misses = rows.iter().filter(|r| !r.in_event_a).count() as u64;
    let estimates: Vec<Estimate> = rows.iter().filter_map(|r| r.covariance).collect();
    let bound = isi_covariance_bound(cfg.neurons, delta);
    let abs: Vec<f64> = estimates.iter().map(|e| e.estimate.abs()).collect();
    let ses: Vec<f64> = estimates.iter().map(|e| e.standard_error).collect();
    Ok(CovarianceReport {
        neurons: cfg.neurons,
        theta: cfg.theta,
        delta,
        k,
        a_complement: Proportion::from_counts(misses, cfg.graphs),
        a_complement_bound: (2.0 * cfg.theta).exp() / (cfg.neurons as f64).sqrt(),
        bound,
        median_abs_covariance: if abs.is_empty() { f64::NAN } else { median(&abs) },
        median_standard_error: if ses.is_empty() { f64::NAN } else { median(&ses) },
        within_bound: estimates.iter().all(|e| e.estimate.abs() <= bound + 3.0 * e.standard_error),
        rows,
    })
}

/// Smallest frequency of a conditioning pattern before estimates are refused.
pub const MIN_PATTERN_FREQUENCY: f64 = 1e-4;
/// Longest older history compared by [`locality_check`].
pub const MAX_SUFFIX: u32 = 6;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PatternEstimate {
    /// Older history `a_{-l} … a_{-1}`, oldest first.
    pub suffix: String,
    pub occurrences: u64,
    pub spike_probability: Estimate,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LocalityReport {
    pub neuron: usize,
    pub k: u64,
    pub l: u32,
    pub return_time: Option<u64>,
    /// The claim only covers graphs with `τ > k + l`.
    pub applicable: bool,
    pub patterns: Vec<PatternEstimate>,
    /// Largest `|p_a - p_b| / sqrt(SE_a² + SE_b²)` over pairs of suffixes.
    pub max_pairwise_z: f64,
    pub agree: bool,
}

/// Estimate `P(spike | last spike k steps ago, older history a)` for every
/// `l`-step history `a` and check that the estimates agree.
pub fn locality_check(
    graph: &SynapticGraph,
    i: usize,
    k: u64,
    l: u32,
    phi: &RateFunction,
    aging: &AgingFunction,
    steps: u64,
    src: &RandomCoordinateSource,
) -> Result<LocalityReport> {
    if k == 0 || l > MAX_SUFFIX {
        return Err(Error::malformed(format!("need k >= 1 and l <= {MAX_SUFFIX}")));
    }
    let return_time = return_time_tau(graph, i, k + l as u64);
    let applicable = return_time.is_none();
    if !applicable {
        return Ok(LocalityReport {
            neuron: i,
            k,
            l,
            return_time,
            applicable,
            patterns: Vec::new(),
            max_pairwise_z: f64::NAN,
            agree: true,
        });
    }
    let (spec, target) = ancestral_model(graph, i, phi, aging, phi.floor())?;
    let burnin = 1000;
    let times = spike_train(&spec, target, steps, burnin, src)?;
    let start = burnin as i64 + 1;
    let mut train = vec![false; steps as usize];
    for t in times {
        train[(t - start) as usize] = true;
    }
    let span = (k + l as u64) as usize;
    let patterns = 1usize << l;
    let mut hits = vec![0u64; patterns];
    let mut spikes = vec![0u64; patterns];
    for t in span..train.len() {
        let last = t - k as usize;
        if !train[last] || train[last + 1..t].iter().any(|&x| x) {
            continue;
        }
        let suffix = (0..l as usize).fold(0usize, |acc, m| (acc << 1) | train[last - l as usize + m] as usize);
        hits[suffix] += 1;
        spikes[suffix] += train[t] as u64;
    }
    let windows = (train.len() - span.min(train.len())) as f64;
    let mut out = Vec::with_capacity(patterns);
    for a in 0..patterns {
        let frequency = hits[a] as f64 / windows.max(1.0);
        if frequency < MIN_PATTERN_FREQUENCY || hits[a] < 2 {
            return Err(Error::ConditioningTooRare { frequency });
        }
        let p = spikes[a] as f64 / hits[a] as f64;
        out.push(PatternEstimate {
            suffix: (0..l).rev().map(|b| if a >> b & 1 == 1 { '1' } else { '0' }).collect(),
            occurrences: hits[a],
            spike_probability: Estimate {
                estimate: p,
                standard_error: (p * (1.0 - p) / hits[a] as f64).sqrt(),
                batches: hits[a] as usize,
            },
        });
    }
    let mut max_z = 0.0f64;
    for (x, a) in out.iter().enumerate() {
        for b in &out[x + 1..] {
            let (pa, pb) = (a.spike_probability, b.spike_probability);
            let se = pa.standard_error.hypot(pb.standard_error);
            let gap = (pa.estimate - pb.estimate).abs();
            let z = if se > 0.0 {
                gap / se
            } else if gap > 0.0 {
                f64::INFINITY
            } else {
                0.0
            };
            max_z = max_z.max(z);
        }
    }
    Ok(LocalityReport {
        neuron: i,
        k,
        l,
        return_time,
        applicable,
        patterns: out,
        max_pairwise_z: max_z,
        agree: max_z <= 3.0,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayPoint {
    pub s: u64,
    /// `|P_A(X_s(i) = 1) - P_B(X_s(i) = 1)|` for the two pasts.
    pub difference: Estimate,
    /// `ĉ/(s - 1)` with `ĉ` fitted at the first grid point `s ≥ 2`;
    /// infinite at `s = 1`.
    pub harmonic_envelope: f64,
    pub dominated: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LossOfMemoryReport {
    pub neuron: usize,
    pub quiet_past: u64,
    pub reps: u64,
    pub c_hat: f64,
    pub points: Vec<DecayPoint>,
    /// Every point lies under the harmonic envelope up to `3 SE`.
    pub dominated: bool,
    /// Weighted least-squares slope of `ln difference` against `s` over the
    /// points that differ from 0 by more than `3 SE`.
    pub log_slope: Option<Estimate>,
}

/// Compare the law of `X_s(i)` started from the all-spiked past and from a
/// past silent for `quiet_past` steps, with both chains driven by the same
/// uniforms.
pub fn loss_of_memory_profile(
    spec: &ModelSpec,
    i: usize,
    s_grid: &[u64],
    quiet_past: u64,
    reps: u64,
    src: &RandomCoordinateSource,
) -> Result<LossOfMemoryReport> {
    let s_max = s_grid.iter().copied().max().unwrap_or(0);
    let anchor = s_grid.iter().copied().find(|&s| s >= 2);
    if s_grid.contains(&0) || reps < 2 {
        return Err(Error::malformed("need a grid of s >= 1 and at least 2 repetitions"));
    }
    let anchor = anchor.ok_or_else(|| Error::malformed("the grid needs a point s >= 2"))?;
    let model = ForwardModel::new(spec)?;
    let busy = model.initial_state();
    let quiet = model.quiet_state(quiet_past);
    // Per repetition, the difference of the two indicators at every s.
    let diffs: Vec<Vec<f64>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let src = src.child(r);
            let (mut a, mut b) = (busy.clone(), quiet.clone());
            let mut row = Vec::with_capacity(s_max as usize);
            for _ in 0..s_max {
                model.step(&mut a, &src);
                model.step(&mut b, &src);
                row.push(a.config()[i] as i8 as f64 - b.config()[i] as i8 as f64);
            }
            row
        })
        .collect();
    let column = |s: u64| -> Estimate {
        let values: Vec<f64> = diffs.iter().map(|row| row[s as usize - 1]).collect();
        let e = sample_mean(&values);
        Estimate {
            estimate: e.estimate.abs(),
            ..e
        }
    };
    let first = column(anchor);
    let c_hat = first.estimate * (anchor - 1) as f64;
    let mut points = Vec::with_capacity(s_grid.len());
    for &s in s_grid {
        let d = column(s);
        let (envelope, dominated) = if s < 2 {
            (f64::INFINITY, true)
        } else {
            let envelope = c_hat / (s - 1) as f64;
            let anchor_se = first.standard_error * (anchor - 1) as f64 / (s - 1) as f64;
            (envelope, d.estimate <= envelope + 3.0 * d.standard_error.hypot(anchor_se))
        };
        points.push(DecayPoint {
            s,
            difference: d,
            harmonic_envelope: envelope,
            dominated,
        });
    }
    let log_slope = fit_log_slope(&points);
    Ok(LossOfMemoryReport {
        neuron: i,
        quiet_past,
        reps,
        c_hat,
        dominated: points.iter().all(|p| p.dominated),
        points,
        log_slope,
    })
}

fn fit_log_slope(points: &[DecayPoint]) -> Option<Estimate> {
    // ln d has standard error ≈ SE/d; weight each point by (d/SE)².
    let usable: Vec<(f64, f64, f64)> = points
        .iter()
        .filter(|p| p.difference.estimate > 3.0 * p.difference.standard_error)
        .map(|p| {
            let d = p.difference;
            (p.s as f64, d.estimate.ln(), (d.estimate / d.standard_error).powi(2))
        })
        .collect();
    if usable.len() < 2 {
        return None;
    }
    let sw: f64 = usable.iter().map(|u| u.2).sum();
    let sx: f64 = usable.iter().map(|u| u.2 * u.0).sum::<f64>() / sw;
    let sy: f64 = usable.iter().map(|u| u.2 * u.1).sum::<f64>() / sw;
    let sxx: f64 = usable.iter().map(|u| u.2 * (u.0 - sx).powi(2)).sum();
    let sxy: f64 = usable.iter().map(|u| u.2 * (u.0 - sx) * (u.1 - sy)).sum();
    Some(Estimate {
        estimate: sxy / sxx,
        standard_error: (1.0 / sxx).sqrt(),
        batches: usable.len(),
    })
}
