//! Critical directed Erdős–Rényi synaptic graphs and the time information
//! emitted by a neuron needs to come back to it.

use std::collections::VecDeque;
use std::io::{BufRead, Write};

use rand::Rng;
use rand_distr::{Distribution, Geometric};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AgingFunction, ModelSpec, NeighborhoodRule, RateFunction};
use crate::rng::{RandomCoordinateSource, Stream};

/// Directed graph without self-loops; `out[i]` lists `j` with `i → j`, sorted.
#[derive(Clone, Debug, PartialEq)]
pub struct SynapticGraph {
    neurons: usize,
    theta: f64,
    out: Vec<Vec<usize>>,
}

/// Metadata written next to an edge list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphMeta {
    pub neurons: usize,
    pub theta: f64,
    pub edge_probability: f64,
    pub edges: usize,
    pub seed: Option<u64>,
}

/// `p_N = (1 + θ/N) / N`.
pub fn edge_probability(n: usize, theta: f64) -> f64 {
    let n = n as f64;
    (1.0 + theta / n) / n
}

impl SynapticGraph {
    pub fn from_edges(neurons: usize, theta: f64, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut out = vec![Vec::new(); neurons];
        for (src, dst) in edges {
            if src >= neurons || dst >= neurons {
                return Err(Error::malformed(format!("edge {src}->{dst} outside 0..{neurons}")));
            }
            if src == dst {
                return Err(Error::malformed(format!("self-loop at {src}")));
            }
            out[src].push(dst);
        }
        for row in &mut out {
            row.sort_unstable();
            row.dedup();
        }
        Ok(Self { neurons, theta, out })
    }

    pub fn empty(neurons: usize) -> Self {
        Self {
            neurons,
            theta: 0.0,
            out: vec![Vec::new(); neurons],
        }
    }

    pub fn neuron_count(&self) -> usize {
        self.neurons
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn edge_probability(&self) -> f64 {
        edge_probability(self.neurons, self.theta)
    }

    pub fn out_neighbors(&self, i: usize) -> &[usize] {
        &self.out[i]
    }

    pub fn has_edge(&self, src: usize, dst: usize) -> bool {
        self.out[src].binary_search(&dst).is_ok()
    }

    pub fn edge_count(&self) -> usize {
        self.out.iter().map(Vec::len).sum()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.out
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().map(move |&j| (i, j)))
    }

    pub fn meta(&self, seed: Option<u64>) -> GraphMeta {
        GraphMeta {
            neurons: self.neurons,
            theta: self.theta,
            edge_probability: self.edge_probability(),
            edges: self.edge_count(),
            seed,
        }
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "src,dst")?;
        for (i, j) in self.edges() {
            writeln!(out, "{i},{j}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R, neurons: usize, theta: f64) -> Result<Self> {
        let mut edges = Vec::new();
        for (n, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if n == 0 {
                if line != "src,dst" {
                    return Err(Error::malformed(format!("expected header src,dst, found {line:?}")));
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let parse = |s: Option<&str>| {
                s.and_then(|v| v.trim().parse::<usize>().ok())
                    .ok_or_else(|| Error::malformed(format!("bad edge line {}: {line:?}", n + 1)))
            };
            let mut parts = line.split(',');
            edges.push((parse(parts.next())?, parse(parts.next())?));
        }
        Self::from_edges(neurons, theta, edges)
    }

    /// Model on this graph with unit weights on every edge.
    pub fn to_spec(&self, phi: RateFunction, aging: AgingFunction, delta: f64, gamma: f64) -> Result<ModelSpec> {
        ModelSpec::new(
            self.neurons,
            self.edges().map(|(i, j)| (i, j, 1.0)).collect::<Vec<_>>(),
            vec![phi; self.neurons],
            vec![aging; self.neurons],
            delta,
            gamma,
            NeighborhoodRule::ByWeight,
        )
    }
}

/// Sample every ordered pair `i ≠ j` independently with probability `p_N`.
pub fn sample_er_digraph<R: Rng + ?Sized>(n: usize, theta: f64, rng: &mut R) -> Result<SynapticGraph> {
    if n < 2 {
        return Err(Error::malformed("a random graph needs at least 2 neurons"));
    }
    if !(theta >= 0.0) {
        return Err(Error::malformed(format!("theta must be >= 0, got {theta}")));
    }
    let p = edge_probability(n, theta);
    let pairs = (n * (n - 1)) as u64;
    let mut edges = Vec::new();
    if p >= 1.0 {
        edges.extend((0..pairs).map(|m| pair(n, m)));
    } else {
        // Skip over absent pairs with geometric gaps.
        let gap = Geometric::new(p).map_err(|e| Error::malformed(e.to_string()))?;
        let mut m = gap.sample(rng);
        while m < pairs {
            edges.push(pair(n, m));
            m = m.saturating_add(1).saturating_add(gap.sample(rng));
        }
    }
    SynapticGraph::from_edges(n, theta, edges)
}

/// `m`-th ordered pair `(i, j)`, `j ≠ i`, in row-major order.
fn pair(n: usize, m: u64) -> (usize, usize) {
    let i = (m / (n as u64 - 1)) as usize;
    let r = (m % (n as u64 - 1)) as usize;
    (i, if r >= i { r + 1 } else { r })
}

/// Graph number `index` of the stream rooted at `src`.
pub fn sample_indexed(n: usize, theta: f64, src: &RandomCoordinateSource, index: u64) -> Result<SynapticGraph> {
    sample_er_digraph(n, theta, &mut src.sequential(Stream::Graph, index))
}

/// First `n` with `i ∈ V^n`, where `V^1` are the out-neighbors of `i` and
/// `V^n` the out-neighbors of `V^{n-1}`; `None` if no such `n ≤ k_max`.
pub fn return_time_tau(graph: &SynapticGraph, i: usize, k_max: u64) -> Option<u64> {
    // The first n with i ∈ V^n is the length of the shortest cycle through i.
    let mut dist = vec![u64::MAX; graph.neuron_count()];
    let mut queue = VecDeque::new();
    dist[i] = 0;
    queue.push_back(i);
    while let Some(u) = queue.pop_front() {
        let d = dist[u] + 1;
        if d > k_max {
            return None;
        }
        for &v in graph.out_neighbors(u) {
            if v == i {
                return Some(d);
            }
            if dist[v] == u64::MAX {
                dist[v] = d;
                queue.push_back(v);
            }
        }
    }
    None
}

/// `(k - 1)/N · e^{θk/N}`.
pub fn tau_tail_bound(n: usize, theta: f64, k: u64) -> f64 {
    let n = n as f64;
    (k as f64 - 1.0) / n * (theta * k as f64 / n).exp()
}

/// Fraction of sampled graphs, with binomial standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Proportion {
    pub estimate: f64,
    pub standard_error: f64,
    pub trials: u64,
}

impl Proportion {
    pub fn from_counts(hits: u64, trials: u64) -> Self {
        let p = hits as f64 / trials as f64;
        Self {
            estimate: p,
            standard_error: (p * (1.0 - p) / trials as f64).sqrt(),
            trials,
        }
    }
}

/// `τ^0` of `reps` independent graphs, capped at `k_max`.
pub fn sample_return_times(
    n: usize,
    theta: f64,
    k_max: u64,
    reps: u64,
    src: &RandomCoordinateSource,
) -> Result<Vec<Option<u64>>> {
    (0..reps)
        .into_par_iter()
        .map(|r| sample_indexed(n, theta, src, r).map(|g| return_time_tau(&g, 0, k_max)))
        .collect()
}

/// Empirical `P(τ ≤ k)` for each `k` in `ks`, on one shared set of graphs.
pub fn estimate_tau_cdf_curve(
    n: usize,
    theta: f64,
    ks: &[u64],
    reps: u64,
    src: &RandomCoordinateSource,
) -> Result<Vec<Proportion>> {
    if reps < 100 {
        return Err(Error::malformed(format!("need at least 100 repetitions, got {reps}")));
    }
    let k_max = ks.iter().copied().max().unwrap_or(1);
    let taus = sample_return_times(n, theta, k_max, reps, src)?;
    Ok(ks
        .iter()
        .map(|&k| {
            let hits = taus.iter().filter(|t| t.is_some_and(|t| t <= k)).count() as u64;
            Proportion::from_counts(hits, reps)
        })
        .collect())
}

pub fn estimate_tau_cdf(n: usize, theta: f64, k: u64, reps: u64, src: &RandomCoordinateSource) -> Result<Proportion> {
    Ok(estimate_tau_cdf_curve(n, theta, &[k], reps, src)?[0])
}

/// `⌊√N⌋`.
pub fn default_k(n: usize) -> u64 {
    (n as f64).sqrt().floor() as u64
}

/// Whether information from `i` needs more than `2 k` steps to return.
pub fn event_a(graph: &SynapticGraph, i: usize, k: u64) -> bool {
    return_time_tau(graph, i, 2 * k).is_none()
}

/// Empirical `P(A^c)` for neuron 0 with `k = ⌊√N⌋`.
pub fn estimate_event_a_complement(n: usize, theta: f64, reps: u64, src: &RandomCoordinateSource) -> Result<Proportion> {
    let k = default_k(n);
    let taus = sample_return_times(n, theta, 2 * k, reps, src)?;
    let hits = taus.iter().filter(|t| t.is_some()).count() as u64;
    Ok(Proportion::from_counts(hits, reps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// First `n ≤ k_max` with `(A^n)_{ii} > 0`, by boolean matrix powers.
    fn tau_by_matrix_powers(g: &SynapticGraph, i: usize, k_max: u64) -> Option<u64> {
        let n = g.neuron_count();
        let a: Vec<Vec<bool>> = (0..n).map(|u| (0..n).map(|v| g.has_edge(u, v)).collect()).collect();
        let mut power = a.clone();
        for step in 1..=k_max {
            if power[i][i] {
                return Some(step);
            }
            power = (0..n)
                .map(|u| (0..n).map(|v| (0..n).any(|w| power[u][w] && a[w][v])).collect())
                .collect();
        }
        None
    }

    #[test]
    fn probabilities() {
        assert!((edge_probability(100, 1.0) - 0.0101).abs() < 1e-15);
        assert_eq!(edge_probability(2, 0.0), 0.5);
        assert_eq!(tau_tail_bound(50, 0.0, 5), 0.08);
        assert_eq!(tau_tail_bound(50, 0.0, 1), 0.0);
        assert!((tau_tail_bound(100, 1.0, 10) - 0.09 * 0.1f64.exp()).abs() < 1e-15);
    }

    #[test]
    fn small_cases() {
        let g = SynapticGraph::from_edges(3, 0.0, [(0, 1), (1, 0)]).unwrap();
        assert_eq!(return_time_tau(&g, 0, 10), Some(2));
        assert!(!event_a(&g, 0, 1));
        let e = SynapticGraph::empty(4);
        assert_eq!(return_time_tau(&e, 0, 100), None);
        assert!(event_a(&e, 0, 2));
        assert!(SynapticGraph::from_edges(2, 0.0, [(1, 1)]).is_err());
    }

    #[test]
    fn bfs_matches_matrix_powers() {
        let src = RandomCoordinateSource::new(7);
        for seed in 0..1000u64 {
            let n = 2 + (seed % 7) as usize;
            let g = sample_er_digraph(n, 3.0 * (seed % 3) as f64, &mut src.sequential(Stream::Graph, seed)).unwrap();
            for i in 0..n {
                assert_eq!(return_time_tau(&g, i, 10), tau_by_matrix_powers(&g, i, 10), "seed {seed}");
            }
        }
    }

    #[test]
    fn edge_count_is_binomial() {
        let src = RandomCoordinateSource::new(3);
        let (n, reps) = (100usize, 1000u64);
        let total: usize = (0..reps).map(|r| sample_indexed(n, 0.0, &src, r).unwrap().edge_count()).sum();
        let pairs = (n * (n - 1)) as f64;
        let p = edge_probability(n, 0.0);
        let mean = total as f64 / reps as f64;
        let se = (pairs * p * (1.0 - p) / reps as f64).sqrt();
        assert!((mean - pairs * p).abs() < 3.0 * se, "{mean}");
    }

    #[test]
    fn csv_round_trip() {
        let g = sample_indexed(20, 1.0, &RandomCoordinateSource::new(1), 0).unwrap();
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        let back = SynapticGraph::read_csv(&buf[..], 20, 1.0).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn cdf_is_monotone() {
        let src = RandomCoordinateSource::new(11);
        let curve = estimate_tau_cdf_curve(50, 0.0, &[1, 2, 3, 4, 5], 2000, &src).unwrap();
        assert_eq!(curve[0].estimate, 0.0);
        assert!(curve.windows(2).all(|w| w[0].estimate <= w[1].estimate));
    }

    proptest! {
        #[test]
        fn sampled_graphs_have_no_self_loops(n in 2usize..40, theta in 0.0f64..5.0, seed: u64) {
            let g = sample_er_digraph(n, theta, &mut RandomCoordinateSource::new(seed).sequential(Stream::Graph, 0)).unwrap();
            prop_assert!(g.edges().all(|(i, j)| i != j && j < n));
        }
    }
}
