//! Exact stationary law and spike-interval moments of small finite-memory
//! systems, by enumeration of the state space.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::ModelSpec;

/// Largest number of state bits (`neurons × memory`) the oracle enumerates.
pub const MAX_STATE_BITS: usize = 12;

/// A state packs the last `memory` configurations: bits `0..n` hold the most
/// recent one, bits `n..2n` the one before, and so on.
#[derive(Clone, Debug)]
pub struct MarkovOracle {
    neurons: usize,
    memory: usize,
    transition: DMatrix<f64>,
    stationary: DVector<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IsiMoments {
    pub mean: f64,
    /// `Cov(S_{k+1} - S_k, S_k - S_{k-1})` under the stationary law.
    pub adjacent_covariance: f64,
    pub variance: f64,
    /// Mean interval times stationary rate; 1 by Kac's identity.
    pub kac_product: f64,
}

/// Serializable overview of an oracle.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleSummary {
    pub states: usize,
    pub memory: usize,
    pub rates: Vec<f64>,
    pub isi: Vec<IsiMoments>,
}

impl MarkovOracle {
    pub fn new(spec: &ModelSpec) -> Result<Self> {
        if !spec.is_age_independent() {
            return Err(Error::RegimeMismatch(
                "the oracle needs age-independent rates".into(),
            ));
        }
        let neurons = spec.neuron_count();
        // Only presynaptic neurons need their aging to end.
        let mut memory = 1usize;
        for i in 0..neurons {
            for &(j, _) in spec.inputs(i) {
                let support = spec.aging(j).support().ok_or_else(|| {
                    Error::RegimeMismatch("the oracle needs finite-support aging".into())
                })?;
                memory = memory.max(support as usize);
            }
        }
        if neurons * memory > MAX_STATE_BITS {
            return Err(Error::StateSpaceTooLarge(format!(
                "{neurons} neurons with memory {memory} need 2^{} states, limit 2^{MAX_STATE_BITS}",
                neurons * memory
            )));
        }
        let states = 1usize << (neurons * memory);
        let configs = 1usize << neurons;
        let keep = (1usize << (neurons * (memory - 1))) - 1;
        let mut transition = DMatrix::zeros(states, states);
        for x in 0..states {
            let p: Vec<f64> = (0..neurons).map(|i| spike_probability(spec, memory, x, i)).collect();
            let shifted = (x & keep) << neurons;
            for c in 0..configs {
                let prob: f64 = p
                    .iter()
                    .enumerate()
                    .map(|(i, &q)| if c >> i & 1 == 1 { q } else { 1.0 - q })
                    .product();
                transition[(x, shifted | c)] += prob;
            }
        }
        let stationary = stationary_vector(&transition)?;
        Ok(Self {
            neurons,
            memory,
            transition,
            stationary,
        })
    }

    pub fn neurons(&self) -> usize {
        self.neurons
    }

    pub fn memory(&self) -> usize {
        self.memory
    }

    pub fn state_count(&self) -> usize {
        self.stationary.len()
    }

    pub fn transition(&self) -> &DMatrix<f64> {
        &self.transition
    }

    pub fn stationary(&self) -> &[f64] {
        self.stationary.as_slice()
    }

    /// `max_x |(πP)(x) - π(x)|`.
    pub fn fixed_point_error(&self) -> f64 {
        let next = self.transition.tr_mul(&self.stationary);
        (next - &self.stationary).amax()
    }

    /// Stationary probability that neuron `i` spikes at a given time.
    pub fn spike_rate(&self, i: usize) -> f64 {
        self.stationary
            .iter()
            .enumerate()
            .filter(|&(x, _)| x >> i & 1 == 1)
            .map(|(_, p)| p)
            .sum()
    }

    /// Stationary law of the configuration at one time, indexed by the
    /// bitmask of spiking neurons.
    pub fn joint_distribution(&self) -> Vec<f64> {
        let mask = (1usize << self.neurons) - 1;
        let mut out = vec![0.0; 1 << self.neurons];
        for (x, p) in self.stationary.iter().enumerate() {
            out[x & mask] += p;
        }
        out
    }

    pub fn summary(&self) -> Result<OracleSummary> {
        Ok(OracleSummary {
            states: self.state_count(),
            memory: self.memory,
            rates: (0..self.neurons).map(|i| self.spike_rate(i)).collect(),
            isi: (0..self.neurons)
                .map(|i| isi_moments(self, i))
                .collect::<Result<_>>()?,
        })
    }
}

fn spike_probability(spec: &ModelSpec, memory: usize, x: usize, i: usize) -> f64 {
    let n = spec.neuron_count();
    let bit = |lag: usize, j: usize| x >> ((lag - 1) * n + j) & 1 == 1;
    // The look-back stops at the last own spike, inclusive.
    let reach = (1..=memory).find(|&lag| bit(lag, i)).unwrap_or(memory);
    let s: f64 = spec
        .inputs(i)
        .iter()
        .map(|&(j, w)| {
            w * (1..=reach)
                .filter(|&lag| bit(lag, j))
                .map(|lag| spec.aging(j).eval(lag as u64))
                .sum::<f64>()
        })
        .sum();
    spec.rate(i, s, 1)
}

fn stationary_vector(p: &DMatrix<f64>) -> Result<DVector<f64>> {
    let n = p.nrows();
    // (Pᵀ - I) π = 0 with the last equation replaced by Σ π = 1.
    let mut a = p.transpose() - DMatrix::identity(n, n);
    a.row_mut(n - 1).fill(1.0);
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    let mut pi = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Degenerate("stationary system is singular".into()))?;
    pi.iter_mut().for_each(|v| *v = v.max(0.0));
    let total = pi.sum();
    pi /= total;
    Ok(pi)
}

/// Build the oracle of a model whose chain is Markov on `{0,1}^N`.
pub fn exact_stationary(spec: &ModelSpec) -> Result<MarkovOracle> {
    MarkovOracle::new(spec)
}

/// Mean, variance and adjacent covariance of neuron `i`'s inter-spike
/// intervals, from first-passage solves on the chain watched at its spikes.
pub fn isi_moments(oracle: &MarkovOracle, i: usize) -> Result<IsiMoments> {
    let n = oracle.state_count();
    let spiking: Vec<bool> = (0..n).map(|x| x >> i & 1 == 1).collect();
    let hit: Vec<usize> = (0..n).filter(|&x| spiking[x]).collect();
    let miss: Vec<usize> = (0..n).filter(|&x| !spiking[x]).collect();
    let p = oracle.transition();
    let rate = oracle.spike_rate(i);
    if rate <= 0.0 {
        return Err(Error::Degenerate(format!("neuron {i} never spikes")));
    }
    let sub = |rows: &[usize], cols: &[usize]| DMatrix::from_fn(rows.len(), cols.len(), |r, c| p[(rows[r], cols[c])]);
    let p_mm = sub(&miss, &miss);
    let p_mh = sub(&miss, &hit);
    let p_hm = sub(&hit, &miss);
    let p_hh = sub(&hit, &hit);
    let lu = (DMatrix::identity(miss.len(), miss.len()) - &p_mm).lu();
    let solve = |rhs: DVector<f64>| {
        if miss.is_empty() {
            return Ok(rhs);
        }
        lu.solve(&rhs)
            .ok_or_else(|| Error::Degenerate(format!("neuron {i} can avoid spiking forever")))
    };
    let ones_h = DVector::from_element(hit.len(), 1.0);
    // Time to the next spike from a silent state, then from a spiking one.
    let wait = solve(DVector::from_element(miss.len(), 1.0))?;
    let interval = &ones_h + &p_hm * &wait;
    // Second moment: E[T²] = 1 + 2 E[T - 1] + E[(T - 1)²].
    let wait_sq = solve(DVector::from_element(miss.len(), 1.0) + 2.0 * &p_mm * &wait)?;
    let interval_sq = &ones_h + 2.0 * (&p_hm * &wait) + &p_hm * &wait_sq;
    // E[h(next spike state)] and E[T h(next spike state)] from silent states.
    let next_interval = solve(&p_mh * &interval)?;
    let timed = solve(&p_mh * &interval + &p_mm * &next_interval)?;
    let product = &p_hh * &interval + &p_hm * (&next_interval + &timed);

    let weights: Vec<f64> = hit.iter().map(|&x| oracle.stationary()[x] / rate).collect();
    let expect = |v: &DVector<f64>| weights.iter().zip(v.iter()).map(|(w, x)| w * x).sum::<f64>();
    let mean = expect(&interval);
    Ok(IsiMoments {
        mean,
        adjacent_covariance: expect(&product) - mean * mean,
        variance: expect(&interval_sq) - mean * mean,
        kac_product: mean * rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::presets;

    #[test]
    fn independent_neuron_is_geometric() {
        let spec = presets::independent(1, 0.3).unwrap();
        let o = exact_stationary(&spec).unwrap();
        assert!((o.stationary()[0] - 0.7).abs() < 1e-14);
        assert!((o.stationary()[1] - 0.3).abs() < 1e-14);
        let m = isi_moments(&o, 0).unwrap();
        assert!((m.mean - 1.0 / 0.3).abs() < 1e-12);
        assert!(m.adjacent_covariance.abs() < 1e-12);
        assert!((m.variance - 0.7 / 0.09).abs() < 1e-10);
    }

    #[test]
    fn two_neuron_operator_matches_hand_built_kernel() {
        let spec = presets::two_neuron_default();
        let o = exact_stationary(&spec).unwrap();
        let phi = |other: bool| if other { 0.7 + 0.25 * 0.25 } else { 0.7 };
        for x in 0..4usize {
            let (a, b) = (x & 1 == 1, x & 2 == 2);
            let (p0, p1) = (phi(b), phi(a));
            for y in 0..4usize {
                let f0 = if y & 1 == 1 { p0 } else { 1.0 - p0 };
                let f1 = if y & 2 == 2 { p1 } else { 1.0 - p1 };
                assert!((o.transition()[(x, y)] - f0 * f1).abs() < 1e-15);
            }
            assert!((o.transition().row(x).sum() - 1.0).abs() < 1e-12);
        }
        assert!(o.fixed_point_error() < 1e-12);
        for i in 0..2 {
            let m = isi_moments(&o, i).unwrap();
            assert!((m.kac_product - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn longer_memory_uses_stacked_states() {
        let spec = crate::model::ModelSpec::new(
            2,
            vec![(0, 1, 0.5), (1, 0, -0.5)],
            vec![crate::model::RateFunction::saturated_linear(0.3, 0.5); 2],
            vec![crate::model::AgingFunction::FiniteSupport { support: 3 }; 2],
            0.3,
            0.5,
            crate::model::NeighborhoodRule::ByWeight,
        )
        .unwrap();
        let o = exact_stationary(&spec).unwrap();
        assert_eq!(o.state_count(), 64);
        assert!(o.fixed_point_error() < 1e-12);
        let joint = o.joint_distribution();
        assert!((joint.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let m = isi_moments(&o, 1).unwrap();
        assert!((m.kac_product - 1.0).abs() < 1e-9);
    }

    #[test]
    fn oversized_state_space_is_rejected() {
        let spec = presets::independent(13, 0.5).unwrap();
        assert!(matches!(exact_stationary(&spec), Err(Error::StateSpaceTooLarge { .. })));
    }
}
