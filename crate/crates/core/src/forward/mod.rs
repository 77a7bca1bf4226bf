//! Forward dynamics of a finite system from a chosen past.

pub mod oracle;

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::field::SpikeField;
use crate::model::{AgingFunction, ModelSpec};
use crate::rng::{RandomCoordinateSource, Stream};

pub use oracle::{exact_stationary, isi_moments, IsiMoments, MarkovOracle};

/// Largest look-back window chosen automatically for power-law aging.
pub const MAX_AUTO_WINDOW: u64 = 1_000_000;
/// Input error tolerated when truncating infinite-support aging.
pub const TRUNCATION_TOLERANCE: f64 = 1e-10;

/// How one presynaptic contribution is tracked.
#[derive(Clone, Debug)]
enum Tracker {
    /// `v ← v + x`.
    Count,
    /// `v ← e^{-r} v + c e^{-r} x`.
    Decay { factor: f64, gain: f64 },
    /// Sum over the last `window` configurations.
    Window,
}

/// Configuration and memory of the chain after `time`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainState {
    time: i64,
    config: Vec<bool>,
    last_spike: Vec<i64>,
    /// Running input per `(target, presynaptic position)` for recursive trackers.
    traces: Vec<Vec<f64>>,
    /// Most recent configuration first.
    ring: VecDeque<Vec<bool>>,
}

impl ChainState {
    pub fn time(&self) -> i64 {
        self.time
    }

    pub fn config(&self) -> &[bool] {
        &self.config
    }

    /// Steps since each neuron's last spike, as seen by the next step.
    pub fn ages(&self) -> Vec<u64> {
        self.last_spike
            .iter()
            .map(|&l| (self.time + 1 - l) as u64)
            .collect()
    }

    pub fn last_spikes(&self) -> &[i64] {
        &self.last_spike
    }
}

/// Precomputed update rule of a model.
#[derive(Clone, Debug)]
pub struct ForwardModel<'a> {
    spec: &'a ModelSpec,
    trackers: Vec<Vec<Tracker>>,
    window: usize,
    truncation: f64,
}

impl<'a> ForwardModel<'a> {
    pub fn new(spec: &'a ModelSpec) -> Result<Self> {
        let mut window = 1u64;
        let mut truncation = 0.0f64;
        let weight_sup = crate::model::summability_sup(spec);
        let mut trackers = Vec::with_capacity(spec.neuron_count());
        for i in 0..spec.neuron_count() {
            let mut row = Vec::with_capacity(spec.inputs(i).len());
            for &(j, _) in spec.inputs(i) {
                let tracker = match *spec.aging(j) {
                    AgingFunction::ConstantOne => Tracker::Count,
                    AgingFunction::Exponential { scale, rate } => {
                        let factor = (-rate).exp();
                        Tracker::Decay {
                            factor,
                            gain: scale * factor,
                        }
                    }
                    AgingFunction::FiniteSupport { support } => {
                        window = window.max(support);
                        Tracker::Window
                    }
                    ref g @ AgingFunction::PowerLaw { .. } => {
                        let cap = match spec.age_cap() {
                            Some(cap) => cap,
                            None => auto_window(g, spec.gamma() * weight_sup)
                                .ok_or(Error::UnboundedMemory { neuron: j })?,
                        };
                        window = window.max(cap);
                        let tail = g.tail(cap + 1).unwrap_or(f64::INFINITY);
                        truncation = truncation.max(spec.gamma() * weight_sup * tail);
                        Tracker::Window
                    }
                };
                row.push(tracker);
            }
            trackers.push(row);
        }
        Ok(Self {
            spec,
            trackers,
            window: window as usize,
            truncation,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        self.spec
    }

    /// Bound on the spike-probability error caused by truncated memory.
    pub fn truncation_bound(&self) -> f64 {
        self.truncation
    }

    /// State at time 0 after every neuron spiked at time 0.
    pub fn initial_state(&self) -> ChainState {
        let n = self.spec.neuron_count();
        let mut state = ChainState {
            time: -1,
            config: vec![false; n],
            last_spike: vec![-1; n],
            traces: (0..n).map(|i| vec![0.0; self.spec.inputs(i).len()]).collect(),
            ring: VecDeque::with_capacity(self.window + 1),
        };
        self.advance(&mut state, &vec![true; n]);
        state
    }

    /// State at time 0 after every neuron spiked at `-quiet` and none since.
    pub fn quiet_state(&self, quiet: u64) -> ChainState {
        let n = self.spec.neuron_count();
        let mut state = self.initial_state();
        state.time -= quiet as i64;
        state.last_spike.iter_mut().for_each(|l| *l -= quiet as i64);
        let silent = vec![false; n];
        for _ in 0..quiet {
            self.advance(&mut state, &silent);
        }
        state
    }

    /// Spike probabilities of every neuron at `state.time() + 1`.
    pub fn spike_probabilities(&self, state: &ChainState) -> Vec<f64> {
        (0..self.spec.neuron_count())
            .map(|i| self.spike_probability(state, i))
            .collect()
    }

    pub fn spike_probability(&self, state: &ChainState, i: usize) -> f64 {
        let t = state.time + 1;
        let age = (t - state.last_spike[i]) as u64;
        let reach = (age as usize).min(state.ring.len());
        let mut s = 0.0;
        for (p, &(j, w)) in self.spec.inputs(i).iter().enumerate() {
            let v = match self.trackers[i][p] {
                Tracker::Count | Tracker::Decay { .. } => state.traces[i][p],
                Tracker::Window => {
                    let g = self.spec.aging(j);
                    let mut acc = 0.0;
                    for (n, cfg) in state.ring.iter().take(reach).enumerate() {
                        if cfg[j] {
                            acc += g.eval(n as u64 + 1);
                        }
                    }
                    acc
                }
            };
            s += w * v;
        }
        self.spec.rate(i, s, age)
    }

    /// Append `config` as the configuration at `state.time() + 1`.
    pub fn advance(&self, state: &mut ChainState, config: &[bool]) {
        let t = state.time + 1;
        for i in 0..self.spec.neuron_count() {
            // A spike of i at t resets the look-back: sums restart at L = t.
            let reset = config[i];
            for (p, &(j, _)) in self.spec.inputs(i).iter().enumerate() {
                let x = if config[j] { 1.0 } else { 0.0 };
                let v = &mut state.traces[i][p];
                let prev = if reset { 0.0 } else { *v };
                match self.trackers[i][p] {
                    Tracker::Count => *v = prev + x,
                    Tracker::Decay { factor, gain } => *v = factor * prev + gain * x,
                    Tracker::Window => {}
                }
            }
        }
        for (i, &x) in config.iter().enumerate() {
            if x {
                state.last_spike[i] = t;
            }
        }
        if self.window > 0 {
            if state.ring.len() == self.window {
                let mut recycled = state.ring.pop_back().unwrap();
                recycled.copy_from_slice(config);
                state.ring.push_front(recycled);
            } else {
                state.ring.push_front(config.to_vec());
            }
        }
        state.config.copy_from_slice(config);
        state.time = t;
    }

    /// Draw the next configuration with uniforms keyed by `(neuron, time)`.
    pub fn step(&self, state: &mut ChainState, src: &RandomCoordinateSource) {
        let t = state.time + 1;
        let config: Vec<bool> = (0..self.spec.neuron_count())
            .map(|i| src.uniform(Stream::Forward, i, t, 0) < self.spike_probability(state, i))
            .collect();
        self.advance(state, &config);
    }

    /// Run `burnin + steps` steps and record `neurons` over the last `steps`.
    pub fn run(
        &self,
        state: &mut ChainState,
        neurons: &[usize],
        steps: u64,
        burnin: u64,
        src: &RandomCoordinateSource,
    ) -> SpikeField {
        for _ in 0..burnin {
            self.step(state, src);
        }
        let start = state.time + 1;
        let mut field = SpikeField::new(neurons.to_vec(), start, start + steps as i64 - 1);
        for _ in 0..steps {
            self.step(state, src);
            for &n in neurons {
                if state.config[n] {
                    field.push(n, state.time);
                }
            }
        }
        field
    }
}

/// Smallest window whose neglected input stays below the tolerance.
fn auto_window(g: &AgingFunction, scale: f64) -> Option<u64> {
    if scale == 0.0 {
        return Some(1);
    }
    g.tail(1)?;
    let mut cap = 1u64;
    while scale * g.tail(cap + 1)? > TRUNCATION_TOLERANCE {
        cap *= 2;
        if cap > MAX_AUTO_WINDOW {
            return None;
        }
    }
    Some(cap)
}

/// Raster of every neuron over `steps` steps after `burnin`, starting from
/// the all-spiked past.
pub fn simulate(spec: &ModelSpec, steps: u64, burnin: u64, src: &RandomCoordinateSource) -> Result<SpikeField> {
    let neurons: Vec<usize> = (0..spec.neuron_count()).collect();
    simulate_neurons(spec, &neurons, steps, burnin, src)
}

/// Like [`simulate`], recording only `neurons`.
pub fn simulate_neurons(
    spec: &ModelSpec,
    neurons: &[usize],
    steps: u64,
    burnin: u64,
    src: &RandomCoordinateSource,
) -> Result<SpikeField> {
    let model = ForwardModel::new(spec)?;
    let mut state = model.initial_state();
    Ok(model.run(&mut state, neurons, steps, burnin, src))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{presets, NeighborhoodRule, RateFunction};

    /// Direct evaluation of the spike probability from a full raster.
    fn direct_probability(spec: &ModelSpec, past: &[Vec<bool>], i: usize) -> f64 {
        let t = past.len();
        let last = (0..t).rev().find(|&s| past[s][i]).unwrap();
        let s: f64 = spec
            .inputs(i)
            .iter()
            .map(|&(j, w)| {
                w * (last..t)
                    .filter(|&s| past[s][j])
                    .map(|s| spec.aging(j).eval((t - s) as u64))
                    .sum::<f64>()
            })
            .sum();
        spec.rate(i, s, (t - last) as u64)
    }

    #[test]
    fn trackers_match_direct_evaluation() {
        for aging in [
            AgingFunction::ConstantOne,
            AgingFunction::Exponential { scale: 0.8, rate: 0.4 },
            AgingFunction::FiniteSupport { support: 3 },
            AgingFunction::PowerLaw { scale: 1.0, exponent: 2.0 },
        ] {
            let spec = ModelSpec::new(
                3,
                vec![(0, 1, 0.3), (2, 1, -0.2), (1, 0, 0.5), (1, 2, 0.1)],
                vec![RateFunction::sigmoid_floor(0.2).with_age_recovery(0.5); 3],
                vec![aging.clone(); 3],
                0.2,
                0.8,
                NeighborhoodRule::ByWeight,
            )
            .unwrap()
            .with_age_cap(64);
            let model = ForwardModel::new(&spec).unwrap();
            let src = RandomCoordinateSource::new(17);
            let mut state = model.initial_state();
            let mut past = vec![vec![true; 3]];
            for _ in 0..40 {
                for i in 0..3 {
                    let want = direct_probability(&spec, &past, i);
                    let got = model.spike_probability(&state, i);
                    assert!((want - got).abs() < 1e-12, "{aging:?}: {want} vs {got}");
                }
                model.step(&mut state, &src);
                past.push(state.config().to_vec());
            }
        }
    }

    #[test]
    fn zero_steps_give_empty_raster() {
        let spec = presets::independent(2, 0.3).unwrap();
        let field = simulate(&spec, 0, 5, &RandomCoordinateSource::new(1)).unwrap();
        assert!(field.is_empty());
        assert_eq!(field.spike_count(), 0);
    }

    #[test]
    fn full_floor_spikes_everywhere() {
        let spec = presets::independent(3, 1.0).unwrap();
        let field = simulate(&spec, 50, 0, &RandomCoordinateSource::new(1)).unwrap();
        assert_eq!(field.spike_count(), 150);
    }

    #[test]
    fn power_law_without_cap_needs_summable_tail() {
        let spec = ModelSpec::new(
            2,
            vec![(0, 1, 1.0)],
            vec![RateFunction::saturated_linear(0.1, 0.1); 2],
            vec![AgingFunction::PowerLaw { scale: 1.0, exponent: 1.5 }; 2],
            0.1,
            0.1,
            NeighborhoodRule::ByWeight,
        )
        .unwrap();
        assert!(matches!(ForwardModel::new(&spec), Err(Error::UnboundedMemory { .. })));
    }

    #[test]
    fn quiet_past_has_expected_ages() {
        let spec = presets::two_neuron_default();
        let model = ForwardModel::new(&spec).unwrap();
        let state = model.quiet_state(5);
        assert_eq!(state.time(), 0);
        assert_eq!(state.ages(), vec![6, 6]);
        assert!(state.config().iter().all(|&x| !x));
    }
}
