use rayon::prelude::*;
use spikeclan::forward::oracle::{isi_moments, MarkovOracle};
use spikeclan::forward::simulate;
use spikeclan::isi::{adjacent_isi_covariance, extract_spikes};
use spikeclan::model::{presets, AgingFunction, RateFunction};
use spikeclan::perfect::{perfect_sample, spacetime_sample, DEFAULT_BUDGET};
use spikeclan::stats::{chi_square_test, sample_mean};
use spikeclan::{ModelSpec, RandomCoordinateSource};

const SAMPLES: u64 = 20_000;

/// Spike bitmask at time 0 of independent stationary draws.
fn perfect_states(spec: &ModelSpec, seed: u64, spacetime: bool) -> Vec<usize> {
    let src = RandomCoordinateSource::new(seed);
    let neurons: Vec<usize> = (0..spec.neuron_count()).collect();
    (0..SAMPLES)
        .into_par_iter()
        .map(|r| {
            let child = src.child(r);
            let field = if spacetime {
                spacetime_sample(&child, spec, &neurons, (0, 0), DEFAULT_BUDGET)
            } else {
                perfect_sample(&child, spec, &neurons, (0, 0), DEFAULT_BUDGET)
            }
            .unwrap();
            neurons
                .iter()
                .filter(|&&i| field.get(i, 0))
                .map(|&i| 1usize << i)
                .sum()
        })
        .collect()
}

fn assert_matches_oracle(spec: &ModelSpec, states: &[usize]) {
    let oracle = MarkovOracle::new(spec).unwrap();
    for i in 0..spec.neuron_count() {
        let hits: Vec<f64> = states.iter().map(|&x| (x >> i & 1) as f64).collect();
        let rate = sample_mean(&hits);
        assert!(rate.within(oracle.spike_rate(i), 3.0), "neuron {i}: {rate:?} vs {}", oracle.spike_rate(i));
    }
    let joint = oracle.joint_distribution();
    let mut counts = vec![0u64; joint.len()];
    for &x in states {
        counts[x] += 1;
    }
    let test = chi_square_test(&counts, &joint).unwrap();
    assert!(test.p_value > 0.01, "{test:?}");
}

#[test]
fn conditional_sampler_matches_two_neuron_chain() {
    let spec = presets::two_neuron_default();
    assert_matches_oracle(&spec, &perfect_states(&spec, 11, false));
}

#[test]
fn spacetime_sampler_matches_two_neuron_chain() {
    let spec = presets::two_neuron_default();
    assert_matches_oracle(&spec, &perfect_states(&spec, 12, true));
}

#[test]
fn conditional_sampler_matches_three_neuron_chain_with_memory() {
    let spec = presets::all_to_all(
        3,
        0.3,
        RateFunction::saturated_linear(0.6, 0.3),
        AgingFunction::FiniteSupport { support: 2 },
        0.6,
        0.3,
    )
    .unwrap();
    assert_matches_oracle(&spec, &perfect_states(&spec, 13, false));
}

#[test]
fn forward_simulation_matches_two_neuron_chain() {
    let spec = presets::two_neuron_default();
    let oracle = MarkovOracle::new(&spec).unwrap();
    let field = simulate(&spec, 400_000, 1_000, &RandomCoordinateSource::new(14)).unwrap();
    let times = extract_spikes(&field, 0);
    let rate = times.len() as f64 / field.len() as f64;
    assert!((rate - oracle.spike_rate(0)).abs() < 5e-3, "{rate}");

    let moments = isi_moments(&oracle, 0).unwrap();
    let cov = adjacent_isi_covariance(&times, 1000).unwrap();
    assert!(cov.within(moments.adjacent_covariance, 3.0), "{cov:?} vs {moments:?}");
    assert!((moments.kac_product - 1.0).abs() < 1e-10);
}
