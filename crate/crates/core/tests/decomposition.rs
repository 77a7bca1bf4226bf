use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spikeclan::kalikow::spacetime::SpacetimeDecomposition;
use spikeclan::kalikow::{Exactness, Mode, SiteDecomposition, SiteTimeContext};
use spikeclan::model::{presets, AgingFunction};
use spikeclan::ModelSpec;

const T: i64 = 0;
const WINDOW: i64 = 40;

/// Spontaneous field with density `delta` on `[T - WINDOW, T - 1]`, with a
/// guaranteed spike of `i` inside the window, and a history `x ≥ ξ`.
fn random_fields(rng: &mut ChaCha8Rng, spec: &ModelSpec, i: usize) -> (HashSet<(usize, i64)>, HashSet<(usize, i64)>) {
    let n = spec.neuron_count();
    let mut xi = HashSet::new();
    for j in 0..n {
        for s in T - WINDOW..T {
            if rng.gen_bool(spec.delta()) {
                xi.insert((j, s));
            }
        }
    }
    xi.insert((i, T - rng.gen_range(1..=WINDOW / 2)));
    let mut x = xi.clone();
    for j in 0..n {
        for s in T - WINDOW..T {
            if rng.gen_bool(0.4) {
                x.insert((j, s));
            }
        }
    }
    (xi, x)
}

fn random_aging(rng: &mut ChaCha8Rng) -> AgingFunction {
    if rng.gen_bool(0.5) {
        AgingFunction::ConstantOne
    } else {
        AgingFunction::FiniteSupport {
            support: rng.gen_range(1..=4),
        }
    }
}

#[test]
fn attractive_reconstruction_and_normalization() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for case in 0..200 {
        let n = rng.gen_range(1..=5);
        let aging = random_aging(&mut rng);
        let spec = presets::random_model(&mut rng, n, aging, false).unwrap();
        let i = rng.gen_range(0..n);
        let (xi, x) = random_fields(&mut rng, &spec, i);
        let xi_f = |j: usize, s: i64| xi.contains(&(j, s));
        let x_f = |j: usize, s: i64| x.contains(&(j, s));
        let ctx = SiteTimeContext::from_field(&spec, i, T, &xi_f, 1000).unwrap();
        let site = SiteDecomposition::new(&spec, ctx, Mode::Auto).unwrap();
        assert_eq!(site.weights().exactness(), Exactness::ExactAttractive);
        let err = site.reconstruction_error(&x_f).unwrap_or_else(|e| panic!("case {case}: {e} {:?} {:?}", site.weights(), site.r_pairs(site.weights().k_max(), &x_f)));
        assert!(err < 1e-9, "case {case}: reconstruction error {err}");
        let total = site.weights().total();
        assert!((total - 1.0).abs() < 1e-12, "case {case}: total {total}");
        for k in 1..=site.weights().k_max() {
            assert!(
                site.lambda_bar(k) >= site.weights().lambda(k) - 1e-15,
                "case {case}: lambda_bar({k}) below lambda"
            );
        }
    }
}

#[test]
fn signed_weights_reconstruct_in_dominated_mode() {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    for case in 0..100 {
        let n = rng.gen_range(2..=4);
        let aging = random_aging(&mut rng);
        let spec = presets::random_model(&mut rng, n, aging, true).unwrap();
        let i = rng.gen_range(0..n);
        let (xi, x) = random_fields(&mut rng, &spec, i);
        let xi_f = |j: usize, s: i64| xi.contains(&(j, s));
        let x_f = |j: usize, s: i64| x.contains(&(j, s));
        let ctx = SiteTimeContext::from_field(&spec, i, T, &xi_f, 1000).unwrap();
        let site = SiteDecomposition::new(&spec, ctx, Mode::Dominated).unwrap();
        let err = site.reconstruction_error(&x_f).unwrap();
        assert!(err < 1e-9, "case {case}: {err}");
        assert!((site.weights().total() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn spacetime_reconstruction() {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    for case in 0..50 {
        let n = rng.gen_range(1..=4);
        let aging = if rng.gen_bool(0.5) {
            AgingFunction::Exponential {
                scale: rng.gen_range(0.2..1.0),
                rate: rng.gen_range(0.5..3.0),
            }
        } else {
            AgingFunction::FiniteSupport {
                support: rng.gen_range(1..=3),
            }
        };
        let signed = rng.gen_bool(0.3);
        let spec = presets::random_model(&mut rng, n, aging, signed).unwrap();
        let i = rng.gen_range(0..n);
        let x: HashSet<(usize, i64)> = (0..n)
            .flat_map(|j| (-400..T).map(move |s| (j, s)))
            .filter(|_| rng.gen_bool(0.5))
            .collect();
        let x_f = |j: usize, s: i64| x.contains(&(j, s));
        let dec = SpacetimeDecomposition::new(&spec, i, Mode::Auto).unwrap();
        let err = dec.reconstruction_error(T, &x_f, 400).unwrap();
        assert!(err < 1e-9, "case {case}: {err}");
        assert!((dec.weights().total() - 1.0).abs() < 1e-12);
    }
}
