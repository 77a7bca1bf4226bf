//! Ready-made models used by the tests, the experiments and the CLI.

use rand::Rng;

use super::{AgingFunction, ModelSpec, NeighborhoodRule, RateFunction};
use crate::error::Result;

/// `n` neurons without interactions, each spiking with probability `delta`.
pub fn independent(n: usize, delta: f64) -> Result<ModelSpec> {
    ModelSpec::new(
        n,
        vec![],
        vec![RateFunction::saturated_linear(delta, 0.0); n],
        vec![AgingFunction::ConstantOne; n],
        delta,
        1.0,
        NeighborhoodRule::ByWeight,
    )
}

/// Two mutually excitatory neurons that only remember the previous step:
/// `p(1|x) = min(1, δ + γ w x_{t-1}(other))`. The pair is a Markov chain on
/// four states.
pub fn two_neuron(delta: f64, gamma: f64, weight: f64) -> Result<ModelSpec> {
    ModelSpec::new(
        2,
        vec![(0, 1, weight), (1, 0, weight)],
        vec![RateFunction::saturated_linear(delta, gamma); 2],
        vec![AgingFunction::FiniteSupport { support: 1 }; 2],
        delta,
        gamma,
        NeighborhoodRule::ByWeight,
    )
}

/// The default two-neuron model of the experiments.
pub fn two_neuron_default() -> ModelSpec {
    two_neuron(0.7, 0.25, 0.25).expect("preset parameters are valid")
}

/// Every ordered pair connected with weight `weight`.
pub fn all_to_all(
    n: usize,
    weight: f64,
    phi: RateFunction,
    aging: AgingFunction,
    delta: f64,
    gamma: f64,
) -> Result<ModelSpec> {
    let edges = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (j, i, weight)))
        .collect::<Vec<_>>();
    ModelSpec::new(
        n,
        edges,
        vec![phi; n],
        vec![aging; n],
        delta,
        gamma,
        NeighborhoodRule::ByWeight,
    )
}

/// Random model on `n` neurons for property checks. Each ordered pair is
/// connected with probability 1/2; weights are uniform on `(0, 1]`, or on
/// `[-1, 1]` when `signed`. Rates are saturated-linear or sigmoid with a
/// floor drawn from `[0.1, 0.9]`.
pub fn random_model<R: Rng + ?Sized>(rng: &mut R, n: usize, aging: AgingFunction, signed: bool) -> Result<ModelSpec> {
    let delta = rng.gen_range(0.1..=0.9);
    let phi = if rng.gen_bool(0.5) {
        RateFunction::saturated_linear(delta, rng.gen_range(0.05..=0.5))
    } else {
        RateFunction::sigmoid_floor(delta)
    };
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.gen_bool(0.5) {
                let w = if signed {
                    rng.gen_range(-1.0..=1.0)
                } else {
                    1.0 - rng.gen::<f64>()
                };
                edges.push((j, i, w));
            }
        }
    }
    let gamma = phi.lipschitz();
    ModelSpec::new(n, edges, vec![phi; n], vec![aging; n], delta, gamma, NeighborhoodRule::ByWeight)
}

/// Finite window `{-r, …, r}^d` of the lattice model with
/// `W_{j→i} = ‖j - i‖₁^{-(2d + α)}`, `g ≡ 1`, and `V_i(k)` the `ℓ¹`-ball of
/// radius `k` around `i`.
///
/// Neurons near the boundary miss the weight of the lattice points outside
/// the window; `boundary_deficit` reports the largest such loss.
#[derive(Clone, Debug)]
pub struct LatticeWindow {
    pub spec: ModelSpec,
    pub dimension: u32,
    pub radius: i64,
    pub alpha: f64,
    /// `sup_i (Σ_{j ∈ Z^d} W_{j→i} - Σ_{j in window} W_{j→i})`.
    pub boundary_deficit: f64,
}

impl LatticeWindow {
    pub fn site(&self, index: usize) -> Vec<i64> {
        let side = (2 * self.radius + 1) as usize;
        let mut rest = index;
        (0..self.dimension)
            .map(|_| {
                let c = (rest % side) as i64 - self.radius;
                rest /= side;
                c
            })
            .collect()
    }

    /// Partial sums of `Σ_{k≥1} |V_i(k)| Σ_{j ∉ V_i(k-1)} W_{j→i}` for neuron `i`.
    pub fn neighborhood_partial_sums(&self, i: usize) -> Vec<f64> {
        let v = self.spec.shells(i);
        let mut acc = 0.0;
        (1..=v.saturation())
            .map(|k| {
                acc += v.size(k) as f64 * v.residual(k - 1);
                acc
            })
            .collect()
    }

    /// The same sum on the whole lattice, where `|V(k)|` is the size of the
    /// `ℓ¹`-ball and the residual is `Σ_{l≥k} |sphere(l)| l^{-(2d+α)}`;
    /// bounds every window's partial sums.
    pub fn lattice_majorant(&self) -> f64 {
        lattice_neighborhood_sum(self.dimension, self.alpha)
    }
}

/// Number of points at `ℓ¹` distance exactly `l ≥ 1` from the origin of `Z^d`.
pub fn sphere_count(d: u32, l: u64) -> f64 {
    // Σ_m 2^m C(d, m) C(l-1, m-1): choose m nonzero coordinates, their signs,
    // and a composition of l into m positive parts.
    (1..=d.min(l as u32) as u64)
        .map(|m| 2f64.powi(m as i32) * binomial(d as u64, m) * binomial(l - 1, m - 1))
        .sum()
}

/// Number of points at `ℓ¹` distance at most `l` from the origin.
pub fn ball_count(d: u32, l: u64) -> f64 {
    1.0 + (1..=l).map(|r| sphere_count(d, r)).sum::<f64>()
}

fn binomial(n: u64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn lattice_neighborhood_sum(d: u32, alpha: f64) -> f64 {
    let s = 2.0 * d as f64 + alpha;
    // Residual mass beyond the sphere of radius L ≲ C L^{d-1-s}; sum far enough
    // that both tails are negligible for α > 1.
    const HORIZON: u64 = 20_000;
    let shell: Vec<f64> = (1..=HORIZON)
        .map(|l| sphere_count(d, l) * (l as f64).powf(-s))
        .collect();
    let mut residual: f64 = shell.iter().rev().sum();
    let mut total = 0.0;
    for k in 1..=HORIZON {
        total += ball_count_fast(d, k) * residual;
        residual -= shell[k as usize - 1];
        if residual <= 0.0 {
            break;
        }
    }
    total
}

fn ball_count_fast(d: u32, k: u64) -> f64 {
    // Σ_m 2^m C(d, m) C(k, m).
    (0..=d as u64)
        .map(|m| 2f64.powi(m as i32) * binomial(d as u64, m) * binomial(k, m))
        .sum()
}

/// Lattice window preset with `φ = min(1, δ + γ max(s, 0))`.
pub fn lattice_window(dimension: u32, radius: i64, alpha: f64, delta: f64, gamma: f64) -> Result<LatticeWindow> {
    let side = (2 * radius + 1) as usize;
    let n = side.pow(dimension);
    let coords: Vec<Vec<i64>> = (0..n)
        .map(|idx| {
            let mut rest = idx;
            (0..dimension)
                .map(|_| {
                    let c = (rest % side) as i64 - radius;
                    rest /= side;
                    c
                })
                .collect()
        })
        .collect();
    let dist = |a: &[i64], b: &[i64]| a.iter().zip(b).map(|(x, y)| (x - y).unsigned_abs()).sum::<u64>();
    let power = 2.0 * dimension as f64 + alpha;
    let mut edges = Vec::new();
    let mut shells = Vec::with_capacity(n);
    let mut deficit = 0.0f64;
    let full_mass: f64 = (1..=20_000u64)
        .map(|l| sphere_count(dimension, l) * (l as f64).powf(-power))
        .sum();
    for i in 0..n {
        let mut by_distance: Vec<Vec<usize>> = Vec::new();
        let mut mass = 0.0;
        for j in 0..n {
            if j == i {
                continue;
            }
            let l = dist(&coords[i], &coords[j]);
            let w = (l as f64).powf(-power);
            edges.push((j, i, w));
            mass += w;
            if by_distance.len() < l as usize {
                by_distance.resize(l as usize, Vec::new());
            }
            by_distance[l as usize - 1].push(j);
        }
        deficit = deficit.max(full_mass - mass);
        shells.push(by_distance);
    }
    let spec = ModelSpec::new(
        n,
        edges,
        vec![RateFunction::saturated_linear(delta, gamma); n],
        vec![AgingFunction::ConstantOne; n],
        delta,
        gamma,
        NeighborhoodRule::Explicit { shells },
    )?;
    Ok(LatticeWindow {
        spec,
        dimension,
        radius,
        alpha,
        boundary_deficit: deficit.max(0.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_counts() {
        assert_eq!(sphere_count(1, 3), 2.0);
        assert_eq!(sphere_count(2, 3), 12.0);
        assert_eq!(ball_count(2, 2), 13.0);
        assert_eq!(ball_count_fast(2, 2), 13.0);
        assert_eq!(ball_count_fast(3, 4), ball_count(3, 4));
    }

    #[test]
    fn lattice_window_partial_sums_are_bounded() {
        let lw = lattice_window(2, 2, 1.5, 0.5, 0.01).unwrap();
        assert_eq!(lw.spec.neuron_count(), 25);
        let majorant = lw.lattice_majorant();
        for i in 0..25 {
            let sums = lw.neighborhood_partial_sums(i);
            assert!(sums.windows(2).all(|w| w[1] >= w[0]));
            assert!(*sums.last().unwrap() <= majorant);
        }
        // The center sees the full ball of radius 2.
        assert_eq!(lw.spec.shells(12).size(2), 13);
        assert!(lw.boundary_deficit > 0.0);
    }

    #[test]
    fn two_neuron_is_markov_shaped() {
        let m = two_neuron_default();
        assert_eq!(m.max_support(), Some(1));
        assert_eq!(m.weight(0, 1), 0.25);
        assert!(m.is_attractive());
    }
}
