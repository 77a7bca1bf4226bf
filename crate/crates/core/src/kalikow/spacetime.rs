//! Unconditional decomposition for age-independent rates and summable aging.
//!
//! Range `k ≥ 1` looks at the block `V_i(k) × [t-k-1, t-1]`, range 0 at
//! `x_{t-1}(i)` only, and range -1 at nothing. The weights do not depend on `t`.

use super::{mixture_kernel, Exactness, KalikowWeights, Mode, RESIDUAL_TOLERANCE};
use crate::error::{Error, Result};
use crate::field::History;
use crate::model::ModelSpec;

/// Number of ranges examined before giving up on reaching full mass.
pub const MAX_RANGES: i64 = 10_000;

#[derive(Clone, Debug)]
pub struct SpacetimeDecomposition<'a> {
    spec: &'a ModelSpec,
    neuron: usize,
    /// `‖g_j‖₁` per presynaptic neuron.
    norms: Vec<f64>,
    levels: Vec<i64>,
    weights: KalikowWeights,
}

impl<'a> SpacetimeDecomposition<'a> {
    pub fn new(spec: &'a ModelSpec, neuron: usize, mode: Mode) -> Result<Self> {
        if spec.phi(neuron).depends_on_age() {
            return Err(Error::RegimeMismatch(format!(
                "rate of neuron {neuron} depends on age"
            )));
        }
        let inputs = spec.inputs(neuron);
        let attractive = inputs.iter().all(|&(_, w)| w >= 0.0);
        let exactness = match mode {
            Mode::Exact if !attractive => return Err(Error::NotAttractive { neuron }),
            Mode::Exact => Exactness::ExactAttractive,
            Mode::Auto if attractive => Exactness::ExactAttractive,
            _ => Exactness::Dominated,
        };
        let mut norms = Vec::with_capacity(inputs.len());
        let mut levels = Vec::with_capacity(inputs.len());
        for &(j, _) in inputs {
            norms.push(spec.aging(j).total().ok_or_else(|| {
                Error::RegimeMismatch(format!("aging of neuron {j} is not summable"))
            })?);
            levels.push(spec.shells(neuron).level(j).expect("presynaptic neuron has a shell"));
        }
        let mut out = Self {
            spec,
            neuron,
            norms,
            levels,
            weights: KalikowWeights::from_alpha(vec![1.0], (0.0, 0.0), exactness),
        };
        out.weights = out.compute_weights(exactness)?;
        Ok(out)
    }

    pub fn neuron(&self) -> usize {
        self.neuron
    }

    pub fn weights(&self) -> &KalikowWeights {
        &self.weights
    }

    fn phi(&self, s: f64) -> f64 {
        self.spec.rate(self.neuron, s, 1)
    }

    /// Largest possible unobserved input magnitude at range `k ≥ 0`:
    /// `Σ_{j ∈ V(k)} |W| Σ_{n ≥ k+2} g_j(n) + Σ_{j ∉ V(k)} |W| ‖g_j‖₁`.
    fn unobserved(&self, k: i64, signed: bool) -> f64 {
        self.spec
            .inputs(self.neuron)
            .iter()
            .enumerate()
            .map(|(p, &(j, w))| {
                let w = if signed { w } else { w.abs() };
                if self.levels[p] <= k {
                    w * self.spec.aging(j).tail(k as u64 + 2).unwrap_or(0.0)
                } else {
                    w * self.norms[p]
                }
            })
            .sum()
    }

    fn compute_weights(&self, exactness: Exactness) -> Result<KalikowWeights> {
        let (mut lo, mut hi) = (0.0, 0.0);
        for (p, &(_, w)) in self.spec.inputs(self.neuron).iter().enumerate() {
            if w < 0.0 {
                lo += w * self.norms[p];
            } else {
                hi += w * self.norms[p];
            }
        }
        let r_minus1 = (self.phi(lo), 1.0 - self.phi(hi));
        let base = self.phi(0.0);
        let lip = self.spec.phi(self.neuron).lipschitz();
        let mut alpha = vec![r_minus1.0 + r_minus1.1];
        let mut k = 0;
        loop {
            let a = match exactness {
                // The spread φ(a + D) - φ(a) over the block is largest at a = 0.
                Exactness::ExactAttractive => 1.0 - (self.phi(self.unobserved(k, true)) - base),
                Exactness::Dominated => 1.0 - (lip * self.unobserved(k, false)).min(1.0),
            };
            alpha.push(a.max(*alpha.last().unwrap()));
            if a >= 1.0 {
                break;
            }
            if k >= MAX_RANGES {
                let residual = 1.0 - a;
                if residual > RESIDUAL_TOLERANCE {
                    return Err(Error::ResidualMassTooLarge { k_max: k, residual });
                }
                break;
            }
            k += 1;
        }
        Ok(KalikowWeights::from_alpha(alpha, r_minus1, exactness))
    }

    /// `(r^[l](1|x), r^[l](0|x))` at time `t` for `l = 0..=k`. Reads `x` only
    /// on `V_i(k) × [t-k-1, t-1]`.
    pub fn r_pairs(&self, t: i64, k: i64, x: &(impl History + ?Sized)) -> Vec<(f64, f64)> {
        let inputs = self.spec.inputs(self.neuron);
        let mut out = Vec::with_capacity(k as usize + 1);
        for l in 0..=k {
            let first = t - l - 1;
            let last_spike = (first..t).rev().find(|&s| x.spike(self.neuron, s));
            let (mut inside, mut lo, mut hi) = (0.0, 0.0, 0.0);
            for (p, &(j, w)) in inputs.iter().enumerate() {
                let g = self.spec.aging(j);
                if self.levels[p] <= l {
                    let start = last_spike.unwrap_or(first);
                    let seen: f64 = (start..t)
                        .filter(|&s| x.spike(j, s))
                        .map(|s| g.eval((t - s) as u64))
                        .sum();
                    inside += w * seen;
                    if last_spike.is_none() {
                        let tail = w * g.tail(l as u64 + 2).unwrap_or(0.0);
                        if w < 0.0 {
                            lo += tail;
                        } else {
                            hi += tail;
                        }
                    }
                } else {
                    let span = match last_spike {
                        Some(ls) => w * g.cumulative((t - ls) as u64),
                        None => w * self.norms[p],
                    };
                    if w < 0.0 {
                        lo += span;
                    } else {
                        hi += span;
                    }
                }
            }
            out.push((self.phi(inside + lo), 1.0 - self.phi(inside + hi)));
        }
        out
    }

    /// `(p^[k](1|x), p^[k](0|x))` at time `t`.
    pub fn kernel(&self, t: i64, k: i64, x: &(impl History + ?Sized)) -> Result<(f64, f64)> {
        if self.weights.lambda(k) <= 0.0 {
            return Err(Error::ZeroMass { k });
        }
        if k < 0 {
            return Ok(self.weights.minus1_kernel());
        }
        mixture_kernel(&self.weights, k, &self.r_pairs(t, k, x))
    }

    /// Direct `p(1|x)` at time `t`, with the last spike of the neuron found
    /// within `lookback` steps.
    pub fn transition(&self, t: i64, x: &(impl History + ?Sized), lookback: u64) -> Result<f64> {
        let last = (t - lookback as i64..t)
            .rev()
            .find(|&s| x.spike(self.neuron, s))
            .ok_or_else(|| {
                Error::InvalidContext(format!(
                    "neuron {} has no spike in the {lookback} steps before {t}",
                    self.neuron
                ))
            })?;
        let s: f64 = self
            .spec
            .inputs(self.neuron)
            .iter()
            .map(|&(j, w)| {
                let g = self.spec.aging(j);
                w * (last..t)
                    .filter(|&s| x.spike(j, s))
                    .map(|s| g.eval((t - s) as u64))
                    .sum::<f64>()
            })
            .sum();
        Ok(self.phi(s))
    }

    /// `max_a |Σ_k λ(k) p^[k](a|x) - p(a|x)|` at time `t`.
    pub fn reconstruction_error(&self, t: i64, x: &(impl History + ?Sized), lookback: u64) -> Result<f64> {
        let w = &self.weights;
        let (m1, m0) = w.minus1_kernel();
        let mut mix1 = w.lambda(-1) * m1;
        let mut mix0 = w.lambda(-1) * m0;
        let pairs = self.r_pairs(t, w.k_max().max(0), x);
        for k in 0..=w.k_max() {
            if w.lambda(k) > 0.0 {
                let (p1, p0) = mixture_kernel(w, k, &pairs)?;
                mix1 += w.lambda(k) * p1;
                mix0 += w.lambda(k) * p0;
            }
        }
        let direct = self.transition(t, x, lookback)?;
        Ok((mix1 - direct).abs().max((mix0 - (1.0 - direct)).abs()))
    }
}

/// `λ_i(k)` of the space-time decomposition (exact for attractive models,
/// dominated otherwise).
pub fn lambda_spacetime(spec: &ModelSpec, i: usize, k: i64) -> Result<(f64, Exactness)> {
    let dec = SpacetimeDecomposition::new(spec, i, Mode::Auto)?;
    Ok((dec.weights().lambda(k), dec.weights().exactness()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AgingFunction, NeighborhoodRule, RateFunction};

    #[test]
    fn independent_neuron_has_all_mass_at_minus_one() {
        let spec = ModelSpec::new(
            1,
            vec![],
            vec![RateFunction::saturated_linear(0.3, 0.0)],
            vec![AgingFunction::Exponential { scale: 1.0, rate: 1.0 }],
            0.0,
            1.0,
            NeighborhoodRule::ByWeight,
        )
        .unwrap();
        let (lam, flag) = lambda_spacetime(&spec, 0, -1).unwrap();
        assert_eq!(lam, 1.0);
        assert_eq!(flag, Exactness::ExactAttractive);
    }

    #[test]
    fn range_zero_bound() {
        // γ Σ_j |W| ‖g‖₁ = 0.1 · 0.4.
        let spec = ModelSpec::new(
            2,
            vec![(1, 0, 0.4)],
            vec![RateFunction::saturated_linear(0.0, 0.1); 2],
            vec![AgingFunction::FiniteSupport { support: 1 }; 2],
            0.0,
            0.1,
            NeighborhoodRule::ByWeight,
        )
        .unwrap();
        let dec = SpacetimeDecomposition::new(&spec, 0, Mode::Auto).unwrap();
        let w = dec.weights();
        assert!((1.0 - w.lambda(-1) - 0.04).abs() < 1e-15);
        assert!(w.lambda(0) <= 0.04);
        assert!((w.total() - 1.0).abs() < 1e-12);
        let x = |j: usize, s: i64| (j as i64 + s).rem_euclid(2) == 0;
        assert!(dec.reconstruction_error(10, &x, 50).unwrap() < 1e-12);
    }

    #[test]
    fn refuses_age_dependent_rates() {
        let spec = ModelSpec::new(
            1,
            vec![],
            vec![RateFunction::saturated_linear(0.3, 0.0).with_age_recovery(0.5)],
            vec![AgingFunction::FiniteSupport { support: 1 }],
            0.3,
            1.0,
            NeighborhoodRule::ByWeight,
        )
        .unwrap();
        assert!(matches!(
            SpacetimeDecomposition::new(&spec, 0, Mode::Auto),
            Err(Error::RegimeMismatch(_))
        ));
    }
}
