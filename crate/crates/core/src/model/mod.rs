//! Model description: weights, rate functions, aging functions and the
//! per-neuron growing neighborhoods, plus the analytic constants that decide
//! which sampler applies.

mod aging;
pub mod constants;
mod phi;
pub mod presets;
mod validate;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use aging::AgingFunction;
pub use constants::{
    c_gamma, delta_star, e_delta, g_cumulative, mgf_rho, mgf_rho_exponential, reproduction_mean,
    reproduction_mean_bound, summability_sup, DeltaStar, DeltaStarKind, MgfRho, ReproductionMean,
    ReproductionSource,
};
pub use phi::{RateFunction, RateShape};
pub use validate::{validate_model, Regime, ValidationReport};

/// How the growing sequence `V_i(k)` is built.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NeighborhoodRule {
    /// One in-neighbor per shell, by decreasing `|W|` (ties by index).
    #[default]
    ByWeight,
    /// `V_i(1)` already holds every in-neighbor.
    AllAtOnce,
    /// `shells[i][k-1]` lists the neurons added at range `k`.
    Explicit { shells: Vec<Vec<Vec<usize>>> },
}

/// The neighborhoods `V_i(k)` of one neuron.
///
/// `V_i(-1) = ∅`, `V_i(0) = {i}`, and shell `k ≥ 1` adds `order[bounds[k-2]..bounds[k-1]]`
/// (with `bounds[-1] = 0`). After `saturation()` shells the set is constant.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Shells {
    order: Vec<usize>,
    bounds: Vec<usize>,
    /// `residual[k] = Σ_{j ∉ V_i(k)} |W_{j→i}|` for `k = 0..=saturation`.
    residual: Vec<f64>,
    /// Range at which each neuron enters, `u32::MAX` if never.
    #[serde(skip)]
    level: Vec<u32>,
}

impl Shells {
    /// Number of shells; `V_i(k)` is complete for `k ≥ saturation()`.
    pub fn saturation(&self) -> i64 {
        self.bounds.len() as i64
    }

    /// `|V_i(k)|`.
    pub fn size(&self, k: i64) -> usize {
        match k {
            k if k < 0 => 0,
            0 => 1,
            k => 1 + self.bounds[(k as usize).min(self.bounds.len()) - 1],
        }
    }

    /// Neighbors other than `i` in `V_i(k)`, in order of entry.
    pub fn others(&self, k: i64) -> &[usize] {
        if k <= 0 {
            &[]
        } else {
            &self.order[..self.bounds[(k as usize).min(self.bounds.len()) - 1]]
        }
    }

    /// Neurons added at exactly range `k ≥ 1`.
    pub fn shell(&self, k: i64) -> &[usize] {
        if k <= 0 || k as usize > self.bounds.len() {
            return &[];
        }
        let hi = self.bounds[k as usize - 1];
        let lo = if k == 1 { 0 } else { self.bounds[k as usize - 2] };
        &self.order[lo..hi]
    }

    /// Smallest `k` with `j ∈ V_i(k)`, or `None` if `j` never enters.
    pub fn level(&self, j: usize) -> Option<i64> {
        match self.level.get(j) {
            Some(&l) if l != u32::MAX => Some(l as i64),
            _ => None,
        }
    }

    pub fn contains(&self, k: i64, j: usize) -> bool {
        self.level(j).is_some_and(|l| l <= k)
    }

    /// `Σ_{j ∉ V_i(k)} |W_{j→i}|`; equals the full in-weight for `k = -1`.
    pub fn residual(&self, k: i64) -> f64 {
        if k < 0 {
            self.residual[0]
        } else {
            self.residual[(k as usize).min(self.residual.len() - 1)]
        }
    }
}

/// A finite system of interacting spiking chains.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelSpec {
    neuron_count: usize,
    /// Incoming edges per target neuron, sorted by source: `(j, W_{j→i})`.
    inputs: Vec<Vec<(usize, f64)>>,
    phi: Vec<RateFunction>,
    aging: Vec<AgingFunction>,
    delta: f64,
    gamma: f64,
    rule: NeighborhoodRule,
    neighborhoods: Vec<Shells>,
    #[serde(skip_serializing_if = "Option::is_none")]
    age_cap: Option<u64>,
}

impl ModelSpec {
    /// Build and check a model. `edges` are `(source, target, weight)`;
    /// zero weights are dropped.
    ///
    /// `delta = 0` declares no spontaneous floor (only the summable-memory
    /// sampler applies).
    pub fn new(
        neuron_count: usize,
        edges: impl IntoIterator<Item = (usize, usize, f64)>,
        phi: Vec<RateFunction>,
        aging: Vec<AgingFunction>,
        delta: f64,
        gamma: f64,
        rule: NeighborhoodRule,
    ) -> Result<Self> {
        if neuron_count == 0 {
            return Err(Error::malformed("neuron_count must be positive"));
        }
        if phi.len() != neuron_count || aging.len() != neuron_count {
            return Err(Error::malformed(format!(
                "expected {neuron_count} rate and aging functions, got {} and {}",
                phi.len(),
                aging.len()
            )));
        }
        if !(delta.is_finite() && (0.0..=1.0).contains(&delta)) {
            return Err(Error::malformed(format!("delta {delta} outside [0, 1]")));
        }
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::malformed(format!("gamma {gamma} must be positive")));
        }
        for (i, p) in phi.iter().enumerate() {
            p.check()?;
            if p.floor() < delta {
                return Err(Error::malformed(format!(
                    "neuron {i}: rate floor {} is below delta {delta}",
                    p.floor()
                )));
            }
            if p.lipschitz() > gamma * (1.0 + 1e-12) {
                return Err(Error::malformed(format!(
                    "neuron {i}: rate slope {} exceeds gamma {gamma}",
                    p.lipschitz()
                )));
            }
        }
        for g in &aging {
            g.check()?;
        }
        let mut inputs = vec![Vec::new(); neuron_count];
        for (src, dst, w) in edges {
            if src >= neuron_count || dst >= neuron_count {
                return Err(Error::malformed(format!("edge {src}->{dst} out of range")));
            }
            if !w.is_finite() {
                return Err(Error::malformed(format!("weight {src}->{dst} is not finite")));
            }
            if w == 0.0 {
                continue;
            }
            if src == dst {
                return Err(Error::malformed(format!("self-weight on neuron {src} must be zero")));
            }
            inputs[dst].push((src, w));
        }
        for (i, list) in inputs.iter_mut().enumerate() {
            list.sort_by_key(|&(j, _)| j);
            if list.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(Error::malformed(format!("duplicate edge into neuron {i}")));
            }
        }
        let neighborhoods = (0..neuron_count)
            .map(|i| build_shells(i, neuron_count, &inputs[i], &rule))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            neuron_count,
            inputs,
            phi,
            aging,
            delta,
            gamma,
            rule,
            neighborhoods,
            age_cap: None,
        })
    }

    /// Declare a cap on the look-back used by forward simulation with
    /// infinite-support aging.
    pub fn with_age_cap(mut self, cap: u64) -> Self {
        self.age_cap = Some(cap.max(1));
        self
    }

    /// Same model with spontaneous rate `delta`; every rate-function floor is
    /// set to `delta` as well.
    pub fn with_floor(&self, delta: f64) -> Result<Self> {
        let phi = self
            .phi
            .iter()
            .map(|p| {
                let mut p = p.clone();
                match &mut p.shape {
                    RateShape::SaturatedLinear { floor, .. } | RateShape::SigmoidFloor { floor } => {
                        *floor = delta
                    }
                }
                p
            })
            .collect();
        let edges = self.edges().collect::<Vec<_>>();
        let mut out = Self::new(
            self.neuron_count,
            edges,
            phi,
            self.aging.clone(),
            delta,
            self.gamma,
            self.rule.clone(),
        )?;
        out.age_cap = self.age_cap;
        Ok(out)
    }

    pub fn neuron_count(&self) -> usize {
        self.neuron_count
    }

    /// Incoming `(source, weight)` pairs of neuron `i`, sorted by source.
    pub fn inputs(&self, i: usize) -> &[(usize, f64)] {
        &self.inputs[i]
    }

    /// All `(source, target, weight)` triples.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.inputs
            .iter()
            .enumerate()
            .flat_map(|(i, list)| list.iter().map(move |&(j, w)| (j, i, w)))
    }

    /// `W_{src→dst}`.
    pub fn weight(&self, src: usize, dst: usize) -> f64 {
        let list = &self.inputs[dst];
        list.binary_search_by_key(&src, |&(j, _)| j)
            .map(|pos| list[pos].1)
            .unwrap_or(0.0)
    }

    pub fn phi(&self, i: usize) -> &RateFunction {
        &self.phi[i]
    }

    pub fn aging(&self, j: usize) -> &AgingFunction {
        &self.aging[j]
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn rule(&self) -> &NeighborhoodRule {
        &self.rule
    }

    pub fn shells(&self, i: usize) -> &Shells {
        &self.neighborhoods[i]
    }

    pub fn age_cap(&self) -> Option<u64> {
        self.age_cap
    }

    pub fn is_attractive(&self) -> bool {
        self.inputs.iter().flatten().all(|&(_, w)| w >= 0.0)
    }

    pub fn is_age_independent(&self) -> bool {
        self.phi.iter().all(|p| !p.depends_on_age())
    }

    pub fn has_interactions(&self) -> bool {
        self.inputs.iter().any(|l| !l.is_empty())
    }

    /// Longest aging support over all neurons, if every support is finite.
    pub fn max_support(&self) -> Option<u64> {
        self.aging
            .iter()
            .try_fold(0u64, |acc, g| g.support().map(|s| acc.max(s)))
    }

    /// Probability that neuron `i` spikes given weighted input `s` and age `n`.
    #[inline]
    pub fn rate(&self, i: usize, s: f64, age: u64) -> f64 {
        self.phi[i].eval(s, age)
    }

    /// Content hash of the canonical serialized form.
    pub fn spec_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("model serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

fn build_shells(
    i: usize,
    n: usize,
    inputs: &[(usize, f64)],
    rule: &NeighborhoodRule,
) -> Result<Shells> {
    let (order, bounds) = match rule {
        NeighborhoodRule::ByWeight => {
            let mut by_weight: Vec<(usize, f64)> = inputs.to_vec();
            by_weight.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then(a.0.cmp(&b.0)));
            let order: Vec<usize> = by_weight.iter().map(|&(j, _)| j).collect();
            let bounds = (1..=order.len()).collect();
            (order, bounds)
        }
        NeighborhoodRule::AllAtOnce => {
            let order: Vec<usize> = inputs.iter().map(|&(j, _)| j).collect();
            let bounds = if order.is_empty() { vec![] } else { vec![order.len()] };
            (order, bounds)
        }
        NeighborhoodRule::Explicit { shells } => {
            let mine = shells.get(i).ok_or_else(|| {
                Error::malformed(format!("explicit neighborhoods missing for neuron {i}"))
            })?;
            let mut order = Vec::new();
            let mut bounds = Vec::new();
            for shell in mine {
                if shell.is_empty() {
                    return Err(Error::malformed(format!(
                        "neuron {i}: neighborhood shells must grow strictly"
                    )));
                }
                order.extend_from_slice(shell);
                bounds.push(order.len());
            }
            (order, bounds)
        }
    };
    let mut level = vec![u32::MAX; n];
    level[i] = 0;
    let mut shell_of = 1u32;
    let mut next_bound = bounds.iter().copied();
    let mut bound = next_bound.next();
    for (pos, &j) in order.iter().enumerate() {
        while bound.is_some_and(|b| pos >= b) {
            bound = next_bound.next();
            shell_of += 1;
        }
        if j >= n || j == i || level[j] != u32::MAX {
            return Err(Error::malformed(format!(
                "neuron {i}: neighbor {j} repeated, out of range, or equal to the neuron"
            )));
        }
        if inputs.binary_search_by_key(&j, |&(s, _)| s).is_err() {
            return Err(Error::malformed(format!(
                "neuron {i}: neighbor {j} has no synaptic weight onto it"
            )));
        }
        level[j] = shell_of;
    }
    if order.len() != inputs.len() {
        return Err(Error::malformed(format!(
            "neuron {i}: neighborhoods do not cover every presynaptic neuron"
        )));
    }
    // Suffix sums over shells, so the saturated residual is exactly zero.
    let abs_weight = |j: usize| inputs[inputs.binary_search_by_key(&j, |&(s, _)| s).unwrap()].1.abs();
    let mut residual = vec![0.0; bounds.len() + 1];
    for k in (0..bounds.len()).rev() {
        let lo = if k == 0 { 0 } else { bounds[k - 1] };
        let shell: f64 = order[lo..bounds[k]].iter().map(|&j| abs_weight(j)).sum();
        residual[k] = residual[k + 1] + shell;
    }
    Ok(Shells {
        order,
        bounds,
        residual,
        level,
    })
}
