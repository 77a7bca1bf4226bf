//! Kalikow-type convex decompositions of the transition kernel.
//!
//! [`SiteDecomposition`] decomposes the kernel of one site-time `(i, t)`
//! conditionally on the spontaneous field on `[R, t-1]`, where `R` is the
//! last spontaneous spike of `i`. [`spacetime::SpacetimeDecomposition`] is
//! the unconditional variant for summable aging and age-independent rates.

pub mod spacetime;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::History;
use crate::model::ModelSpec;

/// Residual mass tolerated when the range sequence is cut early.
pub const RESIDUAL_TOLERANCE: f64 = 1e-9;

/// Which range weights to compute.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Exact weights when all weights are nonnegative, dominated otherwise.
    #[default]
    Auto,
    Exact,
    Dominated,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Exactness {
    /// `α(k) = inf_x α(k, x)` computed at the extremal configuration.
    ExactAttractive,
    /// `α(k)` replaced by a Lipschitz lower bound; still a valid
    /// decomposition, with more mass on long ranges.
    Dominated,
}

/// Range distribution `λ(k), k ≥ -1` of one site.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KalikowWeights {
    /// `alpha[k + 1] = α(k)`.
    alpha: Vec<f64>,
    /// `lambda[k + 1] = λ(k)`.
    lambda: Vec<f64>,
    r_minus1: (f64, f64),
    exactness: Exactness,
    residual: f64,
}

impl KalikowWeights {
    /// Build from cumulative masses `α(-1), α(0), …`; the sequence is made
    /// nondecreasing and cut after the first entry equal to 1.
    pub(crate) fn from_alpha(
        mut alpha: Vec<f64>,
        r_minus1: (f64, f64),
        exactness: Exactness,
    ) -> Self {
        for k in 1..alpha.len() {
            if alpha[k] < alpha[k - 1] {
                alpha[k] = alpha[k - 1];
            }
        }
        if let Some(first_one) = alpha.iter().position(|&a| a >= 1.0) {
            alpha.truncate(first_one + 1);
            alpha[first_one] = 1.0;
        }
        let lambda = alpha
            .iter()
            .enumerate()
            .map(|(k, &a)| if k == 0 { a } else { a - alpha[k - 1] })
            .collect();
        let residual = 1.0 - alpha.last().copied().unwrap_or(0.0);
        Self {
            alpha,
            lambda,
            r_minus1,
            exactness,
            residual,
        }
    }

    /// Largest range carried.
    pub fn k_max(&self) -> i64 {
        self.alpha.len() as i64 - 2
    }

    /// `α(k)`; 1 past `k_max` when the residual is zero.
    pub fn alpha(&self, k: i64) -> f64 {
        if k < -1 {
            0.0
        } else {
            self.alpha
                .get((k + 1) as usize)
                .copied()
                .unwrap_or(1.0 - self.residual)
        }
    }

    pub fn lambda(&self, k: i64) -> f64 {
        if k < -1 {
            0.0
        } else {
            self.lambda.get((k + 1) as usize).copied().unwrap_or(0.0)
        }
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambda
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alpha
    }

    pub fn r_minus1(&self) -> (f64, f64) {
        self.r_minus1
    }

    pub fn exactness(&self) -> Exactness {
        self.exactness
    }

    /// `1 - α(k_max)`.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn total(&self) -> f64 {
        self.lambda.iter().sum()
    }

    /// Range selected by a uniform `u ∈ [0, 1)`: the smallest `k` with `u < α(k)`.
    /// Values beyond the carried mass fall into the last range.
    pub fn range_for(&self, u: f64) -> i64 {
        let pos = self.alpha.partition_point(|&a| a <= u);
        pos.min(self.alpha.len() - 1) as i64 - 1
    }

    /// `p^[-1](1) = r^[-1](1) / λ(-1)`.
    pub fn minus1_kernel(&self) -> (f64, f64) {
        let lam = self.lambda(-1);
        if lam <= 0.0 {
            return (0.5, 0.5);
        }
        let p1 = (self.r_minus1.0 / lam).clamp(0.0, 1.0);
        (p1, 1.0 - p1)
    }
}

/// Finite-range kernel `p^[k](·|x)` by the interval-partition construction.
///
/// `r_pairs[l] = (r^[l](1|x), r^[l](0|x))` for `l = 0..=k`. The interval
/// `]α(k-1), α(k)]` is cut along the configuration-dependent masses
/// `α(l, x) = r^[l](1|x) + r^[l](0|x)`, and block `l` contributes
/// `Δ^[l](·|x) / λ̃(l, x)` in proportion to its overlap.
pub(crate) fn mixture_kernel(
    weights: &KalikowWeights,
    k: i64,
    r_pairs: &[(f64, f64)],
) -> Result<(f64, f64)> {
    let lo = weights.alpha(k - 1);
    let hi = weights.alpha(k);
    let lam = hi - lo;
    if k < 0 || lam <= 0.0 {
        return Err(Error::ZeroMass { k });
    }
    let mut prev_mass = weights.alpha(-1);
    let mut prev = weights.r_minus1();
    let mut acc1 = 0.0;
    let mut acc0 = 0.0;
    for (l, &(r1, r0)) in r_pairs.iter().take(k as usize + 1).enumerate() {
        // The level-k mass is at least α(k); absorb rounding below it.
        let mass = if l == k as usize { (r1 + r0).max(hi) } else { r1 + r0 };
        let overlap = mass.min(hi) - prev_mass.max(lo);
        if overlap > 0.0 {
            let block = mass - prev_mass;
            let tilde1 = if block > 0.0 {
                ((r1 - prev.0) / block).clamp(0.0, 1.0)
            } else {
                0.5
            };
            acc1 += overlap * tilde1;
            acc0 += overlap * (1.0 - tilde1);
        }
        if mass >= hi {
            break;
        }
        prev_mass = mass.max(prev_mass);
        prev = (r1, r0);
    }
    let total = acc1 + acc0;
    if total <= 0.0 {
        return Err(Error::ZeroMass { k });
    }
    let p1 = (acc1 / total).clamp(0.0, 1.0);
    Ok((p1, 1.0 - p1))
}

/// Spontaneous-field environment of one site-time.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SiteTimeContext {
    neuron: usize,
    time: i64,
    last_spontaneous: i64,
    /// `xi[p][d] = ξ_{t-1-d}(j_p)` for the `p`-th presynaptic neuron of `neuron`.
    xi: Vec<Vec<bool>>,
}

impl SiteTimeContext {
    /// Read the environment from a spontaneous field, scanning back at most
    /// `scan_cap` steps for the last spontaneous spike.
    pub fn from_field(
        spec: &ModelSpec,
        neuron: usize,
        time: i64,
        xi: &impl History,
        scan_cap: u64,
    ) -> Result<Self> {
        let mut s = time - 1;
        let mut steps = 0u64;
        while !xi.spike(neuron, s) {
            steps += 1;
            if steps >= scan_cap {
                return Err(Error::ScanCapExceeded {
                    neuron,
                    time,
                    cap: scan_cap,
                });
            }
            s -= 1;
        }
        Ok(Self::build(spec, neuron, time, s, xi))
    }

    /// Environment with a given last spontaneous spike `start < time`; the
    /// field must have a spike of `neuron` at `start` and none in `(start, time)`.
    pub fn new(
        spec: &ModelSpec,
        neuron: usize,
        time: i64,
        start: i64,
        xi: &impl History,
    ) -> Result<Self> {
        if neuron >= spec.neuron_count() || start >= time {
            return Err(Error::InvalidContext(format!(
                "neuron {neuron}, window [{start}, {time})"
            )));
        }
        if !xi.spike(neuron, start) || (start + 1..time).any(|s| xi.spike(neuron, s)) {
            return Err(Error::InvalidContext(format!(
                "{start} is not the last spontaneous spike of neuron {neuron} before {time}"
            )));
        }
        Ok(Self::build(spec, neuron, time, start, xi))
    }

    fn build(spec: &ModelSpec, neuron: usize, time: i64, start: i64, xi: &impl History) -> Self {
        let age = (time - start) as usize;
        let xi = spec
            .inputs(neuron)
            .iter()
            .map(|&(j, _)| (0..age).map(|d| xi.spike(j, time - 1 - d as i64)).collect())
            .collect();
        Self {
            neuron,
            time,
            last_spontaneous: start,
            xi,
        }
    }

    pub fn neuron(&self) -> usize {
        self.neuron
    }

    pub fn time(&self) -> i64 {
        self.time
    }

    /// `R`, the last spontaneous spike strictly before `time`.
    pub fn last_spontaneous(&self) -> i64 {
        self.last_spontaneous
    }

    /// `t - R`.
    pub fn age(&self) -> u64 {
        (self.time - self.last_spontaneous) as u64
    }

    /// Spontaneous spike of the `p`-th presynaptic neuron at `time - 1 - d`.
    pub fn xi_input(&self, p: usize, d: usize) -> bool {
        self.xi[p][d]
    }
}

/// Decomposition of the kernel at one site-time, conditional on its environment.
#[derive(Clone, Debug)]
pub struct SiteDecomposition<'a> {
    spec: &'a ModelSpec,
    ctx: SiteTimeContext,
    /// `xi_sum[p][d] = Σ_{s=L}^{t-1} g_j(t-s) ξ_s(j)` for `L = t-1-d`.
    xi_sum: Vec<Vec<f64>>,
    /// `full_sum[p][d] = Σ_{n=1}^{d+1} g_j(n)`.
    full_sum: Vec<Vec<f64>>,
    /// Shell at which each presynaptic neuron enters `V_i`.
    levels: Vec<i64>,
    weights: KalikowWeights,
}

impl<'a> SiteDecomposition<'a> {
    pub fn new(spec: &'a ModelSpec, ctx: SiteTimeContext, mode: Mode) -> Result<Self> {
        let i = ctx.neuron;
        let attractive = spec.inputs(i).iter().all(|&(_, w)| w >= 0.0);
        let exactness = match mode {
            Mode::Exact if !attractive => return Err(Error::NotAttractive { neuron: i }),
            Mode::Exact => Exactness::ExactAttractive,
            Mode::Auto if attractive => Exactness::ExactAttractive,
            _ => Exactness::Dominated,
        };
        let age = ctx.age() as usize;
        let shells = spec.shells(i);
        let mut xi_sum = Vec::with_capacity(spec.inputs(i).len());
        let mut full_sum = Vec::with_capacity(spec.inputs(i).len());
        let mut levels = Vec::with_capacity(spec.inputs(i).len());
        for (p, &(j, _)) in spec.inputs(i).iter().enumerate() {
            let g = spec.aging(j);
            let mut xs = Vec::with_capacity(age);
            let mut fs = Vec::with_capacity(age);
            let (mut x_acc, mut f_acc) = (0.0, 0.0);
            for d in 0..age {
                let gn = g.eval(d as u64 + 1);
                f_acc += gn;
                if ctx.xi[p][d] {
                    x_acc += gn;
                }
                xs.push(x_acc);
                fs.push(f_acc);
            }
            xi_sum.push(xs);
            full_sum.push(fs);
            levels.push(shells.level(j).expect("presynaptic neuron has a shell"));
        }
        let mut out = Self {
            spec,
            ctx,
            xi_sum,
            full_sum,
            levels,
            weights: KalikowWeights::from_alpha(vec![1.0], (0.0, 0.0), exactness),
        };
        out.weights = out.compute_weights(exactness);
        Ok(out)
    }

    pub fn context(&self) -> &SiteTimeContext {
        &self.ctx
    }

    pub fn weights(&self) -> &KalikowWeights {
        &self.weights
    }

    fn phi(&self, s: f64, age: usize) -> f64 {
        self.spec.rate(self.ctx.neuron, s, age as u64)
    }

    /// Inputs of `j_p` over `[L, t-1]` at the extremes compatible with ξ:
    /// `(minimal, maximal)` contribution to the weighted input.
    fn extremes(&self, p: usize, d: usize) -> (f64, f64) {
        let w = self.spec.inputs(self.ctx.neuron)[p].1;
        let (xi, full) = (self.xi_sum[p][d], self.full_sum[p][d]);
        if w >= 0.0 {
            (w * xi, w * full)
        } else {
            (w * full, w * xi)
        }
    }

    /// Suffix sums over shells: `out[k] = Σ_{p: level_p > k} f(p)` for
    /// `k = 0..=saturation`, exactly zero at saturation.
    fn outside_sums(&self, f: impl Fn(usize) -> f64) -> Vec<f64> {
        let sat = self.spec.shells(self.ctx.neuron).saturation() as usize;
        let mut per_shell = vec![0.0; sat + 1];
        for (p, &level) in self.levels.iter().enumerate() {
            per_shell[level as usize] += f(p);
        }
        let mut out = vec![0.0; sat + 1];
        for k in (0..sat).rev() {
            out[k] = out[k + 1] + per_shell[k + 1];
        }
        out
    }

    fn compute_weights(&self, exactness: Exactness) -> KalikowWeights {
        let age = self.ctx.age() as usize;
        let n_inputs = self.levels.len();
        let sat = self.spec.shells(self.ctx.neuron).saturation() as usize;

        let mut r1 = f64::INFINITY;
        let mut max_phi = f64::NEG_INFINITY;
        for d in 0..age {
            let (mut lo, mut hi) = (0.0, 0.0);
            for p in 0..n_inputs {
                let (a, b) = self.extremes(p, d);
                lo += a;
                hi += b;
            }
            r1 = r1.min(self.phi(lo, d + 1));
            max_phi = max_phi.max(self.phi(hi, d + 1));
        }
        let r_minus1 = (r1, 1.0 - max_phi);

        let mut alpha = Vec::with_capacity(sat + 2);
        alpha.push(r_minus1.0 + r_minus1.1);
        match exactness {
            Exactness::ExactAttractive => {
                // For fixed L, the spread φ(a + D_k(L)) - φ(a) is largest at the
                // smallest base a = Ξ(L), by concavity of φ on [0, ∞).
                let mut worst = vec![0.0f64; sat + 1];
                for d in 0..age {
                    let base: f64 = (0..n_inputs)
                        .map(|p| self.spec.inputs(self.ctx.neuron)[p].1 * self.xi_sum[p][d])
                        .sum();
                    let gap = self.outside_sums(|p| {
                        self.spec.inputs(self.ctx.neuron)[p].1
                            * (self.full_sum[p][d] - self.xi_sum[p][d])
                    });
                    let phi_base = self.phi(base, d + 1);
                    for k in 0..=sat {
                        let spread = self.phi(base + gap[k], d + 1) - phi_base;
                        worst[k] = worst[k].max(spread);
                    }
                }
                alpha.extend(worst.iter().map(|&w| 1.0 - w));
            }
            Exactness::Dominated => {
                let lip = self.spec.phi(self.ctx.neuron).lipschitz();
                let mut worst = vec![0.0f64; sat + 1];
                for d in 0..age {
                    let gap = self.outside_sums(|p| {
                        self.spec.inputs(self.ctx.neuron)[p].1.abs()
                            * (self.full_sum[p][d] - self.xi_sum[p][d])
                    });
                    for k in 0..=sat {
                        worst[k] = worst[k].max(gap[k]);
                    }
                }
                alpha.extend(worst.iter().map(|&w| 1.0 - (lip * w).min(1.0)));
            }
        }
        KalikowWeights::from_alpha(alpha, r_minus1, exactness)
    }

    /// `d = t - 1 - L` for the last spike `L` of `i` in `[R, t-1]` under `x`.
    fn last_spike_offset(&self, x: &(impl History + ?Sized)) -> usize {
        let age = self.ctx.age() as usize;
        (0..age - 1)
            .find(|&d| x.spike(self.ctx.neuron, self.ctx.time - 1 - d as i64))
            .unwrap_or(age - 1)
    }

    fn weighted_input(&self, p: usize, d: usize, x: &(impl History + ?Sized)) -> f64 {
        let (j, w) = self.spec.inputs(self.ctx.neuron)[p];
        let g = self.spec.aging(j);
        let mut acc = 0.0;
        for e in 0..=d {
            if x.spike(j, self.ctx.time - 1 - e as i64) {
                acc += g.eval(e as u64 + 1);
            }
        }
        w * acc
    }

    /// `(r^[l](1|x), r^[l](0|x))` for `l = 0..=k`. Reads `x` only on
    /// `V_i(k) × [L, t-1]`.
    pub fn r_pairs(&self, k: i64, x: &(impl History + ?Sized)) -> Vec<(f64, f64)> {
        assert!(k >= 0);
        let d = self.last_spike_offset(x);
        let out_lo = self.outside_sums(|p| self.extremes(p, d).0);
        let out_hi = self.outside_sums(|p| self.extremes(p, d).1);
        let sat = out_lo.len() - 1;
        let mut by_level: Vec<Vec<usize>> = vec![Vec::new(); sat + 1];
        for (p, &level) in self.levels.iter().enumerate() {
            by_level[level as usize].push(p);
        }
        let mut inside = 0.0;
        let mut out = Vec::with_capacity(k as usize + 1);
        for l in 0..=k as usize {
            if l <= sat {
                for &p in &by_level[l] {
                    inside += self.weighted_input(p, d, x);
                }
            }
            let l_sat = l.min(sat);
            out.push((
                self.phi(inside + out_lo[l_sat], d + 1),
                1.0 - self.phi(inside + out_hi[l_sat], d + 1),
            ));
        }
        out
    }

    /// `(r^[k](1|x), r^[k](0|x))`; `k = -1` gives the unconditional pair.
    pub fn r_bounds(&self, k: i64, x: &(impl History + ?Sized)) -> (f64, f64) {
        if k < 0 {
            self.weights.r_minus1()
        } else {
            *self.r_pairs(k, x).last().unwrap()
        }
    }

    /// `(p^[k](1|x), p^[k](0|x))`; `k = -1` gives `p^[-1]`.
    pub fn kernel(&self, k: i64, x: &(impl History + ?Sized)) -> Result<(f64, f64)> {
        if k < 0 {
            if self.weights.lambda(-1) <= 0.0 {
                return Err(Error::ZeroMass { k: -1 });
            }
            return Ok(self.weights.minus1_kernel());
        }
        if self.weights.lambda(k) <= 0.0 {
            return Err(Error::ZeroMass { k });
        }
        let pairs = self.r_pairs(k, x);
        mixture_kernel(&self.weights, k, &pairs)
    }

    /// `λ̄(k) = γ G(t - R) Σ_{j ∉ V_i(k-1)} |W_{j→i}|`, capped at 1.
    pub fn lambda_bar(&self, k: i64) -> f64 {
        lambda_bar(self.spec, &self.ctx, k)
    }

    /// Direct transition probability `p(1|x)`.
    pub fn transition(&self, x: &(impl History + ?Sized)) -> f64 {
        let d = self.last_spike_offset(x);
        let s: f64 = (0..self.levels.len())
            .map(|p| self.weighted_input(p, d, x))
            .sum();
        self.phi(s, d + 1)
    }

    /// `max_a |Σ_k λ(k) p^[k](a|x) - p(a|x)|`.
    pub fn reconstruction_error(&self, x: &(impl History + ?Sized)) -> Result<f64> {
        let w = &self.weights;
        let mut mix1 = w.lambda(-1) * w.minus1_kernel().0;
        let mut mix0 = w.lambda(-1) * w.minus1_kernel().1;
        let pairs = self.r_pairs(w.k_max().max(0), x);
        for k in 0..=w.k_max() {
            if w.lambda(k) > 0.0 {
                let (p1, p0) = mixture_kernel(w, k, &pairs)?;
                mix1 += w.lambda(k) * p1;
                mix0 += w.lambda(k) * p0;
            }
        }
        let direct = self.transition(x);
        Ok((mix1 - direct).abs().max((mix0 - (1.0 - direct)).abs()))
    }
}

/// `(r^[k](1|x), r^[k](0|x))` at one site-time.
pub fn r_bounds(
    ctx: &SiteTimeContext,
    spec: &ModelSpec,
    k: i64,
    x: &impl History,
) -> Result<(f64, f64)> {
    let site = SiteDecomposition::new(spec, ctx.clone(), Mode::Auto)?;
    Ok(site.r_bounds(k, x))
}

/// Range weights, cut at `k_max`; errors if more than 1e-9 of mass is lost.
pub fn lambda_weights(ctx: &SiteTimeContext, spec: &ModelSpec, k_max: i64) -> Result<KalikowWeights> {
    let site = SiteDecomposition::new(spec, ctx.clone(), Mode::Auto)?;
    let w = site.weights;
    if k_max >= w.k_max() {
        return Ok(w);
    }
    let cut = w.alphas()[..(k_max.max(-1) + 2) as usize].to_vec();
    let residual = 1.0 - cut.last().copied().unwrap_or(0.0);
    if residual > RESIDUAL_TOLERANCE {
        return Err(Error::ResidualMassTooLarge { k_max, residual });
    }
    Ok(KalikowWeights::from_alpha(cut, w.r_minus1(), w.exactness()))
}

/// Dominating weight `λ̄(k) = γ G(t - R) Σ_{j ∉ V_i(k-1)} |W_{j→i}|` for `k ≥ 1`,
/// capped at 1.
///
/// Rounded up by a few ulps of 1: the weights `λ(k)` are differences of
/// `α` values near 1 and carry that much absolute rounding.
pub fn lambda_bar(spec: &ModelSpec, ctx: &SiteTimeContext, k: i64) -> f64 {
    debug_assert!(k >= 1);
    let residual = spec.shells(ctx.neuron).residual(k - 1);
    if residual == 0.0 {
        return 0.0;
    }
    let bound = spec.gamma() * crate::model::g_cumulative(spec, ctx.age()) * residual;
    (bound + 4.0 * f64::EPSILON).min(1.0)
}

/// `(p^[k](1|x), p^[k](0|x))` at one site-time.
pub fn p_k_conditional(
    ctx: &SiteTimeContext,
    spec: &ModelSpec,
    k: i64,
    x: &impl History,
) -> Result<(f64, f64)> {
    SiteDecomposition::new(spec, ctx.clone(), Mode::Auto)?.kernel(k, x)
}

/// `max_a |Σ_k λ(k) p^[k](a|x) - p(a|x)|` at one site-time.
pub fn reconstruct_transition(ctx: &SiteTimeContext, spec: &ModelSpec, x: &impl History) -> Result<f64> {
    SiteDecomposition::new(spec, ctx.clone(), Mode::Auto)?.reconstruction_error(x)
}
