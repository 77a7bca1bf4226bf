//! Analytic constants of a model: memory growth `G`, the clan branching
//! bound `e(δ)` and its critical floor `δ*`, the reproduction mean of the
//! space-time clan, and the step generating function of the dominating walk.

use serde::Serialize;

use super::{AgingFunction, ModelSpec};
use crate::error::{Error, Result};
use crate::kalikow::spacetime::SpacetimeDecomposition;
use crate::kalikow::Mode;

/// Relative tail below which an infinite series is considered summed.
pub const SERIES_TOLERANCE: f64 = 1e-10;
const OVERFLOW_GUARD: f64 = 1e300;
const MAX_TERMS: u64 = 50_000_000;
/// Search interval for `δ*`.
pub const DELTA_MIN: f64 = 1e-6;

/// `sup_i Σ_j |W_{j→i}|`.
pub fn summability_sup(spec: &ModelSpec) -> f64 {
    (0..spec.neuron_count())
        .map(|i| spec.inputs(i).iter().map(|&(_, w)| w.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `G(n) = sup_i Σ_{m=1}^{n} g_i(m)`.
pub fn g_cumulative(spec: &ModelSpec, n: u64) -> f64 {
    distinct_agings(spec)
        .iter()
        .map(|g| g.cumulative(n))
        .fold(0.0, f64::max)
}

fn distinct_agings(spec: &ModelSpec) -> Vec<AgingFunction> {
    let mut out: Vec<AgingFunction> = Vec::new();
    for j in 0..spec.neuron_count() {
        if !out.contains(spec.aging(j)) {
            out.push(spec.aging(j).clone());
        }
    }
    out
}

/// Running evaluation of `G(1), G(2), …` in one pass.
struct CumulativeSup {
    agings: Vec<AgingFunction>,
    sums: Vec<f64>,
    n: u64,
}

impl CumulativeSup {
    fn new(spec: &ModelSpec) -> Self {
        let agings = distinct_agings(spec);
        let sums = vec![0.0; agings.len()];
        Self { agings, sums, n: 0 }
    }

    fn next(&mut self) -> f64 {
        self.n += 1;
        let mut best = 0.0f64;
        for (g, s) in self.agings.iter().zip(self.sums.iter_mut()) {
            *s += g.eval(self.n);
            best = best.max(*s);
        }
        best
    }
}

/// `C_γ = 2γ sup_i Σ_{k≥1} |V_i(k)| Σ_{j ∉ V_i(k-1)} |W_{j→i}|`.
pub fn c_gamma(spec: &ModelSpec) -> f64 {
    let worst = (0..spec.neuron_count())
        .map(|i| {
            let v = spec.shells(i);
            (1..=v.saturation())
                .map(|k| v.size(k) as f64 * v.residual(k - 1))
                .sum::<f64>()
        })
        .fold(0.0, f64::max);
    2.0 * spec.gamma() * worst
}

/// Value of `E(G, δ) = G(1) + Σ_{n≥2} (1-δ)^{n-2} n² G(n)` with the bound
/// on the part left out.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SeriesValue {
    pub value: f64,
    pub truncation_error: f64,
    pub terms: u64,
}

/// Sum `E(G, δ)`, stopping early once the partial sum exceeds `stop_above`.
fn memory_series(spec: &ModelSpec, delta: f64, stop_above: f64) -> Result<SeriesValue> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::SeriesDiverges(format!(
            "the memory series needs 0 < delta <= 1, got {delta}"
        )));
    }
    let mut acc = CumulativeSup::new(spec);
    let g1 = acc.next();
    let q = 1.0 - delta;
    if q == 0.0 {
        return Ok(SeriesValue {
            value: g1,
            truncation_error: 0.0,
            terms: 1,
        });
    }
    // G(n) ≤ g_max n, so the tail after n is at most g_max Σ_{m>n} q^{m-2} m³.
    let g_max = distinct_agings(spec)
        .iter()
        .map(AgingFunction::max_value)
        .fold(0.0, f64::max);
    let mut sum = g1;
    let mut qpow = 1.0; // q^{n-2}
    let mut n = 1u64;
    loop {
        n += 1;
        let g = acc.next();
        let nf = n as f64;
        sum += qpow * nf * nf * g;
        if !sum.is_finite() || sum > OVERFLOW_GUARD {
            return Err(Error::SeriesDiverges(format!(
                "memory series exceeded {OVERFLOW_GUARD:e} after {n} terms at delta {delta}"
            )));
        }
        if sum > stop_above {
            return Ok(SeriesValue {
                value: sum,
                truncation_error: f64::INFINITY,
                terms: n,
            });
        }
        qpow *= q;
        let ratio = q * (1.0 + 1.0 / (nf + 1.0)).powi(3);
        if ratio < 1.0 {
            let next = g_max * qpow * (nf + 1.0).powi(3);
            let tail = next / (1.0 - ratio);
            if tail <= SERIES_TOLERANCE * sum {
                return Ok(SeriesValue {
                    value: sum,
                    truncation_error: tail,
                    terms: n,
                });
            }
        }
        if n >= MAX_TERMS {
            return Err(Error::SeriesDiverges(format!(
                "memory series not converged after {MAX_TERMS} terms at delta {delta}"
            )));
        }
    }
}

/// `E(G, δ)` with its truncation bound.
pub fn memory_series_value(spec: &ModelSpec, delta: f64) -> Result<SeriesValue> {
    memory_series(spec, delta, f64::INFINITY)
}

/// `e(δ) = C_γ (1-δ) E(G, δ)`, the mean offspring bound of the clan.
pub fn e_delta(spec: &ModelSpec, delta: f64) -> Result<f64> {
    let c = c_gamma(spec);
    if delta >= 1.0 || c == 0.0 {
        return Ok(0.0);
    }
    Ok(c * (1.0 - delta) * memory_series_value(spec, delta)?.value)
}

/// Whether `e(δ) > 1`, without summing further than needed.
fn e_exceeds_one(spec: &ModelSpec, c: f64, delta: f64) -> Result<bool> {
    if delta >= 1.0 || c == 0.0 {
        return Ok(false);
    }
    let threshold = 1.0 / (c * (1.0 - delta));
    match memory_series(spec, delta, threshold) {
        Ok(s) => Ok(s.value > threshold),
        Err(Error::SeriesDiverges(_)) => Ok(true),
        Err(e) => Err(e),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeltaStarKind {
    /// `e(δ) ≤ 1` already at the bottom of the search interval; reported as 0.
    AlwaysSubcritical,
    /// `e(δ) > 1` up to `1 - tol`; reported as `1 - tol`.
    NeverSubcritical,
    Interior,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DeltaStar {
    pub value: f64,
    pub kind: DeltaStarKind,
}

/// Smallest `δ` with `e(δ) ≤ 1`, by bisection to absolute tolerance `tol`.
/// The returned interior value always satisfies `e(value) ≤ 1`.
pub fn delta_star(spec: &ModelSpec, tol: f64) -> Result<DeltaStar> {
    let tol = tol.clamp(1e-15, 0.25);
    let c = c_gamma(spec);
    let mut lo = DELTA_MIN;
    let mut hi = 1.0 - tol;
    if !e_exceeds_one(spec, c, lo)? {
        return Ok(DeltaStar {
            value: 0.0,
            kind: DeltaStarKind::AlwaysSubcritical,
        });
    }
    if e_exceeds_one(spec, c, hi)? {
        return Ok(DeltaStar {
            value: hi,
            kind: DeltaStarKind::NeverSubcritical,
        });
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if e_exceeds_one(spec, c, mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(DeltaStar {
        value: hi,
        kind: DeltaStarKind::Interior,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReproductionSource {
    /// From the exact space-time range weights.
    Exact,
    /// From the upper bounds on the space-time range weights.
    Bound,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ReproductionMean {
    pub value: f64,
    pub source: ReproductionSource,
}

fn require_summable_regime(spec: &ModelSpec) -> Result<()> {
    if !spec.is_age_independent() {
        return Err(Error::RegimeMismatch(
            "the space-time decomposition needs age-independent rates".into(),
        ));
    }
    Ok(())
}

/// Upper bound on `m_i = λ_i(0) + Σ_{k≥1} (k+1) |V_i(k)| λ_i(k)` from
///
/// `λ_i(0) ≤ γ Σ_j |W_{j→i}| ‖g_j‖₁`,
/// `λ_i(k) ≤ γ (Σ_{j ∉ V_i(k-1)} |W_{j→i}| ‖g_j‖₁ + Σ_{j ∈ V_i(k-1)} |W_{j→i}| Σ_{n≥k} g_j(n))`.
pub fn reproduction_mean_bound(spec: &ModelSpec, i: usize) -> Result<f64> {
    require_summable_regime(spec)?;
    let gamma = spec.gamma();
    let v = spec.shells(i);
    let inputs = spec.inputs(i);
    let mut norms = Vec::with_capacity(inputs.len());
    for &(j, _) in inputs {
        norms.push(spec.aging(j).total().ok_or_else(|| {
            Error::RegimeMismatch(format!("aging of neuron {j} is not summable"))
        })?);
    }
    let bound_at = |k: i64| -> f64 {
        let s: f64 = inputs
            .iter()
            .zip(&norms)
            .map(|(&(j, w), &norm)| {
                if v.contains(k - 1, j) {
                    w.abs() * spec.aging(j).tail(k as u64).unwrap_or(0.0)
                } else {
                    w.abs() * norm
                }
            })
            .sum();
        (gamma * s).min(1.0)
    };
    let sat = v.saturation();
    let mut m = bound_at(0);
    for k in 1..=sat {
        m += (k + 1) as f64 * v.size(k) as f64 * bound_at(k);
    }
    // Past saturation: (k+1) |V_i| γ Σ_j |W| tail_j(k), summed in closed form.
    let full = v.size(sat) as f64;
    for &(j, w) in inputs {
        let weighted = spec.aging(j).weighted_tail_sum(sat as u64 + 1).ok_or_else(|| {
            Error::RegimeMismatch(format!(
                "aging of neuron {j} decays too slowly for a finite reproduction mean"
            ))
        })?;
        m += gamma * full * w.abs() * weighted;
    }
    Ok(m)
}

/// `m_i`, exact when the model is attractive and the range weights
/// terminate, otherwise the upper bound.
pub fn reproduction_mean(spec: &ModelSpec, i: usize) -> Result<ReproductionMean> {
    require_summable_regime(spec)?;
    if spec.is_attractive() {
        if let Ok(dec) = SpacetimeDecomposition::new(spec, i, Mode::Exact) {
            let w = dec.weights();
            if w.residual() == 0.0 {
                let v = spec.shells(i);
                let mut m = w.lambda(0);
                for k in 1..=w.k_max() {
                    m += (k + 1) as f64 * v.size(k) as f64 * w.lambda(k);
                }
                return Ok(ReproductionMean {
                    value: m,
                    source: ReproductionSource::Exact,
                });
            }
        }
    }
    Ok(ReproductionMean {
        value: reproduction_mean_bound(spec, i)?,
        source: ReproductionSource::Bound,
    })
}

/// Generating function `ρ = E[e^η]` of the step of the walk that dominates
/// the time extent of a space-time clan.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MgfRho {
    pub rho: f64,
    /// Constant `C` in `λ̄(k) = C e^{-βk} / (1 - e^{-β})`.
    pub constant: f64,
    pub beta: f64,
    /// `Σ_{k≥0} λ̄(k)`.
    pub offspring_mass: f64,
    /// Set when `ρ ≥ 1` or the step law is not a distribution.
    pub below_critical: bool,
}

/// `ρ` for range weights bounded by `λ̄(0) = λ̄(1) = C e^{-β} / (1 - e^{-β})`
/// and `λ̄(k) = C e^{-βk} / (1 - e^{-β})`.
pub fn mgf_rho_exponential(constant: f64, beta: f64) -> MgfRho {
    let one_minus = -(-beta).exp_m1();
    let eb = (-beta).exp();
    let mass = constant / one_minus * (eb + eb / one_minus);
    let walk_up = if beta > 1.0 {
        let e1b = (1.0 - beta).exp();
        constant / one_minus * e1b / (1.0 - e1b)
    } else {
        f64::INFINITY
    };
    let rho = (-1.0f64).exp() * (1.0 - mass) + constant * eb / one_minus + walk_up;
    MgfRho {
        rho,
        constant,
        beta,
        offspring_mass: mass,
        below_critical: !(rho.is_finite() && rho < 1.0 && mass <= 1.0),
    }
}

/// `ρ` for a model whose aging and residual weights decay at rate `β`:
/// with `g_j(n) ≤ K e^{-βn}` and `Σ_{j ∉ V_i(n)} |W_{j→i}| ≤ K e^{-βn}`,
/// the range weights satisfy the exponential bounds with `C = γ K (K + S)`,
/// where `S = sup_i Σ_j |W_{j→i}|`.
pub fn mgf_rho(spec: &ModelSpec, beta: f64) -> Result<MgfRho> {
    require_summable_regime(spec)?;
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::RegimeMismatch(format!("beta {beta} must be positive")));
    }
    let mut k = 0.0f64;
    for j in 0..spec.neuron_count() {
        let sup = match *spec.aging(j) {
            AgingFunction::Exponential { scale, rate } if rate >= beta => {
                scale * (beta - rate).exp()
            }
            AgingFunction::FiniteSupport { support } => (beta * support as f64).exp(),
            ref g if g.support() == Some(0) => 0.0,
            ref g => {
                return Err(Error::RegimeMismatch(format!(
                    "aging {g:?} of neuron {j} is not dominated by e^(-{beta} n)"
                )))
            }
        };
        k = k.max(sup);
    }
    for i in 0..spec.neuron_count() {
        let v = spec.shells(i);
        for n in 0..=v.saturation() {
            k = k.max(v.residual(n) * (beta * n as f64).exp());
        }
    }
    let c = spec.gamma() * k * (k + summability_sup(spec));
    Ok(mgf_rho_exponential(c, beta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{NeighborhoodRule, RateFunction};
    use approx::assert_relative_eq;

    fn pair(gamma: f64, aging: AgingFunction) -> ModelSpec {
        ModelSpec::new(
            2,
            vec![(0, 1, 1.0), (1, 0, 1.0)],
            vec![RateFunction::saturated_linear(0.5, gamma); 2],
            vec![aging; 2],
            0.5,
            gamma,
            NeighborhoodRule::ByWeight,
        )
        .unwrap()
    }

    /// Direct summation with a fixed, generous number of terms.
    fn e_oracle(c: f64, delta: f64, big_g: impl Fn(u64) -> f64) -> f64 {
        let q = 1.0 - delta;
        let mut s = big_g(1);
        for n in 2..20_000u64 {
            s += q.powi(n as i32 - 2) * (n * n) as f64 * big_g(n);
        }
        c * q * s
    }

    #[test]
    fn g_cumulative_examples() {
        let spec = pair(0.1, AgingFunction::ConstantOne);
        assert_eq!(g_cumulative(&spec, 5), 5.0);
        let spec = pair(0.1, AgingFunction::FiniteSupport { support: 1 });
        assert_eq!(g_cumulative(&spec, 7), 1.0);
    }

    #[test]
    fn e_delta_matches_direct_summation() {
        let spec = pair(0.1, AgingFunction::ConstantOne);
        // |V(1)| = 2, residual(0) = 1.
        assert_relative_eq!(c_gamma(&spec), 0.4, epsilon = 1e-15);
        for delta in [0.2, 0.5, 0.9] {
            let e = e_delta(&spec, delta).unwrap();
            assert_relative_eq!(e, e_oracle(0.4, delta, |n| n as f64), max_relative = 1e-10);
        }
        assert_eq!(e_delta(&spec, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn e_delta_is_monotone() {
        let spec = pair(0.3, AgingFunction::FiniteSupport { support: 2 });
        let mut prev = f64::INFINITY;
        for step in 1..20 {
            let e = e_delta(&spec, step as f64 / 20.0).unwrap();
            assert!(e <= prev);
            prev = e;
        }
    }

    #[test]
    fn delta_star_brackets_the_crossing() {
        let spec = pair(0.1, AgingFunction::ConstantOne);
        let ds = delta_star(&spec, 1e-9).unwrap();
        assert_eq!(ds.kind, DeltaStarKind::Interior);
        assert!(e_delta(&spec, ds.value).unwrap() <= 1.0);
        assert!(e_delta(&spec, ds.value - 2e-9).unwrap() > 1.0);
    }

    #[test]
    fn reproduction_bound_for_single_edge() {
        // One edge of weight 0.5, ‖g‖₁ = 1: λ(0) and λ(1) are both at most γ·0.5,
        // later ranges vanish, so m ≤ γ·0.5 + 2·|V(1)|·γ·0.5.
        let spec = ModelSpec::new(
            2,
            vec![(1, 0, 0.5)],
            vec![RateFunction::saturated_linear(0.0, 0.2); 2],
            vec![AgingFunction::FiniteSupport { support: 1 }; 2],
            0.0,
            0.2,
            NeighborhoodRule::ByWeight,
        )
        .unwrap();
        assert_relative_eq!(reproduction_mean_bound(&spec, 0).unwrap(), 0.1 + 0.4, epsilon = 1e-15);
        assert_eq!(reproduction_mean_bound(&spec, 1).unwrap(), 0.0);
    }

    #[test]
    fn mgf_rho_matches_step_law() {
        let (c, beta) = (1.0, 5.0);
        let r = mgf_rho_exponential(c, beta);
        let norm = 1.0 - (-beta).exp();
        let lam = |k: u32| c * (-beta * k.max(1) as f64).exp() / norm;
        let mass: f64 = (0..200).map(lam).sum();
        let direct: f64 = (-1.0f64).exp() * (1.0 - mass)
            + (0..200).map(|k| (k as f64).exp() * lam(k)).sum::<f64>();
        assert_relative_eq!(r.rho, direct, max_relative = 1e-12);
        assert!(!r.below_critical);
        let limit = mgf_rho_exponential(1.0, 60.0);
        assert_relative_eq!(limit.rho, (-1.0f64).exp(), max_relative = 1e-12);
        let grid: Vec<f64> = [3.0, 4.0, 5.0, 6.0].iter().map(|&b| mgf_rho_exponential(1.0, b).rho).collect();
        assert!(grid.windows(2).all(|w| w[1] < w[0]));
    }
}
