use serde::Serialize;

use super::constants::{self, DeltaStar, ReproductionSource, SeriesValue};
use super::ModelSpec;
use crate::error::{Error, Result};

/// Which existence regime a model falls in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// Spontaneous floor above the critical value: the conditional clan sampler applies.
    Conditional,
    /// Summable memory with reproduction mean below one: the space-time sampler applies.
    Spacetime,
    Both,
    Neither,
}

impl Regime {
    pub fn conditional(self) -> bool {
        matches!(self, Regime::Conditional | Regime::Both)
    }

    pub fn spacetime(self) -> bool {
        matches!(self, Regime::Spacetime | Regime::Both)
    }
}

/// Constants and regime of a model. Field order is the serialized key order.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub spec_hash: String,
    pub neuron_count: usize,
    pub delta: f64,
    pub gamma: f64,
    pub summability_sup: f64,
    /// `G(1), …, G(horizon)`.
    pub g_table: Vec<f64>,
    pub c_gamma: f64,
    /// `E(G, δ)`; absent without a spontaneous floor.
    pub e_g_delta: Option<f64>,
    pub e_delta: Option<f64>,
    /// Bound on the part of `E(G, δ)` left out by truncation.
    pub truncation_error: f64,
    pub delta_star: DeltaStar,
    /// `sup_i m_i`; absent when the space-time decomposition does not apply.
    pub m_sup: Option<f64>,
    pub m_source: Option<ReproductionSource>,
    pub attractive: bool,
    pub regime: Regime,
    pub violations: Vec<String>,
}

/// Compute every constant of `spec` and classify its regime.
pub fn validate_model(spec: &ModelSpec, horizon: u64) -> Result<ValidationReport> {
    if horizon < 2 {
        return Err(Error::malformed("validation horizon must be at least 2"));
    }
    let mut violations = Vec::new();
    let g_table = (1..=horizon).map(|n| constants::g_cumulative(spec, n)).collect();
    let c_gamma = constants::c_gamma(spec);
    if !c_gamma.is_finite() {
        return Err(Error::NonFiniteConstant {
            name: "C_gamma",
            detail: format!("{c_gamma}"),
        });
    }
    let delta = spec.delta();

    let (e_g_delta, e_delta, truncation_error) = if delta > 0.0 {
        let SeriesValue {
            value,
            truncation_error,
            ..
        } = constants::memory_series_value(spec, delta).map_err(|e| Error::NonFiniteConstant {
            name: "E(G, delta)",
            detail: e.to_string(),
        })?;
        let e = if delta >= 1.0 || c_gamma == 0.0 {
            0.0
        } else {
            c_gamma * (1.0 - delta) * value
        };
        (Some(value), Some(e), c_gamma * (1.0 - delta) * truncation_error)
    } else {
        violations.push("no-spontaneous-floor".to_string());
        (None, None, 0.0)
    };
    let delta_star = constants::delta_star(spec, 1e-9)?;
    let conditional = match e_delta {
        Some(e) if e < 1.0 => true,
        Some(_) => {
            violations.push("delta-below-critical".to_string());
            false
        }
        None => false,
    };

    let (m_sup, m_source) = if !spec.is_age_independent() {
        violations.push("age-dependent-rate".to_string());
        (None, None)
    } else {
        let mut worst = 0.0f64;
        let mut source = ReproductionSource::Exact;
        let mut ok = true;
        for i in 0..spec.neuron_count() {
            match constants::reproduction_mean(spec, i) {
                Ok(m) => {
                    worst = worst.max(m.value);
                    if m.source == ReproductionSource::Bound {
                        source = ReproductionSource::Bound;
                    }
                }
                Err(Error::RegimeMismatch(_)) => {
                    ok = false;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        if ok {
            (Some(worst), Some(source))
        } else {
            violations.push("non-summable-aging".to_string());
            (None, None)
        }
    };
    let spacetime = match m_sup {
        Some(m) if m < 1.0 => true,
        Some(_) => {
            violations.push("reproduction-mean-not-below-one".to_string());
            false
        }
        None => false,
    };
    let regime = match (conditional, spacetime) {
        (true, true) => Regime::Both,
        (true, false) => Regime::Conditional,
        (false, true) => Regime::Spacetime,
        (false, false) => Regime::Neither,
    };
    Ok(ValidationReport {
        spec_hash: spec.spec_hash(),
        neuron_count: spec.neuron_count(),
        delta,
        gamma: spec.gamma(),
        summability_sup: constants::summability_sup(spec),
        g_table,
        c_gamma,
        e_g_delta,
        e_delta,
        truncation_error,
        delta_star,
        m_sup,
        m_source,
        attractive: spec.is_attractive(),
        regime,
        violations,
    })
}
