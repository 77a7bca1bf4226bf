use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Weight `g(n)` that a presynaptic spike carries `n ≥ 1` steps after it occurred.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AgingFunction {
    /// `g(n) = 1`.
    ConstantOne,
    /// `g(n) = scale · e^{-rate·n}`.
    Exponential { scale: f64, rate: f64 },
    /// `g(n) = scale · n^{-exponent}`.
    PowerLaw { scale: f64, exponent: f64 },
    /// `g(n) = 1` for `n ≤ support`, 0 afterwards.
    FiniteSupport { support: u64 },
}

impl AgingFunction {
    pub fn check(&self) -> Result<()> {
        let ok = match *self {
            AgingFunction::ConstantOne => true,
            AgingFunction::Exponential { scale, rate } => {
                scale.is_finite() && scale >= 0.0 && rate.is_finite() && rate > 0.0
            }
            AgingFunction::PowerLaw { scale, exponent } => {
                scale.is_finite() && scale >= 0.0 && exponent.is_finite() && exponent > 0.0
            }
            AgingFunction::FiniteSupport { support } => support >= 1,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::malformed(format!("invalid aging parameters {self:?}")))
        }
    }

    #[inline]
    pub fn eval(&self, n: u64) -> f64 {
        debug_assert!(n >= 1);
        match *self {
            AgingFunction::ConstantOne => 1.0,
            AgingFunction::Exponential { scale, rate } => scale * (-rate * n as f64).exp(),
            AgingFunction::PowerLaw { scale, exponent } => scale * (n as f64).powf(-exponent),
            AgingFunction::FiniteSupport { support } => {
                if n <= support {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Largest value of `g`; every shipped family is nonincreasing so this is `g(1)`.
    pub fn max_value(&self) -> f64 {
        self.eval(1)
    }

    /// Last `n` with `g(n) > 0`, if finite.
    pub fn support(&self) -> Option<u64> {
        match *self {
            AgingFunction::FiniteSupport { support } => Some(support),
            AgingFunction::Exponential { scale, .. } | AgingFunction::PowerLaw { scale, .. }
                if scale == 0.0 =>
            {
                Some(0)
            }
            _ => None,
        }
    }

    /// `Σ_{m=1}^{n} g(m)`.
    pub fn cumulative(&self, n: u64) -> f64 {
        match *self {
            AgingFunction::ConstantOne => n as f64,
            AgingFunction::FiniteSupport { support } => n.min(support) as f64,
            AgingFunction::Exponential { scale, rate } => {
                let q = (-rate).exp();
                // q (1 - q^n) / (1 - q)
                scale * q * -(-rate * n as f64).exp_m1() / -(-rate).exp_m1()
            }
            AgingFunction::PowerLaw { .. } => (1..=n).map(|m| self.eval(m)).sum(),
        }
    }

    /// `Σ_{n ≥ m} g(n)` for `m ≥ 1`, or `None` when the series diverges.
    pub fn tail(&self, m: u64) -> Option<f64> {
        let m = m.max(1);
        match *self {
            AgingFunction::ConstantOne => None,
            AgingFunction::FiniteSupport { support } => {
                Some(if m > support { 0.0 } else { (support - m + 1) as f64 })
            }
            AgingFunction::Exponential { scale, rate } => {
                Some(scale * (-rate * m as f64).exp() / -(-rate).exp_m1())
            }
            AgingFunction::PowerLaw { scale, exponent } => {
                if scale == 0.0 {
                    return Some(0.0);
                }
                if exponent <= 1.0 {
                    return None;
                }
                Some(scale * power_tail(exponent, m, 0))
            }
        }
    }

    /// `‖g‖₁ = Σ_{n ≥ 1} g(n)`.
    pub fn total(&self) -> Option<f64> {
        self.tail(1)
    }

    /// `Σ_{k ≥ from} (k + 1) · tail(k)`, the age-weighted tail used by the
    /// branching mean past neighborhood saturation.
    pub fn weighted_tail_sum(&self, from: u64) -> Option<f64> {
        let from = from.max(1);
        match *self {
            AgingFunction::ConstantOne => None,
            AgingFunction::FiniteSupport { support } => Some(
                (from..=support)
                    .map(|k| (k + 1) as f64 * (support - k + 1) as f64)
                    .sum(),
            ),
            AgingFunction::Exponential { scale, rate } => {
                let q = (-rate).exp();
                let one_minus_q = -(-rate).exp_m1();
                let qk = (-rate * from as f64).exp();
                let geo = qk * ((from + 1) as f64 / one_minus_q + q / (one_minus_q * one_minus_q));
                Some(scale / one_minus_q * geo)
            }
            AgingFunction::PowerLaw { scale, exponent } => {
                if scale == 0.0 {
                    return Some(0.0);
                }
                if exponent <= 3.0 {
                    return None;
                }
                // Σ_{n ≥ from} g(n) Σ_{k=from}^{n} (k+1)
                //   = Σ_{n ≥ from} g(n) [ (n+1)(n+2) - from(from+1) ] / 2
                let f = from as f64;
                let second = power_tail(exponent, from, 2) + 3.0 * power_tail(exponent, from, 1)
                    + 2.0 * power_tail(exponent, from, 0);
                Some(scale * 0.5 * (second - f * (f + 1.0) * power_tail(exponent, from, 0)))
            }
        }
    }
}

/// `Σ_{n ≥ m} n^{power - exponent}` for `exponent - power > 1`, by direct
/// summation followed by an Euler–Maclaurin tail.
fn power_tail(exponent: f64, m: u64, power: u32) -> f64 {
    let s = exponent - power as f64;
    debug_assert!(s > 1.0);
    const DIRECT: u64 = 4096;
    let cut = m + DIRECT;
    let mut sum = 0.0;
    for n in m..cut {
        sum += (n as f64).powf(-s);
    }
    let a = cut as f64;
    sum + a.powf(1.0 - s) / (s - 1.0) + 0.5 * a.powf(-s) + s * a.powf(-s - 1.0) / 12.0
}
