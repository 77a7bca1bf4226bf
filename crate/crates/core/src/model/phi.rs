use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Input-to-probability shape, before any age modulation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RateShape {
    /// `min(1, floor + slope · max(s, 0))`.
    SaturatedLinear { floor: f64, slope: f64 },
    /// `floor + (1 - floor)(1 - e^{-max(s, 0)})`.
    SigmoidFloor { floor: f64 },
}

/// Spiking probability `φ(s, n)` as a function of the weighted input `s` and
/// the age `n` (steps since the neuron's last spike).
///
/// With `age_recovery = Some(ρ)`, the excess over the floor is scaled by
/// `1 - ρ^n`, so a neuron that fired recently is harder to excite.
/// Every variant is nondecreasing in `s`, concave on `[0, ∞)`, nondecreasing
/// in `n`, and bounded below by its floor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateFunction {
    pub shape: RateShape,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub age_recovery: Option<f64>,
}

impl RateFunction {
    pub fn saturated_linear(floor: f64, slope: f64) -> Self {
        Self {
            shape: RateShape::SaturatedLinear { floor, slope },
            age_recovery: None,
        }
    }

    pub fn sigmoid_floor(floor: f64) -> Self {
        Self {
            shape: RateShape::SigmoidFloor { floor },
            age_recovery: None,
        }
    }

    pub fn with_age_recovery(mut self, rho: f64) -> Self {
        self.age_recovery = Some(rho);
        self
    }

    pub fn check(&self) -> Result<()> {
        let floor = self.floor();
        let mut ok = floor.is_finite() && (0.0..=1.0).contains(&floor);
        if let RateShape::SaturatedLinear { slope, .. } = self.shape {
            ok &= slope.is_finite() && slope >= 0.0;
        }
        if let Some(rho) = self.age_recovery {
            ok &= rho.is_finite() && (0.0..1.0).contains(&rho);
        }
        if ok {
            Ok(())
        } else {
            Err(Error::malformed(format!("invalid rate function {self:?}")))
        }
    }

    pub fn floor(&self) -> f64 {
        match self.shape {
            RateShape::SaturatedLinear { floor, .. } | RateShape::SigmoidFloor { floor } => floor,
        }
    }

    /// Lipschitz constant in `s`, uniform over ages.
    pub fn lipschitz(&self) -> f64 {
        match self.shape {
            RateShape::SaturatedLinear { slope, .. } => {
                if self.floor() >= 1.0 {
                    0.0
                } else {
                    slope
                }
            }
            RateShape::SigmoidFloor { floor } => 1.0 - floor,
        }
    }

    pub fn depends_on_age(&self) -> bool {
        self.age_recovery.is_some()
    }

    /// Age-independent part `φ(s)`.
    #[inline]
    pub fn base(&self, s: f64) -> f64 {
        let s = s.max(0.0);
        match self.shape {
            RateShape::SaturatedLinear { floor, slope } => (floor + slope * s).min(1.0),
            RateShape::SigmoidFloor { floor } => floor - (1.0 - floor) * (-s).exp_m1(),
        }
    }

    #[inline]
    pub fn eval(&self, s: f64, age: u64) -> f64 {
        let base = self.base(s);
        match self.age_recovery {
            None => base,
            Some(rho) => {
                let floor = self.floor();
                floor + (base - floor) * (1.0 - rho.powi(age.min(i32::MAX as u64) as i32))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sigmoid_values() {
        let phi = RateFunction::sigmoid_floor(0.5);
        assert_eq!(phi.eval(0.0, 3), 0.5);
        assert!((1.0 - phi.eval(3.0, 3) - 0.5 * (-3.0f64).exp()).abs() < 1e-15);
        assert_eq!(phi.eval(-4.0, 1), 0.5);
    }

    #[test]
    fn saturation() {
        let phi = RateFunction::saturated_linear(0.2, 0.5);
        assert_eq!(phi.eval(10.0, 1), 1.0);
        assert!((phi.eval(1.0, 1) - 0.7).abs() < 1e-15);
    }

    fn any_phi() -> impl Strategy<Value = RateFunction> {
        (0.0..1.0f64, 0.0..2.0f64, prop::option::of(0.0..0.99f64), any::<bool>()).prop_map(
            |(floor, slope, rho, sig)| {
                let base = if sig {
                    RateFunction::sigmoid_floor(floor)
                } else {
                    RateFunction::saturated_linear(floor, slope)
                };
                RateFunction { age_recovery: rho, ..base }
            },
        )
    }

    proptest! {
        #[test]
        fn floor_monotone_lipschitz(phi in any_phi(), a in -5.0..5.0f64, b in -5.0..5.0f64, n in 1u64..50) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let (plo, phi_) = (phi.eval(lo, n), phi.eval(hi, n));
            prop_assert!(plo >= phi.floor() - 1e-15 && phi_ <= 1.0);
            prop_assert!(plo <= phi_ + 1e-15);
            prop_assert!(phi_ - plo <= phi.lipschitz() * (hi - lo) + 1e-12);
            prop_assert!(phi.eval(hi, n) <= phi.eval(hi, n + 1) + 1e-15);
        }

        #[test]
        fn concave_on_positive_inputs(phi in any_phi(), a in 0.0..5.0f64, b in 0.0..5.0f64, n in 1u64..20) {
            let mid = phi.eval(0.5 * (a + b), n);
            prop_assert!(mid + 1e-12 >= 0.5 * (phi.eval(a, n) + phi.eval(b, n)));
        }
    }
}
