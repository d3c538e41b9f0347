//! Compliant contact law: exponentially extended Hunt–Crossley normal force
//! and arctan-regularized Coulomb friction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContactParams {
    /// `k_γ` (N/m^c).
    pub stiffness: f64,
    /// `d_γ` (N·s/m^(c+1)).
    pub damping: f64,
    /// Geometry exponent `c`.
    pub exponent: f64,
    /// Friction coefficient `μ`.
    pub friction: f64,
    /// Slope shaping `ε` (s/m).
    pub friction_slope: f64,
}

impl Default for ContactParams {
    fn default() -> Self {
        ContactParams {
            stiffness: 1e5,
            damping: 1e6,
            exponent: 1.0,
            friction: 0.6,
            friction_slope: 100.0,
        }
    }
}

impl ContactParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.stiffness > 0.0
            && self.damping > 0.0
            && self.exponent > 0.0
            && self.friction_slope > 0.0
            && (0.0..=1.0).contains(&self.friction);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter("contact parameters out of range".into()))
        }
    }
}

/// State and resolved forces of one contact point.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ContactPoint {
    /// Signed gap; negative means penetration.
    pub gap: f64,
    pub gap_rate: f64,
    pub slip_rate: f64,
    pub lambda_n: f64,
    /// Friction magnitude along the slip direction; the force on the robot
    /// is `-lambda_t` along the tangent.
    pub lambda_t: f64,
}

impl ContactPoint {
    pub fn resolve(gap: f64, gap_rate: f64, slip_rate: f64, params: &ContactParams) -> Self {
        let lambda_n = normal_force(gap, gap_rate, params);
        ContactPoint {
            gap,
            gap_rate,
            slip_rate,
            lambda_n,
            lambda_t: tangential_force(lambda_n, slip_rate, params),
        }
    }

    pub fn in_contact(&self) -> bool {
        self.gap <= 0.0
    }
}

/// Stiffness–damping factor `K(γ̇)`: linear in the rate while the surfaces
/// approach, exponentially decaying while they separate.
pub fn stiffness_damping(gap_rate: f64, params: &ContactParams) -> f64 {
    if gap_rate <= 0.0 {
        params.stiffness - params.damping * gap_rate
    } else {
        params.stiffness * (-(params.damping / params.stiffness) * gap_rate).exp()
    }
}

pub fn normal_force(gap: f64, gap_rate: f64, params: &ContactParams) -> f64 {
    if gap > 0.0 {
        0.0
    } else {
        stiffness_damping(gap_rate, params) * (-gap).powf(params.exponent)
    }
}

pub fn tangential_force(lambda_n: f64, slip_rate: f64, params: &ContactParams) -> f64 {
    params.friction * lambda_n * std::f64::consts::FRAC_2_PI * (params.friction_slope * slip_rate).atan()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn open_gap_has_no_force() {
        assert_eq!(normal_force(0.001, -3.0, &ContactParams::default()), 0.0);
    }

    #[test]
    fn static_penetration() {
        let params = ContactParams::default();
        assert!((normal_force(-0.001, 0.0, &params) - 100.0).abs() < 1e-9);
    }

    #[test]
    fn fast_separation_has_no_adhesion() {
        let params = ContactParams {
            damping: 0.5e5,
            ..ContactParams::default()
        };
        let f = normal_force(-0.001, 10.0, &params);
        assert!(f >= 0.0);
        assert!((f - 1e5 * (-5.0f64).exp() * 0.001).abs() < 1e-9);
    }

    #[test]
    fn stiffness_damping_is_c1_at_zero_rate() {
        let params = ContactParams::default();
        let h = 1e-9;
        let left = stiffness_damping(-h, &params);
        let mid = stiffness_damping(0.0, &params);
        let right = stiffness_damping(h, &params);
        // Values and one-sided slopes are measured on the scale of k_γ.
        assert!((left - params.stiffness).abs() / params.stiffness < 1e-6);
        assert!((right - params.stiffness).abs() / params.stiffness < 1e-6);
        assert!((left - right).abs() / params.stiffness < 1e-6);
        let dl = (mid - left) / h;
        let dr = (right - mid) / h;
        assert!((dl + params.damping).abs() / params.stiffness < 1e-6);
        assert!((dr + params.damping).abs() / params.stiffness < 1e-6);
        assert!((dl - dr).abs() / params.stiffness < 1e-6);
    }

    #[test]
    fn friction_limits() {
        let params = ContactParams::default();
        assert_eq!(tangential_force(10.0, 0.0, &params), 0.0);
        let big = tangential_force(10.0, 1e12, &params);
        assert!((big - params.friction * 10.0).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn normal_force_is_nonnegative(gap in -0.01f64..0.01, rate in -100.0f64..1000.0) {
            prop_assert!(normal_force(gap, rate, &ContactParams::default()) >= 0.0);
        }

        #[test]
        fn friction_is_odd_and_bounded(lambda_n in 0.0f64..1e4, rate in -10.0f64..10.0) {
            let params = ContactParams::default();
            let f = tangential_force(lambda_n, rate, &params);
            prop_assert_eq!(tangential_force(lambda_n, -rate, &params), -f);
            if lambda_n > 0.0 {
                prop_assert!(f.abs() < params.friction * lambda_n);
            }
        }

        #[test]
        fn normal_force_continuous_at_contact_onset(rate in -10.0f64..10.0) {
            let params = ContactParams::default();
            prop_assert!(normal_force(-1e-15, rate, &params) < 1e-6);
            prop_assert_eq!(normal_force(0.0, rate, &params), 0.0);
        }
    }
}
