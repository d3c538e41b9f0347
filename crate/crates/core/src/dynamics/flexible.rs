use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::RobotState;
use crate::error::{Error, Result};

/// Elastic transmission between motor and link plus the joint-torque loop
/// that drives it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlexParams {
    /// Transmission stiffness `K_s` (N·m/rad).
    pub stiffness: f64,
    /// Transmission damping `D_s` (N·m·s/rad).
    pub damping: f64,
    /// Torque-error gain `K_T`.
    pub torque_gain: f64,
    /// Torque-rate gain `K_S` (s).
    pub torque_rate_gain: f64,
    /// Rotor inertia reflected to the joint (kg·m²).
    pub motor_inertia: f64,
}

impl Default for FlexParams {
    fn default() -> Self {
        FlexParams {
            stiffness: 5000.0,
            damping: 5.0,
            torque_gain: 2.0,
            torque_rate_gain: 0.01,
            motor_inertia: 0.005,
        }
    }
}

impl FlexParams {
    pub fn validate(&self) -> Result<()> {
        if self.stiffness > 0.0
            && self.damping >= 0.0
            && self.torque_gain >= 0.0
            && self.torque_rate_gain >= 0.0
            && self.motor_inertia > 0.0
        {
            Ok(())
        } else {
            Err(Error::InvalidParameter("flexible-joint parameters out of range".into()))
        }
    }
}

/// `τ_J = K_s (q_m − q) + D_s (q̇_m − q̇)`.
pub fn transmission_torque(state: &RobotState, params: &FlexParams) -> Vector3<f64> {
    params.stiffness * (state.motor_q - state.q) + params.damping * (state.motor_dq - state.dq)
}

/// Motor torque from the joint-torque loop
/// `u = τ_d + K_T (τ_d − τ_J) − K_S τ̇_J`, saturated to `[tau_min, tau_max]`.
///
/// The rate `τ̇_J` is taken from the elastic part, `K_s (q̇_m − q̇)`, so the
/// law stays a function of the measured state only.
pub fn flexible_joint_step_inputs(
    state: &RobotState,
    tau_desired: &Vector3<f64>,
    params: &FlexParams,
    tau_min: f64,
    tau_max: f64,
) -> Vector3<f64> {
    let tau_j = transmission_torque(state, params);
    let tau_j_rate = params.stiffness * (state.motor_dq - state.dq);
    let u = tau_desired + params.torque_gain * (tau_desired - tau_j) - params.torque_rate_gain * tau_j_rate;
    u.map(|v| v.clamp(tau_min, tau_max))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tracking_achieved_returns_desired() {
        let params = FlexParams::default();
        let tau_d = Vector3::new(1.0, -2.0, 0.5);
        // q_m − q chosen so that τ_J = τ_d, no relative motion.
        let q = Vector3::new(0.1, 0.2, 0.3);
        let state = RobotState {
            q,
            dq: Vector3::new(0.4, 0.4, 0.4),
            motor_q: q + tau_d / params.stiffness,
            motor_dq: Vector3::new(0.4, 0.4, 0.4),
        };
        let u = flexible_joint_step_inputs(&state, &tau_d, &params, -40.0, 40.0);
        assert!((u - tau_d).norm() < 1e-12);
    }

    #[test]
    fn zero_gains_are_feedforward() {
        let params = FlexParams {
            torque_gain: 0.0,
            torque_rate_gain: 0.0,
            ..FlexParams::default()
        };
        let state = RobotState {
            q: Vector3::new(0.1, 0.2, 0.3),
            dq: Vector3::new(1.0, 0.0, -1.0),
            motor_q: Vector3::new(0.0, 0.5, 0.3),
            motor_dq: Vector3::new(0.0, 2.0, 1.0),
        };
        let tau_d = Vector3::new(3.0, -1.0, 0.25);
        assert_eq!(flexible_joint_step_inputs(&state, &tau_d, &params, -40.0, 40.0), tau_d);
    }

    #[test]
    fn output_saturates() {
        let params = FlexParams::default();
        let state = RobotState::rigid(Vector3::zeros(), Vector3::zeros());
        let u = flexible_joint_step_inputs(&state, &Vector3::new(30.0, -30.0, 0.0), &params, -40.0, 40.0);
        assert_eq!(u, Vector3::new(40.0, -40.0, 0.0));
    }

    /// One joint: motor inertia coupled through the transmission to a link
    /// that is held by a stiff, damped spring. After a step in τ_d the transmitted
    /// torque settles on τ_d.
    #[test]
    fn step_response_settles_on_desired_torque() {
        let params = FlexParams::default();
        let (link_inertia, env_stiffness, env_damping) = (0.5, 2000.0, 40.0);
        let tau_d = 10.0;
        // state: link q, link dq, motor q, motor dq
        let deriv = |s: [f64; 4]| -> [f64; 4] {
            let st = RobotState {
                q: Vector3::new(s[0], 0.0, 0.0),
                dq: Vector3::new(s[1], 0.0, 0.0),
                motor_q: Vector3::new(s[2], 0.0, 0.0),
                motor_dq: Vector3::new(s[3], 0.0, 0.0),
            };
            let tau_j = transmission_torque(&st, &params)[0];
            let u = flexible_joint_step_inputs(&st, &Vector3::new(tau_d, 0.0, 0.0), &params, -40.0, 40.0)[0];
            [
                s[1],
                (tau_j - env_stiffness * s[0] - env_damping * s[1]) / link_inertia,
                s[3],
                (u - tau_j) / params.motor_inertia,
            ]
        };
        let dt = 1e-4;
        let mut s = [0.0; 4];
        for _ in 0..20_000 {
            let k1 = deriv(s);
            let k2 = deriv(std::array::from_fn(|i| s[i] + 0.5 * dt * k1[i]));
            let k3 = deriv(std::array::from_fn(|i| s[i] + 0.5 * dt * k2[i]));
            let k4 = deriv(std::array::from_fn(|i| s[i] + dt * k3[i]));
            s = std::array::from_fn(|i| s[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
        }
        let st = RobotState {
            q: Vector3::new(s[0], 0.0, 0.0),
            dq: Vector3::new(s[1], 0.0, 0.0),
            motor_q: Vector3::new(s[2], 0.0, 0.0),
            motor_dq: Vector3::new(s[3], 0.0, 0.0),
        };
        let tau_j = transmission_torque(&st, &params)[0];
        assert!((tau_j - tau_d).abs() < 0.02 * tau_d, "τ_J = {tau_j}");
    }
}
