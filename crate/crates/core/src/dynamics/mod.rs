//! Planar multibody model: two 3-DOF arms, a free box, the contact
//! kinematics between them and the elastic-joint transmission.

mod arm;
mod contact_kinematics;
mod flexible;

pub use arm::{
    forward_kinematics, gravity_torque, inverse_kinematics, jacobians, mass_bias, mechanical_energy, perp,
    ArmJacobians, Pose2, RobotParams,
};
pub use contact_kinematics::{
    contact_kinematics, ArmFrame, ContactJacobians, ContactKinematics, CONTACTS_PER_ROBOT, NUM_CONTACTS,
};
pub use flexible::{flexible_joint_step_inputs, transmission_torque, FlexParams};

use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxParams {
    pub width: f64,
    pub height: f64,
    pub mass: f64,
    pub inertia: f64,
    /// Signed acceleration along world `y`, shared by box and links.
    pub gravity: f64,
}

impl Default for BoxParams {
    fn default() -> Self {
        let (width, height, mass) = (0.3, 0.2, 1.0);
        BoxParams {
            width,
            height,
            mass,
            inertia: mass * (width * width + height * height) / 12.0,
            gravity: 0.0,
        }
    }
}

impl BoxParams {
    pub fn validate(&self) -> Result<()> {
        if [self.width, self.height, self.mass, self.inertia]
            .iter()
            .all(|v| *v > 0.0 && v.is_finite())
        {
            Ok(())
        } else {
            Err(Error::InvalidParameter(
                "box width, height, mass and inertia must be > 0".into(),
            ))
        }
    }

    pub fn half_width(&self) -> f64 {
        0.5 * self.width
    }
}

/// `M_b = diag(m, m, I)` and `h_b = (0, -m g, 0)`.
pub fn box_mass_bias(params: &BoxParams) -> (Matrix3<f64>, Vector3<f64>) {
    (
        Matrix3::from_diagonal(&Vector3::new(params.mass, params.mass, params.inertia)),
        Vector3::new(0.0, -params.mass * params.gravity, 0.0),
    )
}

/// Link-side joint state of one arm, plus the motor side for elastic joints.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RobotState {
    pub q: Vector3<f64>,
    pub dq: Vector3<f64>,
    pub motor_q: Vector3<f64>,
    pub motor_dq: Vector3<f64>,
}

impl RobotState {
    /// Rigid state: motor side mirrors the link side.
    pub fn rigid(q: Vector3<f64>, dq: Vector3<f64>) -> Self {
        RobotState {
            q,
            dq,
            motor_q: q,
            motor_dq: dq,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.q
            .iter()
            .chain(self.dq.iter())
            .chain(self.motor_q.iter())
            .chain(self.motor_dq.iter())
            .all(|v| v.is_finite())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoxState {
    pub p: Vector2<f64>,
    pub theta: f64,
    pub dp: Vector2<f64>,
    pub dtheta: f64,
}

impl BoxState {
    pub fn at_rest(p: Vector2<f64>, theta: f64) -> Self {
        BoxState {
            p,
            theta,
            dp: Vector2::zeros(),
            dtheta: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.p.iter().chain(self.dp.iter()).all(|v| v.is_finite()) && self.theta.is_finite() && self.dtheta.is_finite()
    }

    pub fn pose(&self) -> Pose2 {
        Pose2 {
            p: self.p,
            theta: self.theta,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_terms() {
        let params = BoxParams {
            mass: 1.0,
            inertia: 0.05,
            gravity: -9.81,
            ..BoxParams::default()
        };
        let (m, h) = box_mass_bias(&params);
        assert_eq!(m, Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, 0.05)));
        assert_eq!(h, Vector3::new(0.0, 9.81, 0.0));

        let (_, h0) = box_mass_bias(&BoxParams { gravity: 0.0, ..params });
        assert_eq!(h0, Vector3::zeros());
    }

    #[test]
    fn invalid_box_rejected() {
        let params = BoxParams {
            mass: 0.0,
            ..BoxParams::default()
        };
        assert!(params.validate().is_err());
    }
}
