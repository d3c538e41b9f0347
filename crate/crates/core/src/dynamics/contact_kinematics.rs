//! Gap and slip kinematics of the four end-effector/box contact points.
//!
//! Contacts 0 and 1 sit on arm 0's end-effector face at `p ± w ŷ`, contacts
//! 2 and 3 on arm 1's. Arm 0 presses on the box face whose outward normal
//! is `-x_b`, arm 1 on the face with normal `+x_b`. The tangent of every
//! contact is the box `y_b` axis.
//!
//! Each face is a segment of the box height, extended at both corners by
//! the contact half-width so that an end effector centred anywhere on the
//! face keeps both of its contacts. Beyond that the gap is the (positive)
//! tangential overhang, so no force acts.
//!
//! Rates are written as `γ̇ = J_N,robot q̇_robot + J_N,box q̇_box`, so with
//! generalized forces `J_Nᵀ λ_N` on each body the two powers sum to `λ_N γ̇`.

use nalgebra::{Matrix4x3, RowVector3, Vector2, Vector3};

use super::arm::{forward_kinematics, jacobians, perp, ArmJacobians, Pose2, RobotParams};
use super::{BoxParams, BoxState};

pub const NUM_CONTACTS: usize = 4;
pub const CONTACTS_PER_ROBOT: usize = 2;

/// End-effector pose, Jacobians, twist and velocity-product acceleration.
#[derive(Clone, Copy, Debug)]
pub struct ArmFrame {
    pub pose: Pose2,
    pub jac: ArmJacobians,
    pub v: Vector2<f64>,
    pub omega: f64,
    /// `J̇_p q̇`.
    pub drift: Vector2<f64>,
}

impl ArmFrame {
    pub fn new(params: &RobotParams, q: &Vector3<f64>, dq: &Vector3<f64>) -> Self {
        let pose = forward_kinematics(params, q);
        let jac = jacobians(params, q, dq);
        ArmFrame {
            pose,
            jac,
            v: jac.jp * dq,
            omega: (jac.jtheta * dq)[0],
            drift: jac.djp * dq,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ContactKinematics {
    pub robot: usize,
    pub point: Vector2<f64>,
    /// Outward normal of the box face.
    pub normal: Vector2<f64>,
    pub tangent: Vector2<f64>,
    pub gap_rate: f64,
    /// Signed distance to the face along the normal, or the tangential
    /// overhang past the extended face when that is larger.
    pub gap: f64,
    /// Tangential coordinate of the point along the face.
    pub slip: f64,
    pub slip_rate: f64,
    pub jn_robot: RowVector3<f64>,
    pub jn_box: RowVector3<f64>,
    pub jt_robot: RowVector3<f64>,
    pub jt_box: RowVector3<f64>,
    /// `γ̈` at zero joint and box accelerations.
    pub gap_drift: f64,
    pub slip_drift: f64,
}

/// Which face each arm presses on: sign of the outward normal along `x_b`.
pub(crate) const FACE_SIGN: [f64; 2] = [-1.0, 1.0];

pub fn contact_kinematics(
    robots: &[RobotParams; 2],
    arms: &[ArmFrame; 2],
    box_params: &BoxParams,
    box_state: &BoxState,
) -> [ContactKinematics; NUM_CONTACTS] {
    let (s, c) = box_state.theta.sin_cos();
    let x_b = Vector2::new(c, s);
    let y_b = Vector2::new(-s, c);
    let w_b = box_state.dtheta;

    std::array::from_fn(|k| {
        let robot = k / CONTACTS_PER_ROBOT;
        let side = if k % CONTACTS_PER_ROBOT == 0 { 1.0 } else { -1.0 };
        let arm = &arms[robot];
        let offset = side * robots[robot].ee_half_width;

        let (st, ct) = arm.pose.theta.sin_cos();
        let x_e = Vector2::new(ct, st);
        let y_e = Vector2::new(-st, ct);

        let point = arm.pose.p + offset * y_e;
        // J_c = J_p - w x_e J_θ
        let jc = arm.jac.jp - offset * x_e * arm.jac.jtheta;
        let point_vel = arm.v - offset * arm.omega * x_e;
        let point_drift = arm.drift - offset * arm.omega * arm.omega * y_e;

        let normal = FACE_SIGN[robot] * x_b;
        let tangent = y_b;
        let r = point - box_state.p;
        let dr = point_vel - box_state.dp;

        let row = |dir: &Vector2<f64>| -> (RowVector3<f64>, RowVector3<f64>, f64, f64, f64) {
            let j_robot = dir.transpose() * jc;
            let j_box = RowVector3::new(-dir.x, -dir.y, perp(dir).dot(&r));
            let coord = dir.dot(&r);
            let rate = dir.dot(&dr) + w_b * perp(dir).dot(&r);
            let drift = dir.dot(&point_drift) - w_b * w_b * dir.dot(&r) + 2.0 * w_b * perp(dir).dot(&dr);
            (j_robot, j_box, coord, rate, drift)
        };
        let (jn_robot, jn_box, dist, gap_rate, gap_drift) = row(&normal);
        let (jt_robot, jt_box, slip, slip_rate, slip_drift) = row(&tangent);

        let overhang = slip.abs() - (0.5 * box_params.height + robots[robot].ee_half_width);
        ContactKinematics {
            robot,
            point,
            normal,
            tangent,
            gap: (dist - box_params.half_width()).max(overhang),
            gap_rate,
            slip,
            slip_rate,
            jn_robot,
            jn_box,
            jt_robot,
            jt_box,
            gap_drift,
            slip_drift,
        }
    })
}

/// Contact Jacobians assembled per body. Rows of contacts that do not
/// belong to robot `i` are zero in `jn_robot[i]` and `jt_robot[i]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContactJacobians {
    pub jn_robot: [Matrix4x3<f64>; 2],
    pub jt_robot: [Matrix4x3<f64>; 2],
    pub jn_box: Matrix4x3<f64>,
    pub jt_box: Matrix4x3<f64>,
}

impl ContactJacobians {
    pub fn from_kinematics(contacts: &[ContactKinematics; NUM_CONTACTS]) -> Self {
        let mut out = ContactJacobians {
            jn_robot: [Matrix4x3::zeros(); 2],
            jt_robot: [Matrix4x3::zeros(); 2],
            jn_box: Matrix4x3::zeros(),
            jt_box: Matrix4x3::zeros(),
        };
        for (k, ck) in contacts.iter().enumerate() {
            out.jn_robot[ck.robot].set_row(k, &ck.jn_robot);
            out.jt_robot[ck.robot].set_row(k, &ck.jt_robot);
            out.jn_box.set_row(k, &ck.jn_box);
            out.jt_box.set_row(k, &ck.jt_box);
        }
        out
    }
}
