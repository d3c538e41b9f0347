//! Kinematics and rigid-body dynamics of a planar 3-link serial arm.
//!
//! Joint angles are relative; the absolute angle of link `k` is the base
//! heading plus the sum of joints `0..=k`. Every quantity is computed from
//! the per-link vectors `L_k = l_k (cos φ_k, sin φ_k)`, which keeps the
//! Jacobians, their time derivatives and the mass matrix in closed form.

use nalgebra::{Matrix2x3, Matrix3, RowVector3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Geometry and inertia of one arm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotParams {
    pub link_lengths: [f64; 3],
    pub link_masses: [f64; 3],
    /// About each link's centre of mass.
    pub link_inertias: [f64; 3],
    /// Distance of each centre of mass from the proximal joint, along the link.
    pub com_offsets: [f64; 3],
    /// `[x, y, heading]` of the first joint in the world frame.
    pub base_pose: [f64; 3],
    /// Half the distance between the two contact points on the end-effector face.
    pub ee_half_width: f64,
    pub joint_damping: [f64; 3],
}

impl RobotParams {
    /// Default arm mounted at `base` with the given heading.
    pub fn with_base(x: f64, y: f64, heading: f64) -> Self {
        let link_lengths = [0.3, 0.3, 0.15];
        let link_masses = [2.0, 1.5, 0.5];
        let mut link_inertias = [0.0; 3];
        let mut com_offsets = [0.0; 3];
        for k in 0..3 {
            link_inertias[k] = link_masses[k] * link_lengths[k] * link_lengths[k] / 12.0;
            com_offsets[k] = 0.5 * link_lengths[k];
        }
        RobotParams {
            link_lengths,
            link_masses,
            link_inertias,
            com_offsets,
            base_pose: [x, y, heading],
            ee_half_width: 0.05,
            joint_damping: [0.05; 3],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = self
            .link_lengths
            .iter()
            .chain(&self.link_masses)
            .chain(&self.link_inertias)
            .all(|v| *v > 0.0 && v.is_finite());
        if !positive {
            return Err(Error::InvalidParameter(
                "link lengths, masses and inertias must be strictly positive".into(),
            ));
        }
        if !(self.ee_half_width > 0.0) {
            return Err(Error::InvalidParameter("ee_half_width must be > 0".into()));
        }
        if self.joint_damping.iter().any(|d| *d < 0.0) {
            return Err(Error::InvalidParameter("joint damping must be >= 0".into()));
        }
        Ok(())
    }

    pub fn base(&self) -> Vector2<f64> {
        Vector2::new(self.base_pose[0], self.base_pose[1])
    }

    pub fn max_reach(&self) -> f64 {
        self.link_lengths.iter().sum()
    }
}

/// Position and heading of a planar frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose2 {
    pub p: Vector2<f64>,
    pub theta: f64,
}

impl Pose2 {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Pose2 {
            p: Vector2::new(x, y),
            theta,
        }
    }
}

/// End-effector Jacobians and their time derivatives for one arm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ArmJacobians {
    pub jp: Matrix2x3<f64>,
    pub jtheta: RowVector3<f64>,
    pub djp: Matrix2x3<f64>,
    pub djtheta: RowVector3<f64>,
}

impl ArmJacobians {
    /// Stacked `[J_p; J_θ]`.
    pub fn stacked(&self) -> Matrix3<f64> {
        let mut j = Matrix3::zeros();
        j.fixed_view_mut::<2, 3>(0, 0).copy_from(&self.jp);
        j.set_row(2, &self.jtheta);
        j
    }
}

/// `(-y, x)`: rotates a planar vector by +90°.
#[inline]
pub fn perp(v: &Vector2<f64>) -> Vector2<f64> {
    Vector2::new(-v.y, v.x)
}

/// Absolute link angles and link vectors.
fn link_vectors(params: &RobotParams, q: &Vector3<f64>) -> ([f64; 3], [Vector2<f64>; 3]) {
    let mut phi = [0.0; 3];
    let mut links = [Vector2::zeros(); 3];
    let mut acc = params.base_pose[2];
    for k in 0..3 {
        acc += q[k];
        phi[k] = acc;
        links[k] = params.link_lengths[k] * Vector2::new(acc.cos(), acc.sin());
    }
    (phi, links)
}

/// End-effector pose. The heading is the plain sum of base heading and
/// joint angles, so it stays continuous along any joint trajectory.
pub fn forward_kinematics(params: &RobotParams, q: &Vector3<f64>) -> Pose2 {
    let (phi, links) = link_vectors(params, q);
    Pose2 {
        p: params.base() + links[0] + links[1] + links[2],
        theta: phi[2],
    }
}

pub fn jacobians(params: &RobotParams, q: &Vector3<f64>, dq: &Vector3<f64>) -> ArmJacobians {
    let (_, links) = link_vectors(params, q);
    let mut rates = [0.0; 3];
    let mut acc = 0.0;
    for k in 0..3 {
        acc += dq[k];
        rates[k] = acc;
    }
    let mut jp = Matrix2x3::zeros();
    let mut djp = Matrix2x3::zeros();
    for j in 0..3 {
        let mut arm = Vector2::zeros();
        let mut darm = Vector2::zeros();
        for k in j..3 {
            arm += links[k];
            darm -= rates[k] * links[k];
        }
        jp.set_column(j, &perp(&arm));
        djp.set_column(j, &darm);
    }
    ArmJacobians {
        jp,
        jtheta: RowVector3::new(1.0, 1.0, 1.0),
        djp,
        djtheta: RowVector3::zeros(),
    }
}

/// Centre-of-mass positions, Jacobians and velocity-product accelerations
/// (`J̇_c q̇`) of the three links.
struct LinkComs {
    pos: [Vector2<f64>; 3],
    jac: [Matrix2x3<f64>; 3],
    drift: [Vector2<f64>; 3],
}

fn link_coms(params: &RobotParams, q: &Vector3<f64>, dq: &Vector3<f64>) -> LinkComs {
    let (_, links) = link_vectors(params, q);
    let mut rates = [0.0; 3];
    let mut acc = 0.0;
    for k in 0..3 {
        acc += dq[k];
        rates[k] = acc;
    }
    let mut pos = [Vector2::zeros(); 3];
    let mut jac = [Matrix2x3::zeros(); 3];
    let mut drift = [Vector2::zeros(); 3];
    let mut joint = params.base();
    for k in 0..3 {
        let frac = params.com_offsets[k] / params.link_lengths[k];
        pos[k] = joint + frac * links[k];
        for j in 0..=k {
            // Vector from joint j to this link's COM.
            let arm = frac * links[k] + links[j..k].iter().sum::<Vector2<f64>>();
            jac[k].set_column(j, &perp(&arm));
        }
        let mut d = -frac * rates[k] * rates[k] * links[k];
        for m in 0..k {
            d -= rates[m] * rates[m] * links[m];
        }
        drift[k] = d;
        joint += links[k];
    }
    LinkComs { pos, jac, drift }
}

/// Joint-space mass matrix and bias vector `h = C(q, q̇) q̇ + g(q) + D q̇`.
///
/// `gravity` is the signed acceleration along world `y` (e.g. `-9.81`).
pub fn mass_bias(
    params: &RobotParams,
    q: &Vector3<f64>,
    dq: &Vector3<f64>,
    gravity: f64,
) -> (Matrix3<f64>, Vector3<f64>) {
    let coms = link_coms(params, q, dq);
    let g = Vector2::new(0.0, gravity);
    let mut m = Matrix3::zeros();
    let mut h = Vector3::zeros();
    for k in 0..3 {
        let jc = &coms.jac[k];
        m += params.link_masses[k] * jc.transpose() * jc;
        // Planar angular Jacobian of link k is ones on joints 0..=k.
        for a in 0..=k {
            for b in 0..=k {
                m[(a, b)] += params.link_inertias[k];
            }
        }
        h += params.link_masses[k] * jc.transpose() * (coms.drift[k] - g);
    }
    for j in 0..3 {
        h[j] += params.joint_damping[j] * dq[j];
    }
    (m, h)
}

/// Kinetic plus gravitational potential energy of the arm.
pub fn mechanical_energy(params: &RobotParams, q: &Vector3<f64>, dq: &Vector3<f64>, gravity: f64) -> f64 {
    let (m, _) = mass_bias(params, q, dq, gravity);
    let coms = link_coms(params, q, dq);
    let potential: f64 = (0..3).map(|k| -params.link_masses[k] * gravity * coms.pos[k].y).sum();
    0.5 * dq.dot(&(m * dq)) + potential
}

/// Gravity torque `g(q)` alone.
pub fn gravity_torque(params: &RobotParams, q: &Vector3<f64>, gravity: f64) -> Vector3<f64> {
    let zero = Vector3::zeros();
    mass_bias(params, q, &zero, gravity).1
}

/// Inverse kinematics for an end-effector pose. Of the two elbow
/// solutions the one with the elbow higher in world `y` is returned.
/// Returns `None` when the wrist is out of reach.
pub fn inverse_kinematics(params: &RobotParams, target: &Pose2) -> Option<Vector3<f64>> {
    let [l1, l2, l3] = params.link_lengths;
    let heading = params.base_pose[2];
    let wrist = target.p - l3 * Vector2::new(target.theta.cos(), target.theta.sin());
    let rel = wrist - params.base();
    let (s, c) = (-heading).sin_cos();
    let local = Vector2::new(c * rel.x - s * rel.y, s * rel.x + c * rel.y);
    let r2 = local.norm_squared();
    let cos_q2 = (r2 - l1 * l1 - l2 * l2) / (2.0 * l1 * l2);
    if !(-1.0..=1.0).contains(&cos_q2) {
        return None;
    }
    let candidates = [cos_q2.acos(), -cos_q2.acos()].map(|q2: f64| {
        let q1 = local.y.atan2(local.x) - (l2 * q2.sin()).atan2(l1 + l2 * q2.cos());
        let q3 = crate::fields::wrap_to_pi(target.theta - heading - q1 - q2);
        Vector3::new(q1, q2, q3)
    });
    let elbow_y = |q: &Vector3<f64>| params.base_pose[1] + l1 * (heading + q[0]).sin();
    let best = if elbow_y(&candidates[1]) > elbow_y(&candidates[0]) {
        candidates[1]
    } else {
        candidates[0]
    };
    Some(best)
}
