//! Ante-impact and interim QPs. Decision vector `(q̈₁, q̈₂, τ₁, τ₂)`.

use nalgebra::{DMatrix, DVector, Matrix2, Matrix3, Vector2, Vector3};

use super::tasks::{dyn_block, torque_bounds, CostBuilder};
use super::ControlModel;
use crate::dynamics::{jacobians, mass_bias, ArmFrame, RobotParams, RobotState};
use crate::fields::{
    ante_angular_acceleration, ante_angular_field, ante_linear_field, field_acceleration, AnteFieldParams,
};
use crate::qp::QpProblem;

pub const ANTE_VARS: usize = 12;
pub(crate) const QDD: [usize; 2] = [0, 3];
pub(crate) const TAU: [usize; 2] = [6, 9];

/// Reflection of robot 2's position across the estimated box `y` axis.
/// Returns the mirrored point and the velocity map `T_s`.
pub fn mirror_pose(p2: &Vector2<f64>, p_b_est: &Vector2<f64>, theta_b_est: f64) -> (Vector2<f64>, Matrix2<f64>) {
    let (s, c) = theta_b_est.sin_cos();
    let rot = Matrix2::new(c, -s, s, c);
    let ts = rot * Matrix2::new(-1.0, 0.0, 0.0, 1.0) * rot.transpose();
    (ts * (p2 - p_b_est) + p_b_est, ts)
}

/// Reference values at the measured poses, kept for logging.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ReferenceTerms {
    pub linear: [Vector2<f64>; 2],
    pub angular: [f64; 2],
    /// `p_{2,m} − p₁`.
    pub sync_error: Vector2<f64>,
    pub singular: bool,
}

fn linear_reference(
    p: &Vector2<f64>,
    robot: usize,
    ante: &AnteFieldParams,
    step: f64,
) -> (Vector2<f64>, Vector2<f64>, bool) {
    let v = ante_linear_field(p, robot, ante);
    let a = field_acceleration(|x| ante_linear_field(x, robot, ante), p, step);
    (v.v, a.v, v.singular || a.singular)
}

fn add_dynamics(qp: &mut QpProblem, m: &[Matrix3<f64>; 2], h: &[Vector3<f64>; 2], model: &ControlModel) {
    let mut a_eq = DMatrix::zeros(6, ANTE_VARS);
    let mut b_eq = DVector::zeros(6);
    for i in 0..2 {
        a_eq.view_mut((3 * i, QDD[i]), (3, 3)).copy_from(&m[i]);
        a_eq.view_mut((3 * i, TAU[i]), (3, 3))
            .copy_from(&(-Matrix3::identity()));
        b_eq.rows_mut(3 * i, 3).copy_from(&(-h[i]));
    }
    qp.a_eq = a_eq;
    qp.b_eq = b_eq;
    let (a_in, lb, ub) = torque_bounds(ANTE_VARS, &TAU, model.gains.tau_min, model.gains.tau_max);
    qp.a_in = a_in;
    qp.lb = lb;
    qp.ub = ub;
}

pub fn build_ante_qp(model: &ControlModel, states: &[RobotState; 2]) -> (QpProblem, ReferenceTerms) {
    build_ante_qp_weighted(model, states, model.gains.w_a_s)
}

pub(crate) fn build_ante_qp_weighted(
    model: &ControlModel,
    states: &[RobotState; 2],
    w_sync: f64,
) -> (QpProblem, ReferenceTerms) {
    let gains = &model.gains;
    let step = model.fields.fd_step;
    let gravity = model.box_params.gravity;
    let frames: [ArmFrame; 2] = std::array::from_fn(|i| ArmFrame::new(&model.robots[i], &states[i].q, &states[i].dq));
    let mut cost = CostBuilder::new(ANTE_VARS);
    let mut terms = ReferenceTerms::default();
    let mut ms = [Matrix3::zeros(); 2];
    let mut hs = [Vector3::zeros(); 2];

    for i in 0..2 {
        let f = &frames[i];
        let (v_d, a_d, singular) = linear_reference(&f.pose.p, i, &model.ante, step);
        let w_d = ante_angular_field(f.pose.theta, i, &model.ante);
        let dw_d = ante_angular_acceleration(f.pose.theta, i, &model.ante);
        terms.linear[i] = v_d;
        terms.angular[i] = w_d;
        terms.singular |= singular;

        let b_p = a_d + gains.k_a_p * (v_d - f.v) - f.drift;
        cost.add(
            gains.w_a_p,
            &[(QDD[i], &dyn_block(&f.jac.jp))],
            &DVector::from_column_slice(b_p.as_slice()),
        );
        let djw = (f.jac.djtheta * states[i].dq)[0];
        let b_t = dw_d + gains.k_a_theta * (w_d - f.omega) - djw;
        cost.add(
            gains.w_a_theta,
            &[(QDD[i], &dyn_block(&f.jac.jtheta))],
            &DVector::from_element(1, b_t),
        );

        let (m, h) = mass_bias(&model.robots[i], &states[i].q, &states[i].dq, gravity);
        ms[i] = m;
        hs[i] = h;
    }

    let (p2m, ts) = mirror_pose(&frames[1].pose.p, &model.ante.p_b_est, model.ante.theta_b_est);
    terms.sync_error = p2m - frames[0].pose.p;
    if w_sync > 0.0 {
        let b_s = -frames[0].drift
            + ts * frames[1].drift
            + gains.k_sync_pp * (p2m - frames[0].pose.p)
            + gains.k_sync_pd * (ts * frames[1].v - frames[0].v);
        let a2 = -(ts * frames[1].jac.jp);
        cost.add(
            w_sync,
            &[(QDD[0], &dyn_block(&frames[0].jac.jp)), (QDD[1], &dyn_block(&a2))],
            &DVector::from_column_slice(b_s.as_slice()),
        );
    }

    let (h, g) = cost.finish();
    let mut qp = QpProblem::new(ANTE_VARS);
    qp.h = h;
    qp.g = g;
    add_dynamics(&mut qp, &ms, &hs, model);
    (qp, terms)
}

/// Nominal joint velocity realizing the ante-impact reference at `q`.
/// Falls back to damped least squares when the stacked Jacobian is
/// near-singular; the flag reports the fallback.
pub fn nominal_joint_velocity(
    params: &RobotParams,
    q: &Vector3<f64>,
    v_lin: &Vector2<f64>,
    omega: f64,
) -> (Vector3<f64>, bool) {
    let j = jacobians(params, q, &Vector3::zeros()).stacked();
    let rhs = Vector3::new(v_lin.x, v_lin.y, omega);
    let sv = j.singular_values();
    let cond = sv.max() / sv.min();
    if cond.is_finite() && cond <= 1e8 {
        if let Some(dq) = j.lu().solve(&rhs) {
            return (dq, false);
        }
    }
    let damping: f64 = 1e-6;
    let jjt = j * j.transpose() + Matrix3::identity() * damping * damping;
    let dq = j.transpose() * jjt.lu().solve(&rhs).unwrap_or_else(Vector3::zeros);
    (dq, true)
}

/// Integrated interim position and orientation references.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InterimReference {
    pub p: [Vector2<f64>; 2],
    pub theta: [f64; 2],
}

/// One explicit Euler step of the integrated references along the ante field.
pub fn update_interim_ref(refs: &mut InterimReference, ante: &AnteFieldParams, dt: f64) {
    for i in 0..2 {
        let v = ante_linear_field(&refs.p[i], i, ante).v;
        let w = ante_angular_field(refs.theta[i], i, ante);
        refs.p[i] += v * dt;
        refs.theta[i] += w * dt;
    }
}

/// Interim QP. Only joint positions enter: the measured joint velocities are
/// replaced by the nominal ones throughout.
pub fn build_interim_qp(
    model: &ControlModel,
    q: &[Vector3<f64>; 2],
    refs: &InterimReference,
) -> (QpProblem, ReferenceTerms) {
    let gains = &model.gains;
    let step = model.fields.fd_step;
    let gravity = model.box_params.gravity;
    let mut cost = CostBuilder::new(ANTE_VARS);
    let mut terms = ReferenceTerms::default();
    let mut ms = [Matrix3::zeros(); 2];
    let mut hs = [Vector3::zeros(); 2];
    let mut poses = [Vector2::zeros(); 2];

    for i in 0..2 {
        let params = &model.robots[i];
        let pose = crate::dynamics::forward_kinematics(params, &q[i]);
        poses[i] = pose.p;
        let (v_d, a_d, singular) = linear_reference(&pose.p, i, &model.ante, step);
        let w_d = ante_angular_field(pose.theta, i, &model.ante);
        let dw_d = ante_angular_acceleration(pose.theta, i, &model.ante);
        let (dq_int, fallback) = nominal_joint_velocity(params, &q[i], &v_d, w_d);
        terms.linear[i] = v_d;
        terms.angular[i] = w_d;
        terms.singular |= singular || fallback;

        let jac = jacobians(params, &q[i], &dq_int);
        let b_p = a_d + gains.k_int_p * (refs.p[i] - pose.p) - jac.djp * dq_int;
        cost.add(
            gains.w_a_p,
            &[(QDD[i], &dyn_block(&jac.jp))],
            &DVector::from_column_slice(b_p.as_slice()),
        );
        let b_t = dw_d + gains.k_int_theta * (refs.theta[i] - pose.theta) - (jac.djtheta * dq_int)[0];
        cost.add(
            gains.w_a_theta,
            &[(QDD[i], &dyn_block(&jac.jtheta))],
            &DVector::from_element(1, b_t),
        );

        let (m, h) = mass_bias(params, &q[i], &dq_int, gravity);
        ms[i] = m;
        hs[i] = h;
    }
    let (p2m, _) = mirror_pose(&poses[1], &model.ante.p_b_est, model.ante.theta_b_est);
    terms.sync_error = p2m - poses[0];

    let (h, g) = cost.finish();
    let mut qp = QpProblem::new(ANTE_VARS);
    qp.h = h;
    qp.g = g;
    add_dynamics(&mut qp, &ms, &hs, model);
    (qp, terms)
}
