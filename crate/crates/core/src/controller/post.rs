//! Post-impact QP on the grasped box, with contact forces as decision
//! variables. Decision vector
//! `(q̈₁, q̈₂, q̈_b, τ₁, τ₂, λ_N[4], f_T[4])`, where `f_T` is the signed
//! tangential force along the box `y` axis acting on the end effector.

use nalgebra::{DMatrix, DVector, Matrix3, Vector2, Vector3};

use super::tasks::CostBuilder;
use super::ControlModel;
use crate::dynamics::{
    box_mass_bias, contact_kinematics, forward_kinematics, mass_bias, ArmFrame, BoxState, ContactJacobians,
    RobotParams, RobotState, NUM_CONTACTS,
};
use crate::fields::{
    post_angular_acceleration, post_angular_field, post_linear_acceleration, post_linear_field, wrap_to_pi,
    PostFieldParams,
};
use crate::qp::QpProblem;

pub const POST_VARS: usize = 23;
pub(crate) const QDD: [usize; 2] = [0, 3];
pub(crate) const QDD_BOX: usize = 6;
pub(crate) const TAU: [usize; 2] = [9, 12];
pub(crate) const LAMBDA_N: usize = 15;
pub(crate) const FORCE_T: usize = 19;

/// Box pose and twist from the end-effector frames, assuming each face is
/// grasped at its centre. Robot 2's heading is shifted by π before averaging.
pub fn estimate_box_state(robots: &[RobotParams; 2], states: &[RobotState; 2]) -> BoxState {
    let frames: [ArmFrame; 2] = std::array::from_fn(|i| ArmFrame::new(&robots[i], &states[i].q, &states[i].dq));
    let t1 = frames[0].pose.theta;
    let t2 = frames[1].pose.theta - std::f64::consts::PI;
    BoxState {
        p: 0.5 * (frames[0].pose.p + frames[1].pose.p),
        theta: t1 + 0.5 * wrap_to_pi(t2 - t1),
        dp: 0.5 * (frames[0].v + frames[1].v),
        dtheta: 0.5 * (frames[0].omega + frames[1].omega),
    }
}

/// End-effector offsets along the box `y` axis of a given box pose.
pub fn vertical_offsets(
    robots: &[RobotParams; 2],
    q: &[Vector3<f64>; 2],
    p_b: &Vector2<f64>,
    theta_b: f64,
) -> [f64; 2] {
    let y_b = Vector2::new(-theta_b.sin(), theta_b.cos());
    std::array::from_fn(|i| y_b.dot(&(forward_kinematics(&robots[i], &q[i]).p - p_b)))
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PostTerms {
    /// Box reference twist at the estimate.
    pub box_reference: Vector3<f64>,
}

pub fn build_post_qp(
    model: &ControlModel,
    states: &[RobotState; 2],
    box_est: &BoxState,
    post: &PostFieldParams,
) -> (QpProblem, PostTerms) {
    let gains = &model.gains;
    let gravity = model.box_params.gravity;
    let step = model.fields.fd_step;
    let frames: [ArmFrame; 2] = std::array::from_fn(|i| ArmFrame::new(&model.robots[i], &states[i].q, &states[i].dq));
    let contacts = contact_kinematics(&model.robots, &frames, &model.box_params, box_est);
    let jac = ContactJacobians::from_kinematics(&contacts);

    let n = POST_VARS;
    let mut qp = QpProblem::new(n);

    // Equalities: 2×3 robot dynamics, 3 box dynamics, 4 normal and 2 tangential
    // contact accelerations.
    let m_eq = 6 + 3 + NUM_CONTACTS + 2;
    let mut a_eq = DMatrix::zeros(m_eq, n);
    let mut b_eq = DVector::zeros(m_eq);
    for i in 0..2 {
        let (m, h) = mass_bias(&model.robots[i], &states[i].q, &states[i].dq, gravity);
        let r = 3 * i;
        a_eq.view_mut((r, QDD[i]), (3, 3)).copy_from(&m);
        a_eq.view_mut((r, TAU[i]), (3, 3)).copy_from(&(-Matrix3::identity()));
        a_eq.view_mut((r, LAMBDA_N), (3, 4))
            .copy_from(&(-jac.jn_robot[i].transpose()));
        a_eq.view_mut((r, FORCE_T), (3, 4))
            .copy_from(&(-jac.jt_robot[i].transpose()));
        b_eq.rows_mut(r, 3).copy_from(&(-h));
    }
    let (mb, hb) = box_mass_bias(&model.box_params);
    a_eq.view_mut((6, QDD_BOX), (3, 3)).copy_from(&mb);
    a_eq.view_mut((6, LAMBDA_N), (3, 4))
        .copy_from(&(-jac.jn_box.transpose()));
    a_eq.view_mut((6, FORCE_T), (3, 4))
        .copy_from(&(-jac.jt_box.transpose()));
    b_eq.rows_mut(6, 3).copy_from(&(-hb));
    for (k, c) in contacts.iter().enumerate() {
        let r = 9 + k;
        a_eq.view_mut((r, QDD[c.robot]), (1, 3)).copy_from(&c.jn_robot);
        a_eq.view_mut((r, QDD_BOX), (1, 3)).copy_from(&c.jn_box);
        b_eq[r] = -c.gap_drift;
    }
    for (j, k) in [0usize, 2].into_iter().enumerate() {
        let c = &contacts[k];
        let r = 13 + j;
        a_eq.view_mut((r, QDD[c.robot]), (1, 3)).copy_from(&c.jt_robot);
        a_eq.view_mut((r, QDD_BOX), (1, 3)).copy_from(&c.jt_box);
        b_eq[r] = -c.slip_drift;
    }
    qp.a_eq = a_eq;
    qp.b_eq = b_eq;

    // Inequalities: torque bounds, minimum normal force, friction cone.
    let m_in = 6 + NUM_CONTACTS + 2 * NUM_CONTACTS;
    let mut a_in = DMatrix::zeros(m_in, n);
    let mut lb = DVector::zeros(m_in);
    let mut ub = DVector::zeros(m_in);
    for i in 0..2 {
        for j in 0..3 {
            let r = 3 * i + j;
            a_in[(r, TAU[i] + j)] = 1.0;
            lb[r] = gains.tau_min;
            ub[r] = gains.tau_max;
        }
    }
    for k in 0..NUM_CONTACTS {
        let r = 6 + k;
        a_in[(r, LAMBDA_N + k)] = 1.0;
        lb[r] = gains.min_normal_force;
        ub[r] = f64::INFINITY;
        let r = 10 + 2 * k;
        a_in[(r, FORCE_T + k)] = 1.0;
        a_in[(r, LAMBDA_N + k)] = -gains.mu_est;
        lb[r] = f64::NEG_INFINITY;
        ub[r] = 0.0;
        a_in[(r + 1, FORCE_T + k)] = 1.0;
        a_in[(r + 1, LAMBDA_N + k)] = gains.mu_est;
        lb[r + 1] = 0.0;
        ub[r + 1] = f64::INFINITY;
    }
    qp.a_in = a_in;
    qp.lb = lb;
    qp.ub = ub;

    // Box tracking, force distribution and force norm.
    let mut cost = CostBuilder::new(n);
    let v_d = post_linear_field(&box_est.p, post);
    let a_d = post_linear_acceleration(&box_est.p, post, step);
    let w_d = post_angular_field(box_est.theta, &box_est.p, post);
    let dw_d = post_angular_acceleration(box_est.theta, &box_est.p, post, step);
    let b_p = a_d + gains.k_p_p * (v_d - box_est.dp);
    cost.add(
        gains.w_p_p,
        &[(QDD_BOX, &DMatrix::identity(2, 2))],
        &DVector::from_column_slice(b_p.as_slice()),
    );
    let b_t = dw_d + gains.k_p_theta * (w_d - box_est.dtheta);
    cost.add(
        gains.w_p_theta,
        &[(QDD_BOX + 2, &DMatrix::identity(1, 1))],
        &DVector::from_element(1, b_t),
    );
    let pair = DMatrix::from_row_slice(1, 2, &[1.0, -1.0]);
    cost.add(gains.w_p_lambda, &[(LAMBDA_N, &pair)], &DVector::zeros(1));
    cost.add(gains.w_p_lambda, &[(LAMBDA_N + 2, &pair)], &DVector::zeros(1));
    cost.add(gains.w_p_n, &[(LAMBDA_N, &DMatrix::identity(4, 4))], &DVector::zeros(4));
    let (h, g) = cost.finish();
    qp.h = h;
    qp.g = g;

    (
        qp,
        PostTerms {
            box_reference: Vector3::new(v_d.x, v_d.y, w_d),
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::tests::test_model;
    use crate::dynamics::{inverse_kinematics, jacobians, Pose2};
    use crate::fields::FieldConfig;
    use crate::qp::{solve, QpStatus};
    use std::f64::consts::PI;

    fn grasp(model: &ControlModel, dy: [f64; 2]) -> [RobotState; 2] {
        let half = model.box_params.half_width();
        let poses = [Pose2::new(-half, dy[0], 0.0), Pose2::new(half, dy[1], PI)];
        std::array::from_fn(|i| {
            RobotState::rigid(
                inverse_kinematics(&model.robots[i], &poses[i]).unwrap(),
                Vector3::zeros(),
            )
        })
    }

    #[test]
    fn centred_grasp_estimate_is_exact() {
        let model = test_model();
        let est = estimate_box_state(&model.robots, &grasp(&model, [0.0, 0.0]));
        assert!(est.p.norm() < 1e-12);
        assert!(est.theta.abs() < 1e-12);
    }

    #[test]
    fn opposite_offsets_cancel() {
        let model = test_model();
        let est = estimate_box_state(&model.robots, &grasp(&model, [0.02, -0.02]));
        assert!(est.p.norm() < 1e-12);
    }

    #[test]
    fn common_translation_velocity() {
        let model = test_model();
        let mut states = grasp(&model, [0.0, 0.0]);
        let v = Vector2::new(0.05, -0.1);
        for (params, s) in model.robots.iter().zip(states.iter_mut()) {
            let j = jacobians(params, &s.q, &Vector3::zeros()).stacked();
            s.dq = j.try_inverse().unwrap() * Vector3::new(v.x, v.y, 0.0);
        }
        let est = estimate_box_state(&model.robots, &states);
        assert!((est.dp - v).norm() < 1e-12);
        assert!(est.dtheta.abs() < 1e-12);
    }

    fn static_setup(gravity: f64) -> (ControlModel, [RobotState; 2], BoxState, PostFieldParams) {
        let mut model = test_model();
        model.box_params.gravity = gravity;
        let states = grasp(&model, [0.0, 0.0]);
        let est = estimate_box_state(&model.robots, &states);
        // Goal at the current pose, far from the entry point: zero reference.
        let cfg = FieldConfig {
            box_goal: [est.p.x, est.p.y, est.theta],
            ..FieldConfig::default()
        };
        let post = PostFieldParams::attractor_only(&cfg, est.p);
        (model, states, est, post)
    }

    #[test]
    fn static_hold_carries_box_weight() {
        let (mut model, states, est, post) = static_setup(-9.81);
        let m = model.box_params.mass;
        // The force-norm term trades a little box acceleration for smaller
        // forces; the vertical balance holds exactly either way.
        let (qp, _) = build_post_qp(&model, &states, &est, &post);
        let s = solve(&qp, None).unwrap();
        let support: f64 = -s.x.rows(FORCE_T, 4).sum();
        assert!((support - m * (s.x[QDD_BOX + 1] + 9.81)).abs() < 1e-6);
        // With that term negligible the box is held still.
        model.gains.w_p_n = 1e-12;
        let (qp, _) = build_post_qp(&model, &states, &est, &post);
        let s = solve(&qp, None).unwrap();
        assert_eq!(s.status, QpStatus::Optimal);
        let ln = s.x.rows(LAMBDA_N, 4);
        assert!((ln[0] - ln[1]).abs() < 1e-6 && (ln[2] - ln[3]).abs() < 1e-6);
        // Box y axis is world y; the box receives −f_T along it.
        let support: f64 = -s.x.rows(FORCE_T, 4).sum();
        assert!((support - m * 9.81).abs() < 1e-6, "support {support}");
        for k in 0..4 {
            assert!(s.x[FORCE_T + k].abs() <= model.gains.mu_est * ln[k] + 1e-8);
        }
    }

    #[test]
    fn contact_accelerations_vanish() {
        let (model, mut states, _, _) = static_setup(0.0);
        states[0].dq = Vector3::new(0.2, -0.1, 0.3);
        states[1].dq = Vector3::new(-0.1, 0.2, 0.1);
        let est = estimate_box_state(&model.robots, &states);
        let cfg = FieldConfig {
            box_goal: [0.0, 0.08, 0.0],
            ..FieldConfig::default()
        };
        let post = PostFieldParams::blended(&cfg, est.p, Vector2::new(0.02, 0.01), 0.1);
        let (qp, _) = build_post_qp(&model, &states, &est, &post);
        let s = solve(&qp, None).unwrap();
        assert_eq!(s.status, QpStatus::Optimal);
        let res = &qp.a_eq * &s.x - &qp.b_eq;
        assert!(res.rows(9, 4).amax() < 1e-8);
    }

    #[test]
    fn symmetric_force_distribution() {
        let (model, states, est, _) = static_setup(0.0);
        let cfg = FieldConfig {
            box_goal: [0.0, 0.08, 0.0],
            ..FieldConfig::default()
        };
        let post = PostFieldParams::attractor_only(&cfg, est.p);
        let s = solve(&build_post_qp(&model, &states, &est, &post).0, None).unwrap();
        let ln = s.x.rows(LAMBDA_N, 4);
        assert!((ln[0] - ln[1]).abs() < 1e-6);
        assert!((ln[2] - ln[3]).abs() < 1e-6);
    }

    #[test]
    fn heavier_force_norm_weight_reduces_forces() {
        let (mut model, states, est, _) = static_setup(-9.81);
        let cfg = FieldConfig {
            box_goal: [0.02, 0.08, 0.1],
            ..FieldConfig::default()
        };
        let post = PostFieldParams::attractor_only(&cfg, est.p);
        let a = solve(&build_post_qp(&model, &states, &est, &post).0, None).unwrap();
        model.gains.w_p_n *= 100.0;
        let b = solve(&build_post_qp(&model, &states, &est, &post).0, None).unwrap();
        let norm = |x: &DVector<f64>| x.rows(LAMBDA_N, 4).norm();
        assert!(norm(&b.x) <= norm(&a.x) + 1e-9);
    }
}
