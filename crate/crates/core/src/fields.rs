//! Time-invariant reference velocity fields.
//!
//! Before impact each end effector follows a linear field that funnels it
//! onto an approach ray ending at the desired impact point, blended into the
//! constant impact velocity inside a ball around the estimated box centre,
//! and an angular field that aligns it with its box face. After impact the
//! box follows an attractor towards its goal pose, blended near the
//! post-impact entry point into the predicted post-impact velocity.

use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::dynamics::BoxParams;
use crate::error::{Error, Result};

/// Wraps an angle into `(-π, π]`.
pub fn wrap_to_pi(angle: f64) -> f64 {
    angle - TAU * ((angle - PI) / TAU).ceil()
}

/// First-order smoothstep: 0 up to `r_min`, 1 from `r_max`, `3w² − 2w³` between.
pub fn smoothstep(r: f64, r_min: f64, r_max: f64) -> f64 {
    debug_assert!(r_max > r_min);
    if r <= r_min {
        0.0
    } else if r >= r_max {
        1.0
    } else {
        let w = (r - r_min) / (r_max - r_min);
        w * w * (3.0 - 2.0 * w)
    }
}

/// Field parameters as they appear in the config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FieldConfig {
    /// A-priori box estimate `[x, y, θ]` used by every pre-impact reference.
    pub box_estimate: [f64; 3],
    /// Desired impact speed, directed along the inward face normal.
    pub impact_speed: f64,
    /// Shaping parameter α (1/s).
    pub alpha: f64,
    /// `r_min` as a multiple of the largest impact-point distance from the box centre.
    pub r_min_factor: f64,
    /// `r_max` as a multiple of `r_min`.
    pub r_max_factor: f64,
    pub kappa_theta: f64,
    /// Box goal `[x, y, θ]`.
    pub box_goal: [f64; 3],
    pub kappa_post_p: f64,
    pub kappa_post_theta: f64,
    /// Upper bound of the post-impact blending radius (m).
    pub r_max_post_cap: f64,
    /// Finite-difference step for reference accelerations (m).
    pub fd_step: f64,
}

impl Default for FieldConfig {
    fn default() -> Self {
        FieldConfig {
            box_estimate: [0.0, 0.0, 0.0],
            impact_speed: 0.4,
            alpha: 3.0,
            r_min_factor: 1.2,
            r_max_factor: 1.5,
            kappa_theta: 4.0,
            box_goal: [0.1, -0.15, 0.0],
            kappa_post_p: 2.0,
            kappa_post_theta: 2.0,
            r_max_post_cap: 0.05,
            fd_step: 1e-6,
        }
    }
}

impl FieldConfig {
    pub fn box_estimate_position(&self) -> Vector2<f64> {
        Vector2::new(self.box_estimate[0], self.box_estimate[1])
    }

    pub fn box_goal_position(&self) -> Vector2<f64> {
        Vector2::new(self.box_goal[0], self.box_goal[1])
    }
}

/// A field sample; `singular` marks the degenerate point of the
/// unextended linear field where the impact velocity is returned instead.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldValue {
    pub v: Vector2<f64>,
    pub singular: bool,
}

impl FieldValue {
    fn regular(v: Vector2<f64>) -> Self {
        FieldValue { v, singular: false }
    }
}

/// Pre-impact reference for both end effectors.
#[derive(Clone, Debug, PartialEq)]
pub struct AnteFieldParams {
    pub p_imp: [Vector2<f64>; 2],
    pub v_imp: [Vector2<f64>; 2],
    pub alpha: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub kappa_theta: f64,
    pub p_b_est: Vector2<f64>,
    pub theta_b_est: f64,
}

const SINGULAR_NORM: f64 = 1e-9;

impl AnteFieldParams {
    /// Impact points at the estimated centres of the two box faces, impact
    /// velocities along the inward normals.
    pub fn from_config(cfg: &FieldConfig, box_params: &BoxParams) -> Result<Self> {
        let p_b_est = cfg.box_estimate_position();
        let theta_b_est = cfg.box_estimate[2];
        let x_b = Vector2::new(theta_b_est.cos(), theta_b_est.sin());
        let half = box_params.half_width();
        let p_imp = [p_b_est - half * x_b, p_b_est + half * x_b];
        let v_imp = [cfg.impact_speed * x_b, -cfg.impact_speed * x_b];
        let reach = p_imp.iter().map(|p| (p - p_b_est).norm()).fold(0.0, f64::max);
        let r_min = cfg.r_min_factor * reach;
        let params = AnteFieldParams {
            p_imp,
            v_imp,
            alpha: cfg.alpha,
            r_min,
            r_max: cfg.r_max_factor * r_min,
            kappa_theta: cfg.kappa_theta,
            p_b_est,
            theta_b_est,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        let reach = self.p_imp.iter().map(|p| (p - self.p_b_est).norm()).fold(0.0, f64::max);
        if !(self.r_max > self.r_min && self.r_min > reach) {
            return Err(Error::InvalidParameter(format!(
                "need r_max > r_min > {reach}, got r_min = {}, r_max = {}",
                self.r_min, self.r_max
            )));
        }
        if self.v_imp.iter().any(|v| !(v.norm() > 0.0)) {
            return Err(Error::InvalidParameter("impact velocity must be nonzero".into()));
        }
        if !(self.alpha > 0.0 && self.kappa_theta > 0.0) {
            return Err(Error::InvalidParameter("alpha and kappa_theta must be > 0".into()));
        }
        Ok(())
    }

    /// Nominal heading of robot `robot`'s end effector at impact (before wrapping).
    pub fn nominal_heading(&self, robot: usize) -> f64 {
        self.theta_b_est + if robot == 0 { 0.0 } else { PI }
    }

    /// Target heading shifted by a whole number of turns so that the error
    /// to `theta` lies in `(-π, π]`.
    pub fn target_heading(&self, robot: usize, theta: f64) -> f64 {
        theta + wrap_to_pi(self.nominal_heading(robot) - theta)
    }
}

/// Linear field before the impact-ball extension: unit direction towards
/// the intermediate target on the approach ray, scaled to the impact speed.
pub fn ante_linear_field_unextended(p: &Vector2<f64>, robot: usize, params: &AnteFieldParams) -> FieldValue {
    let v_imp = params.v_imp[robot];
    let p_imp = params.p_imp[robot];
    let speed = v_imp.norm();
    let p_t = p_imp - v_imp * ((p_imp - p).norm() / speed);
    let dir = v_imp + params.alpha * (p_t - p);
    let n = dir.norm();
    if n < SINGULAR_NORM {
        FieldValue {
            v: v_imp,
            singular: true,
        }
    } else {
        FieldValue::regular(dir * (speed / n))
    }
}

pub fn ante_linear_field(p: &Vector2<f64>, robot: usize, params: &AnteFieldParams) -> FieldValue {
    let beta = smoothstep((p - params.p_b_est).norm(), params.r_min, params.r_max);
    let v_imp = params.v_imp[robot];
    if beta == 0.0 {
        return FieldValue::regular(v_imp);
    }
    let outer = ante_linear_field_unextended(p, robot, params);
    FieldValue {
        v: beta * outer.v + (1.0 - beta) * v_imp,
        singular: outer.singular,
    }
}

pub fn ante_angular_field(theta: f64, robot: usize, params: &AnteFieldParams) -> f64 {
    params.kappa_theta * wrap_to_pi(params.nominal_heading(robot) - theta)
}

/// `θ̈_d = (∂θ̇_d/∂θ) θ̇_d` for the linear angular law.
pub fn ante_angular_acceleration(theta: f64, robot: usize, params: &AnteFieldParams) -> f64 {
    -params.kappa_theta * ante_angular_field(theta, robot, params)
}

/// Central-difference Jacobian of a planar field.
fn field_jacobian<F>(field: &F, p: &Vector2<f64>, step: f64) -> (Matrix2<f64>, bool)
where
    F: Fn(&Vector2<f64>) -> FieldValue,
{
    let mut jac = Matrix2::zeros();
    let mut singular = false;
    for axis in 0..2 {
        let mut e = Vector2::zeros();
        e[axis] = step;
        let fp = field(&(p + e));
        let fm = field(&(p - e));
        singular |= fp.singular || fm.singular;
        jac.set_column(axis, &((fp.v - fm.v) / (2.0 * step)));
    }
    (jac, singular)
}

/// Acceleration of a particle riding the field: `(∂f/∂p) f(p)`.
pub fn field_acceleration<F>(field: F, p: &Vector2<f64>, step: f64) -> FieldValue
where
    F: Fn(&Vector2<f64>) -> FieldValue,
{
    let here = field(p);
    let (jac, singular) = field_jacobian(&field, p, step);
    FieldValue {
        v: jac * here.v,
        singular: singular || here.singular,
    }
}

/// Post-impact box reference.
#[derive(Clone, Debug, PartialEq)]
pub struct PostFieldParams {
    pub p_bf: Vector2<f64>,
    pub theta_bf: f64,
    pub kappa_p: f64,
    pub kappa_theta: f64,
    /// Blending radius; `0` disables the blend (pure attractor).
    pub r_max: f64,
    /// Predicted post-impact linear velocity.
    pub dp_plus: Vector2<f64>,
    pub dtheta_plus: f64,
    /// Box position at post-impact entry.
    pub p_plus: Vector2<f64>,
}

impl PostFieldParams {
    /// Attractor blended with the predicted post-impact velocity near `p_plus`.
    pub fn blended(cfg: &FieldConfig, p_plus: Vector2<f64>, dp_plus: Vector2<f64>, dtheta_plus: f64) -> Self {
        let p_bf = cfg.box_goal_position();
        PostFieldParams {
            p_bf,
            theta_bf: cfg.box_goal[2],
            kappa_p: cfg.kappa_post_p,
            kappa_theta: cfg.kappa_post_theta,
            r_max: cfg.r_max_post_cap.min((p_bf - p_plus).norm()),
            dp_plus,
            dtheta_plus,
            p_plus,
        }
    }

    /// Attractor everywhere; the impact prediction is ignored.
    pub fn attractor_only(cfg: &FieldConfig, p_plus: Vector2<f64>) -> Self {
        PostFieldParams {
            r_max: 0.0,
            ..Self::blended(cfg, p_plus, Vector2::zeros(), 0.0)
        }
    }

    pub fn blend(&self, p_b: &Vector2<f64>) -> f64 {
        if self.r_max <= 0.0 {
            1.0
        } else {
            smoothstep((self.p_plus - p_b).norm(), 0.0, self.r_max)
        }
    }
}

pub fn post_linear_field(p_b: &Vector2<f64>, params: &PostFieldParams) -> Vector2<f64> {
    let beta = params.blend(p_b);
    beta * params.kappa_p * (params.p_bf - p_b) + (1.0 - beta) * params.dp_plus
}

/// Angular box reference; the blend weight depends on the box position.
pub fn post_angular_field(theta_b: f64, p_b: &Vector2<f64>, params: &PostFieldParams) -> f64 {
    let beta = params.blend(p_b);
    beta * params.kappa_theta * (params.theta_bf - theta_b) + (1.0 - beta) * params.dtheta_plus
}

pub fn post_linear_acceleration(p_b: &Vector2<f64>, params: &PostFieldParams, step: f64) -> Vector2<f64> {
    field_acceleration(|p| FieldValue::regular(post_linear_field(p, params)), p_b, step).v
}

/// Derivative of the angular reference along the reference flow, including
/// the drift of the blend weight with the box position.
pub fn post_angular_acceleration(theta_b: f64, p_b: &Vector2<f64>, params: &PostFieldParams, step: f64) -> f64 {
    let omega = post_angular_field(theta_b, p_b, params);
    let d_theta = -params.blend(p_b) * params.kappa_theta;
    let mut grad = Vector2::zeros();
    for axis in 0..2 {
        let mut e = Vector2::zeros();
        e[axis] = step;
        grad[axis] = (post_angular_field(theta_b, &(p_b + e), params)
            - post_angular_field(theta_b, &(p_b - e), params))
            / (2.0 * step);
    }
    d_theta * omega + grad.dot(&post_linear_field(p_b, params))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ante() -> AnteFieldParams {
        AnteFieldParams::from_config(&FieldConfig::default(), &BoxParams::default()).unwrap()
    }

    #[test]
    fn wrap_range() {
        assert_eq!(wrap_to_pi(PI), PI);
        assert!((wrap_to_pi(-PI) - PI).abs() < 1e-15);
        assert!((wrap_to_pi(3.0 * PI + 0.1) - (-PI + 0.1)).abs() < 1e-12);
        assert!((wrap_to_pi(0.3) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn smoothstep_landmarks() {
        assert_eq!(smoothstep(0.2, 0.2, 0.4), 0.0);
        assert_eq!(smoothstep(0.4, 0.2, 0.4), 1.0);
        assert!((smoothstep(0.3, 0.2, 0.4) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn default_radii() {
        let a = ante();
        assert!((a.r_min - 0.18).abs() < 1e-12);
        assert!((a.r_max - 0.27).abs() < 1e-12);
    }

    #[test]
    fn nominal_ray_gives_impact_velocity() {
        let a = ante();
        for robot in 0..2 {
            let dir = a.v_imp[robot].normalize();
            for d in [0.3, 0.5, 1.0] {
                let p = a.p_imp[robot] - d * dir;
                let f = ante_linear_field(&p, robot, &a);
                assert!((f.v - a.v_imp[robot]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn inside_inner_ball_is_exactly_impact_velocity() {
        let a = ante();
        let p = a.p_b_est + Vector2::new(-0.1, 0.12);
        assert_eq!(ante_linear_field(&p, 0, &a).v, a.v_imp[0]);
    }

    #[test]
    fn outside_outer_ball_has_impact_speed() {
        let a = ante();
        let p = Vector2::new(-0.4, 0.25);
        assert!((ante_linear_field(&p, 0, &a).v.norm() - 0.4).abs() < 1e-12);
    }

    #[test]
    fn singular_point_flagged() {
        let a = ante();
        // Past p_imp along the approach direction at distance d the target is
        // p_imp − d x̂, so the direction vanishes at 2αd = ‖v_imp‖.
        let d = 0.4 / (2.0 * a.alpha);
        let p = a.p_imp[0] + Vector2::new(d, 0.0);
        let f = ante_linear_field_unextended(&p, 0, &a);
        assert!(f.singular);
        assert_eq!(f.v, a.v_imp[0]);
    }

    #[test]
    fn angular_field_cases() {
        let a = AnteFieldParams {
            kappa_theta: 2.0,
            ..ante()
        };
        assert_eq!(ante_angular_field(0.0, 0, &a), 0.0);
        assert!((ante_angular_field(-0.1, 0, &a) - 0.2).abs() < 1e-15);
        assert!((ante_angular_field(PI + 0.1, 1, &a) + 0.2).abs() < 1e-12);
        assert!((ante_angular_field(-PI + 0.1, 1, &a) + 0.2).abs() < 1e-12);
        assert!((a.target_heading(1, 3.0 * PI + 0.1) - 3.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn constant_and_linear_field_accelerations() {
        let c = field_acceleration(
            |_| FieldValue::regular(Vector2::new(1.0, 2.0)),
            &Vector2::new(0.3, 0.1),
            1e-6,
        );
        assert!(c.v.norm() < 1e-9);
        let target = Vector2::new(0.5, -0.2);
        let k = 3.0;
        let p = Vector2::new(0.1, 0.4);
        let lin = field_acceleration(|q| FieldValue::regular(k * (target - q)), &p, 1e-6);
        assert!((lin.v - (-k * k * (target - p))).norm() < 1e-8);
    }

    #[test]
    fn ante_field_acceleration_matches_directional_difference() {
        let a = ante();
        let mut s = 7u64;
        let mut uniform = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..200 {
            let p = Vector2::new(-0.6 + 0.5 * uniform(), -0.3 + 0.6 * uniform());
            let robot = 0;
            let f = ante_linear_field(&p, robot, &a);
            if f.singular {
                continue;
            }
            let acc = field_acceleration(|q| ante_linear_field(q, robot, &a), &p, 1e-6);
            let h = 1e-6;
            let speed = f.v.norm();
            let u = f.v / speed;
            let oracle = (ante_linear_field(&(p + h * u), robot, &a).v - ante_linear_field(&(p - h * u), robot, &a).v)
                * (speed / (2.0 * h));
            assert!((acc.v - oracle).norm() < 1e-5, "at {p:?}");
        }
    }

    #[test]
    fn ante_field_is_c1_across_blend_circles() {
        let a = ante();
        let h = 1e-7;
        for radius in [a.r_min, a.r_max] {
            for angle in [2.6, 3.0, 3.5, 4.0] {
                let dir = Vector2::new(f64::cos(angle), f64::sin(angle));
                let edge = a.p_b_est + radius * dir;
                let f = |q: Vector2<f64>| ante_linear_field(&q, 0, &a).v;
                let inner = (f(edge) - f(edge - h * dir)) / h;
                let outer = (f(edge + h * dir) - f(edge)) / h;
                assert!((inner - outer).norm() < 1e-4, "radius {radius}, angle {angle}");
                assert!((f(edge - h * dir) - f(edge + h * dir)).norm() < 1e-5);
            }
        }
    }

    #[test]
    fn ante_field_never_exceeds_impact_speed() {
        let a = ante();
        for i in 0..60 {
            for j in 0..60 {
                let p = Vector2::new(-0.8 + 0.8 * i as f64 / 59.0, -0.4 + 0.8 * j as f64 / 59.0);
                let f = ante_linear_field(&p, 0, &a);
                assert!(f.v.norm() <= 0.4 * (1.0 + 1e-12));
            }
        }
    }

    fn post() -> PostFieldParams {
        PostFieldParams::blended(
            &FieldConfig::default(),
            Vector2::new(0.0, 0.0),
            Vector2::new(0.03, -0.02),
            0.15,
        )
    }

    #[test]
    fn post_field_at_entry_is_prediction() {
        let pf = post();
        assert_eq!(post_linear_field(&pf.p_plus, &pf), pf.dp_plus);
        assert_eq!(post_angular_field(0.2, &pf.p_plus, &pf), pf.dtheta_plus);
    }

    #[test]
    fn post_field_far_away_is_attractor() {
        let pf = PostFieldParams::blended(
            &FieldConfig {
                box_goal: [0.0, 0.2, 0.0],
                ..FieldConfig::default()
            },
            Vector2::zeros(),
            Vector2::new(0.03, -0.02),
            0.15,
        );
        let p = Vector2::new(0.0, 0.08);
        assert!((post_linear_field(&p, &pf) - 2.0 * (pf.p_bf - p)).norm() < 1e-15);
        assert_eq!(post_linear_field(&pf.p_bf, &pf), Vector2::zeros());
        assert_eq!(post_angular_field(pf.theta_bf, &pf.p_bf, &pf), 0.0);
    }

    #[test]
    fn post_angular_blend_midpoint() {
        let pf = post();
        // ‖p − p_plus‖ = r_max / 2 gives β = 1/2.
        let p = pf.p_plus + Vector2::new(0.5 * pf.r_max, 0.0);
        let th = 0.1;
        let expected = 0.5 * pf.kappa_theta * (pf.theta_bf - th) + 0.5 * pf.dtheta_plus;
        assert!((post_angular_field(th, &p, &pf) - expected).abs() < 1e-15);
    }

    #[test]
    fn attractor_only_ignores_prediction() {
        let pf = PostFieldParams::attractor_only(&FieldConfig::default(), Vector2::zeros());
        assert_eq!(post_linear_field(&Vector2::zeros(), &pf), 2.0 * pf.p_bf);
    }
}
