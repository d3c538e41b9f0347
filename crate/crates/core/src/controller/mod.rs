//! Three-phase impact-aware controller.
//!
//! Before any contact the ante-impact QP tracks the ante field with a
//! mirrored synchronization task. From the first detected impact until all
//! four contacts are closed, the interim QP drops velocity feedback in
//! favour of an integrated position reference. Once the grasp is
//! established the post-impact QP drives the estimated box along the post
//! field while regulating contact forces.

mod ante;
mod post;
mod tasks;

pub use ante::{
    build_ante_qp, build_interim_qp, mirror_pose, nominal_joint_velocity, update_interim_ref, InterimReference,
    ReferenceTerms, ANTE_VARS,
};
pub use post::{build_post_qp, estimate_box_state, vertical_offsets, PostTerms, POST_VARS};

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DVector, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::contact::ContactPoint;
use crate::dynamics::{forward_kinematics, BoxParams, BoxState, RobotParams, RobotState, NUM_CONTACTS};
use crate::error::{Error, Result};
use crate::fields::{AnteFieldParams, FieldConfig, PostFieldParams};
use crate::predictor::RbfModel;
use crate::qp::{solve, QpSolution, QpStatus, WarmStart};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerGains {
    pub k_sync_pp: f64,
    pub k_sync_pd: f64,
    pub k_a_p: f64,
    pub k_a_theta: f64,
    pub k_int_p: f64,
    pub k_int_theta: f64,
    pub k_p_p: f64,
    pub k_p_theta: f64,
    pub w_a_p: f64,
    pub w_a_theta: f64,
    pub w_a_s: f64,
    pub w_p_p: f64,
    pub w_p_theta: f64,
    pub w_p_lambda: f64,
    pub w_p_n: f64,
    pub tau_min: f64,
    pub tau_max: f64,
    /// Control period (s).
    pub dt: f64,
    pub mu_est: f64,
    /// Lower bound on each normal force in the post-impact QP (N).
    pub min_normal_force: f64,
    /// How long all four contacts must stay closed before the post phase (s).
    pub t_hold: f64,
    pub detector: ImpactDetector,
    /// Normal force that counts as contact for the force detector (N).
    pub force_threshold: f64,
}

impl Default for ControllerGains {
    fn default() -> Self {
        ControllerGains {
            k_sync_pp: 100.0,
            k_sync_pd: 20.0,
            k_a_p: 20.0,
            k_a_theta: 20.0,
            k_int_p: 100.0,
            k_int_theta: 100.0,
            k_p_p: 20.0,
            k_p_theta: 20.0,
            w_a_p: 1.0,
            w_a_theta: 1.0,
            w_a_s: 10.0,
            w_p_p: 1.0,
            w_p_theta: 1.0,
            w_p_lambda: 0.1,
            w_p_n: 1e-4,
            tau_min: -40.0,
            tau_max: 40.0,
            dt: 1e-3,
            mu_est: 0.5,
            min_normal_force: 5.0,
            t_hold: 5e-3,
            detector: ImpactDetector::Gap,
            force_threshold: 1.0,
        }
    }
}

impl ControllerGains {
    /// `friction` is the true contact friction coefficient.
    pub fn validate(&self, friction: f64) -> Result<()> {
        let gains = [
            self.k_sync_pp,
            self.k_sync_pd,
            self.k_a_p,
            self.k_a_theta,
            self.k_int_p,
            self.k_int_theta,
            self.k_p_p,
            self.k_p_theta,
        ];
        if gains.iter().any(|g| !(*g > 0.0)) {
            return Err(Error::InvalidParameter("controller gains must be > 0".into()));
        }
        let weights = [
            self.w_a_p,
            self.w_a_theta,
            self.w_p_p,
            self.w_p_theta,
            self.w_p_lambda,
            self.w_p_n,
        ];
        // The sync weight may be zero to disable the task.
        if weights.iter().any(|w| !(*w > 0.0)) || !(self.w_a_s >= 0.0) {
            return Err(Error::InvalidParameter("task weights must be > 0".into()));
        }
        if !(self.tau_min < self.tau_max) {
            return Err(Error::InvalidParameter("tau_min must be below tau_max".into()));
        }
        if !(self.dt > 0.0 && self.t_hold >= 0.0 && self.min_normal_force > 0.0 && self.force_threshold > 0.0) {
            return Err(Error::InvalidParameter(
                "dt, t_hold and force limits must be positive".into(),
            ));
        }
        if !(self.mu_est >= 0.0 && self.mu_est < friction) {
            return Err(Error::InvalidParameter(format!(
                "mu_est = {} must lie in [0, mu = {friction})",
                self.mu_est
            )));
        }
        Ok(())
    }
}

/// What counts as a closed contact for phase switching.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ImpactDetector {
    /// Ground-truth gap `γ ≤ 0`.
    Gap,
    /// Normal force at or above `force_threshold`.
    Force,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    Ante,
    Interim,
    Post,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Ante => "ante",
            Phase::Interim => "interim",
            Phase::Post => "post",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ante" => Ok(Phase::Ante),
            "interim" => Ok(Phase::Interim),
            "post" => Ok(Phase::Post),
            _ => Err(Error::LogFormat(format!("unknown phase {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Proposed,
    /// Post field without the predicted post-impact velocity.
    NoImpactMap,
    /// Ante QP until the grasp is complete, no interim phase.
    NoInterim,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Proposed, Variant::NoImpactMap, Variant::NoInterim];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Proposed => "proposed",
            Variant::NoImpactMap => "no-impact-map",
            Variant::NoInterim => "no-interim",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant {s:?}")))
    }
}

/// Everything the QPs need besides the measured state.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlModel {
    pub robots: [RobotParams; 2],
    pub box_params: BoxParams,
    pub gains: ControllerGains,
    pub ante: AnteFieldParams,
    pub fields: FieldConfig,
}

impl ControlModel {
    pub fn new(
        robots: [RobotParams; 2],
        box_params: BoxParams,
        gains: ControllerGains,
        fields: FieldConfig,
    ) -> Result<Self> {
        let ante = AnteFieldParams::from_config(&fields, &box_params)?;
        Ok(ControlModel {
            robots,
            box_params,
            gains,
            ante,
            fields,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhaseState {
    pub phase: Phase,
    /// Time of the first interim control step.
    pub t_int: Option<f64>,
    pub interim_ref: Option<InterimReference>,
    /// First detected contact of each robot.
    pub impact_times: [Option<f64>; 2],
    /// Start of the current interval with all four contacts closed.
    pub closed_since: Option<f64>,
    /// Full contact has been held for `t_hold`; the post phase starts at the
    /// next control step.
    pub grasp_complete: bool,
    pub t_post: Option<f64>,
    pub p_b_plus: Option<Vector2<f64>>,
    pub dq_b_plus: Option<Vector3<f64>>,
    /// Predictor query and its extrapolation flag at post entry.
    pub y_minus: Option<[f64; 2]>,
    pub extrapolated: bool,
    pub post_field: Option<PostFieldParams>,
}

impl Default for PhaseState {
    fn default() -> Self {
        PhaseState {
            phase: Phase::Ante,
            t_int: None,
            interim_ref: None,
            impact_times: [None; 2],
            closed_since: None,
            grasp_complete: false,
            t_post: None,
            p_b_plus: None,
            dq_b_plus: None,
            y_minus: None,
            extrapolated: false,
            post_field: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ControllerOptions {
    pub variant: Variant,
    /// Never leave the ante phase (offline impact sampling).
    pub lock_ante: bool,
}

impl Default for ControllerOptions {
    fn default() -> Self {
        ControllerOptions {
            variant: Variant::Proposed,
            lock_ante: false,
        }
    }
}

/// Per-step values that the episode log records.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlOutput {
    pub phase: Phase,
    pub tau: [Vector3<f64>; 2],
    pub status: QpStatus,
    pub kkt_residual: f64,
    pub references: ReferenceTerms,
    /// Estimated box state (post phase) or the a-priori estimate.
    pub box_estimate: BoxState,
    /// Box reference twist; zero before the post phase.
    pub box_reference: Vector3<f64>,
    pub fault: Option<String>,
}

/// The stateful controller: phase machine plus the three QPs.
#[derive(Clone, Debug)]
pub struct Controller {
    pub model: ControlModel,
    pub options: ControllerOptions,
    pub state: PhaseState,
    predictor: Option<Arc<RbfModel>>,
    last_tau: [Vector3<f64>; 2],
    warm: [Option<WarmStart>; 3],
}

impl Controller {
    pub fn new(model: ControlModel, options: ControllerOptions, predictor: Option<Arc<RbfModel>>) -> Result<Self> {
        if options.variant == Variant::Proposed && !options.lock_ante && predictor.is_none() {
            return Err(Error::Config(
                "the proposed controller needs a fitted predictor model".into(),
            ));
        }
        Ok(Controller {
            model,
            options,
            state: PhaseState::default(),
            predictor,
            last_tau: [Vector3::zeros(); 2],
            warm: [None, None, None],
        })
    }

    pub fn phase(&self) -> Phase {
        self.state.phase
    }

    fn closed(&self, c: &ContactPoint) -> bool {
        match self.model.gains.detector {
            ImpactDetector::Gap => c.gap <= 0.0,
            ImpactDetector::Force => c.lambda_n >= self.model.gains.force_threshold,
        }
    }

    /// Contact monitoring; called after every integrator substep.
    pub fn observe_contacts(&mut self, t: f64, contacts: &[ContactPoint; NUM_CONTACTS]) {
        if self.options.lock_ante || self.state.phase == Phase::Post {
            return;
        }
        let closed: [bool; NUM_CONTACTS] = std::array::from_fn(|k| self.closed(&contacts[k]));
        for (k, &c) in closed.iter().enumerate() {
            let robot = k / 2;
            if c && self.state.impact_times[robot].is_none() {
                self.state.impact_times[robot] = Some(t);
            }
        }
        if closed.iter().any(|c| *c) && self.state.phase == Phase::Ante && self.options.variant != Variant::NoInterim {
            self.state.phase = Phase::Interim;
        }
        if closed.iter().all(|c| *c) {
            let since = *self.state.closed_since.get_or_insert(t);
            if t - since >= self.model.gains.t_hold - 1e-12 {
                self.state.grasp_complete = true;
            }
        } else {
            self.state.closed_since = None;
        }
    }

    fn enter_post(&mut self, t: f64, states: &[RobotState; 2]) {
        let est = estimate_box_state(&self.model.robots, states);
        let q = [states[0].q, states[1].q];
        let y_minus = vertical_offsets(
            &self.model.robots,
            &q,
            &self.model.ante.p_b_est,
            self.model.ante.theta_b_est,
        );
        let post = match (self.options.variant, &self.predictor) {
            (Variant::NoImpactMap, _) | (_, None) => PostFieldParams::attractor_only(&self.model.fields, est.p),
            (_, Some(model)) => {
                let pred = model.predict(y_minus);
                self.state.dq_b_plus = Some(pred.velocity);
                self.state.extrapolated = pred.extrapolated;
                PostFieldParams::blended(&self.model.fields, est.p, pred.velocity.xy(), pred.velocity.z)
            }
        };
        self.state.phase = Phase::Post;
        self.state.t_post = Some(t);
        self.state.p_b_plus = Some(est.p);
        self.state.y_minus = Some(y_minus);
        self.state.post_field = Some(post);
    }

    fn a_priori_box(&self) -> BoxState {
        BoxState::at_rest(self.model.ante.p_b_est, self.model.ante.theta_b_est)
    }

    /// One control period: phase bookkeeping, QP, torques to hold until the
    /// next call.
    pub fn control_step(&mut self, t: f64, states: &[RobotState; 2]) -> ControlOutput {
        if self.state.grasp_complete && self.state.phase != Phase::Post && !self.options.lock_ante {
            self.enter_post(t, states);
        }
        let phase = self.state.phase;
        let mut box_estimate = self.a_priori_box();
        let mut box_reference = Vector3::zeros();
        let (problem, references, warm_slot) = match phase {
            Phase::Ante => {
                let (qp, terms) = build_ante_qp(&self.model, states);
                (qp, terms, 0)
            }
            Phase::Interim => {
                if self.state.interim_ref.is_none() {
                    let poses: [_; 2] =
                        std::array::from_fn(|i| forward_kinematics(&self.model.robots[i], &states[i].q));
                    self.state.t_int = Some(t);
                    self.state.interim_ref = Some(InterimReference {
                        p: [poses[0].p, poses[1].p],
                        theta: [poses[0].theta, poses[1].theta],
                    });
                }
                let refs = self.state.interim_ref.expect("initialized above");
                let (qp, terms) = build_interim_qp(&self.model, &[states[0].q, states[1].q], &refs);
                (qp, terms, 1)
            }
            Phase::Post => {
                let est = estimate_box_state(&self.model.robots, states);
                let post = self.state.post_field.as_ref().expect("set on post entry");
                let (qp, terms) = build_post_qp(&self.model, states, &est, post);
                box_estimate = est;
                box_reference = terms.box_reference;
                (qp, ReferenceTerms::default(), 2)
            }
        };

        let solution = solve(&problem, self.warm[warm_slot].as_ref());
        let tau_offsets: [usize; 2] = match phase {
            Phase::Post => [9, 12],
            _ => [6, 9],
        };
        let (tau, status, kkt, fault) = match solution {
            Ok(QpSolution {
                x,
                status: QpStatus::Optimal,
                kkt_residual,
                active_set,
                ..
            }) => {
                let tau = tau_offsets.map(|o| x.fixed_rows::<3>(o).into_owned());
                self.warm[warm_slot] = Some(WarmStart {
                    x: DVector::clone(&x),
                    active_set,
                });
                (tau, QpStatus::Optimal, kkt_residual, None)
            }
            Ok(s) => (
                self.last_tau,
                s.status,
                s.kkt_residual,
                Some(format!("{phase} QP returned {:?} at t = {t:.4}", s.status)),
            ),
            Err(e) => (
                self.last_tau,
                QpStatus::Infeasible,
                f64::INFINITY,
                Some(format!("{phase} QP rejected at t = {t:.4}: {e}")),
            ),
        };
        self.last_tau = tau;

        if phase == Phase::Interim {
            if let Some(refs) = self.state.interim_ref.as_mut() {
                update_interim_ref(refs, &self.model.ante, self.model.gains.dt);
            }
        }

        ControlOutput {
            phase,
            tau,
            status,
            kkt_residual: kkt,
            references,
            box_estimate,
            box_reference,
            fault,
        }
    }
}
