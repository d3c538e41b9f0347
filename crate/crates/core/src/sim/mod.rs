//! Fixed-step simulation of the two arms, the free box and the compliant
//! contacts between them, driven by zero-order-hold torque commands.

mod log;

pub use log::{EpisodeLog, LogRow, Outcome};

use std::sync::Arc;

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::contact::{ContactParams, ContactPoint};
use crate::controller::{Controller, ControllerOptions, Phase};
use crate::dynamics::{
    box_mass_bias, contact_kinematics, flexible_joint_step_inputs, gravity_torque, inverse_kinematics, mass_bias,
    transmission_torque, ArmFrame, BoxParams, BoxState, FlexParams, Pose2, RobotParams, RobotState, NUM_CONTACTS,
};
use crate::error::{Error, Result};
use crate::fields::wrap_to_pi;
use crate::harness::Scenario;
use crate::predictor::RbfModel;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Rigid,
    Flexible,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Rigid => "rigid",
            Mode::Flexible => "flexible",
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rigid" => Ok(Mode::Rigid),
            "flexible" => Ok(Mode::Flexible),
            _ => Err(Error::Config(format!("unknown mode {s:?}"))),
        }
    }
}

/// Integrator and episode settings. The control period is the controller's
/// `dt`; mode and box perturbation belong to the scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub dt_integrator: f64,
    pub horizon: f64,
    /// Goal tolerances on the estimated box pose (m, deg).
    pub success_position_tol: f64,
    pub success_angle_tol_deg: f64,
    /// How long the tolerances must hold (s).
    pub success_hold: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt_integrator: 1e-4,
            horizon: 4.0,
            success_position_tol: 2e-3,
            success_angle_tol_deg: 1.0,
            success_hold: 0.1,
        }
    }
}

impl SimConfig {
    pub fn validate(&self, dt_control: f64) -> Result<()> {
        if !(self.dt_integrator > 0.0 && self.horizon > 0.0 && self.success_hold >= 0.0) {
            return Err(Error::InvalidParameter(
                "sim step, horizon and hold must be positive".into(),
            ));
        }
        self.substeps(dt_control).map(|_| ())
    }

    /// Integrator substeps per control period.
    pub fn substeps(&self, dt_control: f64) -> Result<usize> {
        let ratio = dt_control / self.dt_integrator;
        let n = ratio.round();
        if n < 1.0 || (ratio - n).abs() > 1e-9 * ratio {
            return Err(Error::InvalidParameter(format!(
                "control period {dt_control} is not an integer multiple of the integrator step {}",
                self.dt_integrator
            )));
        }
        Ok(n as usize)
    }
}

/// Full continuous state: both arms and the true box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct World {
    pub robots: [RobotState; 2],
    pub box_state: BoxState,
}

impl World {
    pub fn is_finite(&self) -> bool {
        self.robots.iter().all(RobotState::is_finite) && self.box_state.is_finite()
    }

    fn axpy(&self, d: &World, h: f64) -> World {
        let r = |a: &RobotState, b: &RobotState| RobotState {
            q: a.q + h * b.q,
            dq: a.dq + h * b.dq,
            motor_q: a.motor_q + h * b.motor_q,
            motor_dq: a.motor_dq + h * b.motor_dq,
        };
        World {
            robots: [r(&self.robots[0], &d.robots[0]), r(&self.robots[1], &d.robots[1])],
            box_state: BoxState {
                p: self.box_state.p + h * d.box_state.p,
                theta: self.box_state.theta + h * d.box_state.theta,
                dp: self.box_state.dp + h * d.box_state.dp,
                dtheta: self.box_state.dtheta + h * d.box_state.dtheta,
            },
        }
    }
}

/// Ground-truth physical model.
#[derive(Clone, Debug, PartialEq)]
pub struct Plant {
    pub robots: [RobotParams; 2],
    pub box_params: BoxParams,
    pub contact: ContactParams,
    pub flex: FlexParams,
    pub mode: Mode,
    pub tau_min: f64,
    pub tau_max: f64,
}

impl Plant {
    pub fn new(config: &Config, mode: Mode) -> Self {
        Plant {
            robots: config.robots.clone(),
            box_params: config.box_params.clone(),
            contact: config.contact.clone(),
            flex: config.flexible.clone(),
            mode,
            tau_min: config.controller.tau_min,
            tau_max: config.controller.tau_max,
        }
    }

    fn frames(&self, world: &World) -> [ArmFrame; 2] {
        std::array::from_fn(|i| ArmFrame::new(&self.robots[i], &world.robots[i].q, &world.robots[i].dq))
    }

    pub fn contacts(&self, world: &World) -> [ContactPoint; NUM_CONTACTS] {
        let kin = contact_kinematics(&self.robots, &self.frames(world), &self.box_params, &world.box_state);
        kin.map(|c| ContactPoint::resolve(c.gap, c.gap_rate, c.slip_rate, &self.contact))
    }

    /// Time derivative of the state, packed in a `World`.
    pub fn derivative(&self, world: &World, tau: &[Vector3<f64>; 2]) -> World {
        let gravity = self.box_params.gravity;
        let kin = contact_kinematics(&self.robots, &self.frames(world), &self.box_params, &world.box_state);
        let mut f_robot = [Vector3::zeros(); 2];
        let mut f_box = Vector3::zeros();
        for c in &kin {
            let p = ContactPoint::resolve(c.gap, c.gap_rate, c.slip_rate, &self.contact);
            if p.lambda_n == 0.0 {
                continue;
            }
            let f_t = -p.lambda_t;
            f_robot[c.robot] += c.jn_robot.transpose() * p.lambda_n + c.jt_robot.transpose() * f_t;
            f_box += c.jn_box.transpose() * p.lambda_n + c.jt_box.transpose() * f_t;
        }

        let robots = std::array::from_fn(|i| {
            let s = &world.robots[i];
            let (m, h) = mass_bias(&self.robots[i], &s.q, &s.dq, gravity);
            // A non-finite state has no factorization; NaN lets `try_step` report it.
            let solve = |rhs: Vector3<f64>| m.cholesky().map_or(Vector3::repeat(f64::NAN), |c| c.solve(&rhs));
            match self.mode {
                Mode::Rigid => {
                    let ddq = solve(tau[i] - h + f_robot[i]);
                    RobotState {
                        q: s.dq,
                        dq: ddq,
                        motor_q: s.dq,
                        motor_dq: ddq,
                    }
                }
                Mode::Flexible => {
                    let tau_j = transmission_torque(s, &self.flex);
                    let u = flexible_joint_step_inputs(s, &tau[i], &self.flex, self.tau_min, self.tau_max);
                    RobotState {
                        q: s.dq,
                        dq: solve(tau_j - h + f_robot[i]),
                        motor_q: s.motor_dq,
                        motor_dq: (u - tau_j) / self.flex.motor_inertia,
                    }
                }
            }
        });

        let (mb, hb) = box_mass_bias(&self.box_params);
        let acc = Vector3::from_fn(|r, _| (f_box[r] - hb[r]) / mb[(r, r)]);
        World {
            robots,
            box_state: BoxState {
                p: world.box_state.dp,
                theta: world.box_state.dtheta,
                dp: Vector2::new(acc.x, acc.y),
                dtheta: acc.z,
            },
        }
    }

    /// One classical RK4 step with the torques held constant.
    pub fn step(&self, world: &World, tau: &[Vector3<f64>; 2], dt: f64) -> World {
        let k1 = self.derivative(world, tau);
        let k2 = self.derivative(&world.axpy(&k1, 0.5 * dt), tau);
        let k3 = self.derivative(&world.axpy(&k2, 0.5 * dt), tau);
        let k4 = self.derivative(&world.axpy(&k3, dt), tau);
        world
            .axpy(&k1, dt / 6.0)
            .axpy(&k2, dt / 3.0)
            .axpy(&k3, dt / 3.0)
            .axpy(&k4, dt / 6.0)
    }

    /// Checked step: non-finite results abort with a state dump.
    pub fn try_step(&self, world: &World, tau: &[Vector3<f64>; 2], dt: f64, t: f64) -> Result<World> {
        let next = self.step(world, tau, dt);
        if next.is_finite() {
            Ok(next)
        } else {
            Err(Error::NonFinite {
                t,
                detail: format!("state before step {world:?}, torques {tau:?}"),
            })
        }
    }

    /// Arm state at rest in joint configuration `q`, with the transmission
    /// pre-loaded against gravity in flexible mode.
    pub fn rest_state(&self, robot: usize, q: Vector3<f64>) -> RobotState {
        let mut s = RobotState::rigid(q, Vector3::zeros());
        if self.mode == Mode::Flexible {
            s.motor_q = q + gravity_torque(&self.robots[robot], &q, self.box_params.gravity) / self.flex.stiffness;
        }
        s
    }
}

/// Initial world of a scenario: arms at rest, true box at rest at the
/// a-priori estimate plus the scenario's perturbation.
pub fn initial_world(config: &Config, scenario: &Scenario) -> Result<World> {
    let plant = Plant::new(config, scenario.mode);
    let q: [Vector3<f64>; 2] = match scenario.initial_q {
        Some(q) => q.map(Vector3::from),
        None => {
            let mut out = [Vector3::zeros(); 2];
            for (i, pose) in scenario.initial_ee.iter().enumerate() {
                let target = Pose2::new(pose[0], pose[1], pose[2]);
                out[i] = inverse_kinematics(&config.robots[i], &target)
                    .ok_or_else(|| Error::Config(format!("initial end-effector pose of robot {i} is out of reach")))?;
            }
            out
        }
    };
    let est = config.fields.box_estimate;
    let box_state = BoxState::at_rest(
        Vector2::new(est[0], est[1] + scenario.box_shift_y),
        est[2] + scenario.box_rotation_deg.to_radians(),
    );
    Ok(World {
        robots: [plant.rest_state(0, q[0]), plant.rest_state(1, q[1])],
        box_state,
    })
}

/// Runs one closed-loop episode of `scenario`.
pub fn run_episode(config: &Config, scenario: &Scenario, predictor: Option<Arc<RbfModel>>) -> Result<EpisodeLog> {
    let world = initial_world(config, scenario)?;
    let mut model = config.control_model()?;
    if let Some(w) = scenario.sync_weight {
        model.gains.w_a_s = w;
    }
    let controller = Controller::new(
        model,
        ControllerOptions {
            variant: scenario.variant,
            lock_ante: false,
        },
        predictor,
    )?;
    let plant = Plant::new(config, scenario.mode);
    simulate(config, &plant, controller, world)
}

/// Episode loop from an explicit initial world.
pub fn simulate(config: &Config, plant: &Plant, mut controller: Controller, mut world: World) -> Result<EpisodeLog> {
    let dt = config.controller.dt;
    let substeps = config.sim.substeps(dt)?;
    let h = config.sim.dt_integrator;
    let steps = (config.sim.horizon / dt).round() as usize;
    let goal = config.fields.box_goal;
    let pos_tol = config.sim.success_position_tol;
    let ang_tol = config.sim.success_angle_tol_deg.to_radians();

    let mut rows = Vec::with_capacity(steps + 1);
    let mut inside_since: Option<f64> = None;
    let mut outcome = Outcome::Horizon;
    for k in 0..=steps {
        let t = k as f64 * dt;
        let out = controller.control_step(t, &world.robots);
        let contacts = plant.contacts(&world);
        let row = LogRow::record(t, &plant.robots, &world, &contacts, &out, &goal);
        let fault = out.fault.clone();
        let at_goal = out.phase == Phase::Post && row.goal_position_error < pos_tol && row.goal_angle_error < ang_tol;
        rows.push(row);
        if let Some(msg) = fault {
            outcome = Outcome::Fault { t, message: msg };
            break;
        }
        if at_goal {
            let since = *inside_since.get_or_insert(t);
            if t - since >= config.sim.success_hold - 1e-9 {
                outcome = Outcome::Success { t };
                break;
            }
        } else {
            inside_since = None;
        }
        if k == steps {
            break;
        }
        for s in 0..substeps {
            let ts = t + (s + 1) as f64 * h;
            world = plant.try_step(&world, &out.tau, h, ts)?;
            controller.observe_contacts(ts, &plant.contacts(&world));
        }
    }
    Ok(EpisodeLog { rows, outcome })
}

/// Goal errors `(‖p − p_bf‖, |θ − θ_bf|)`.
pub fn goal_errors(p: &Vector2<f64>, theta: f64, goal: &[f64; 3]) -> (f64, f64) {
    (
        (p - Vector2::new(goal[0], goal[1])).norm(),
        wrap_to_pi(theta - goal[2]).abs(),
    )
}

/// End-effector twist `(v_x, v_y, ω)`.
pub(crate) fn ee_twist(params: &RobotParams, s: &RobotState) -> (Pose2, Vector3<f64>) {
    let f = ArmFrame::new(params, &s.q, &s.dq);
    (f.pose, Vector3::new(f.v.x, f.v.y, f.omega))
}

#[cfg(test)]
mod tests;
