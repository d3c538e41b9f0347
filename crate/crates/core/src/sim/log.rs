//! Episode log: one row per control period, persisted as CSV.
//!
//! Column order (`r0`/`r1` robot, `c0`..`c3` contact, `j0`..`j2` joint):
//!
//! ```text
//! t, phase,
//! r{i}_q{j}, r{i}_dq{j}, r{i}_qm{j}, r{i}_dqm{j}            per robot
//! box_x, box_y, box_theta, box_vx, box_vy, box_omega         true box
//! c{k}_gap, c{k}_gap_rate, c{k}_slip_rate, c{k}_lambda_n, c{k}_lambda_t
//! r{i}_tau{j}                                                commanded torque
//! r{i}_ee_x, r{i}_ee_y, r{i}_ee_theta, r{i}_ee_vx, r{i}_ee_vy, r{i}_ee_omega
//! r{i}_ref_vx, r{i}_ref_vy, r{i}_ref_omega                   zero in post
//! est_x, est_y, est_theta, est_vx, est_vy, est_omega         box estimate
//! ref_box_vx, ref_box_vy, ref_box_omega                      zero before post
//! err_sync, err_track0, err_track1, err_box,
//! goal_position_error, goal_angle_error                      on the estimate
//! true_goal_position_error, true_goal_angle_error
//! qp_status, kkt_residual, fault
//! ```
//!
//! Floats are written in shortest round-trip form, so reading a log back
//! reproduces every value bit for bit.

use std::path::Path;

use nalgebra::{Vector2, Vector3};

use super::{ee_twist, goal_errors, World};
use crate::contact::ContactPoint;
use crate::controller::{ControlOutput, Phase};
use crate::dynamics::{BoxState, Pose2, RobotParams, RobotState, NUM_CONTACTS};
use crate::error::{Error, Result};
use crate::qp::QpStatus;

#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub phase: Phase,
    pub robots: [RobotState; 2],
    pub box_state: BoxState,
    pub contacts: [ContactPoint; NUM_CONTACTS],
    pub tau: [Vector3<f64>; 2],
    pub ee: [Pose2; 2],
    pub ee_twist: [Vector3<f64>; 2],
    pub ee_reference: [Vector3<f64>; 2],
    pub box_estimate: BoxState,
    pub box_reference: Vector3<f64>,
    pub err_sync: f64,
    pub err_track: [f64; 2],
    pub err_box: f64,
    pub goal_position_error: f64,
    pub goal_angle_error: f64,
    pub true_goal_position_error: f64,
    pub true_goal_angle_error: f64,
    pub qp_status: QpStatus,
    pub kkt_residual: f64,
    pub fault: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Outcome {
    Success { t: f64 },
    Horizon,
    Fault { t: f64, message: String },
}

impl Outcome {
    pub fn label(&self) -> &'static str {
        match self {
            Outcome::Success { .. } => "success",
            Outcome::Horizon => "horizon",
            Outcome::Fault { .. } => "fault",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeLog {
    pub rows: Vec<LogRow>,
    pub outcome: Outcome,
}

fn status_str(s: QpStatus) -> &'static str {
    match s {
        QpStatus::Optimal => "optimal",
        QpStatus::Infeasible => "infeasible",
        QpStatus::MaxIter => "max-iter",
    }
}

fn parse_status(s: &str) -> Result<QpStatus> {
    match s {
        "optimal" => Ok(QpStatus::Optimal),
        "infeasible" => Ok(QpStatus::Infeasible),
        "max-iter" => Ok(QpStatus::MaxIter),
        _ => Err(Error::LogFormat(format!("unknown QP status {s:?}"))),
    }
}

impl LogRow {
    pub fn record(
        t: f64,
        robots: &[RobotParams; 2],
        world: &World,
        contacts: &[ContactPoint; NUM_CONTACTS],
        out: &ControlOutput,
        goal: &[f64; 3],
    ) -> Self {
        let twists: [(Pose2, Vector3<f64>); 2] = std::array::from_fn(|i| ee_twist(&robots[i], &world.robots[i]));
        let refs = &out.references;
        let in_post = out.phase == Phase::Post;
        let ee_reference: [Vector3<f64>; 2] = std::array::from_fn(|i| {
            if in_post {
                Vector3::zeros()
            } else {
                Vector3::new(refs.linear[i].x, refs.linear[i].y, refs.angular[i])
            }
        });
        let err_track = std::array::from_fn(|i| {
            if in_post {
                0.0
            } else {
                (ee_reference[i] - twists[i].1).norm()
            }
        });
        let est = &out.box_estimate;
        let err_box = if in_post {
            (out.box_reference - Vector3::new(est.dp.x, est.dp.y, est.dtheta)).norm()
        } else {
            0.0
        };
        let (gp, ga) = goal_errors(&est.p, est.theta, goal);
        let (tp, ta) = goal_errors(&world.box_state.p, world.box_state.theta, goal);
        LogRow {
            t,
            phase: out.phase,
            robots: world.robots,
            box_state: world.box_state,
            contacts: *contacts,
            tau: out.tau,
            ee: [twists[0].0, twists[1].0],
            ee_twist: [twists[0].1, twists[1].1],
            ee_reference,
            box_estimate: *est,
            box_reference: out.box_reference,
            err_sync: if in_post { 0.0 } else { refs.sync_error.norm() },
            err_track,
            err_box,
            goal_position_error: gp,
            goal_angle_error: ga,
            true_goal_position_error: tp,
            true_goal_angle_error: ta,
            qp_status: out.status,
            kkt_residual: out.kkt_residual,
            fault: out.fault.clone(),
        }
    }

    pub fn header() -> Vec<String> {
        let mut h: Vec<String> = vec!["t".into(), "phase".into()];
        for i in 0..2 {
            for name in ["q", "dq", "qm", "dqm"] {
                for j in 0..3 {
                    h.push(format!("r{i}_{name}{j}"));
                }
            }
        }
        for name in ["box_x", "box_y", "box_theta", "box_vx", "box_vy", "box_omega"] {
            h.push(name.into());
        }
        for k in 0..NUM_CONTACTS {
            for name in ["gap", "gap_rate", "slip_rate", "lambda_n", "lambda_t"] {
                h.push(format!("c{k}_{name}"));
            }
        }
        for i in 0..2 {
            for j in 0..3 {
                h.push(format!("r{i}_tau{j}"));
            }
        }
        for i in 0..2 {
            for name in ["ee_x", "ee_y", "ee_theta", "ee_vx", "ee_vy", "ee_omega"] {
                h.push(format!("r{i}_{name}"));
            }
        }
        for i in 0..2 {
            for name in ["ref_vx", "ref_vy", "ref_omega"] {
                h.push(format!("r{i}_{name}"));
            }
        }
        for name in [
            "est_x",
            "est_y",
            "est_theta",
            "est_vx",
            "est_vy",
            "est_omega",
            "ref_box_vx",
            "ref_box_vy",
            "ref_box_omega",
            "err_sync",
            "err_track0",
            "err_track1",
            "err_box",
            "goal_position_error",
            "goal_angle_error",
            "true_goal_position_error",
            "true_goal_angle_error",
            "qp_status",
            "kkt_residual",
            "fault",
        ] {
            h.push(name.into());
        }
        h
    }

    fn numbers(&self) -> Vec<f64> {
        let mut v = vec![];
        for r in &self.robots {
            for x in [r.q, r.dq, r.motor_q, r.motor_dq] {
                v.extend(x.iter());
            }
        }
        push_box(&mut v, &self.box_state);
        for c in &self.contacts {
            v.extend([c.gap, c.gap_rate, c.slip_rate, c.lambda_n, c.lambda_t]);
        }
        for t in &self.tau {
            v.extend(t.iter());
        }
        for i in 0..2 {
            v.extend([self.ee[i].p.x, self.ee[i].p.y, self.ee[i].theta]);
            v.extend(self.ee_twist[i].iter());
        }
        for r in &self.ee_reference {
            v.extend(r.iter());
        }
        push_box(&mut v, &self.box_estimate);
        v.extend(self.box_reference.iter());
        v.extend([
            self.err_sync,
            self.err_track[0],
            self.err_track[1],
            self.err_box,
            self.goal_position_error,
            self.goal_angle_error,
            self.true_goal_position_error,
            self.true_goal_angle_error,
        ]);
        v
    }

    pub fn to_record(&self) -> Vec<String> {
        let mut rec = vec![self.t.to_string(), self.phase.as_str().to_string()];
        rec.extend(self.numbers().into_iter().map(|x| x.to_string()));
        rec.push(status_str(self.qp_status).into());
        rec.push(self.kkt_residual.to_string());
        rec.push(self.fault.clone().unwrap_or_default());
        rec
    }

    pub fn from_record(rec: &[&str]) -> Result<Self> {
        let expected = Self::header().len();
        if rec.len() != expected {
            return Err(Error::LogFormat(format!(
                "expected {expected} fields, found {}",
                rec.len()
            )));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::LogFormat(format!("bad number {s:?}")))
        };
        let t = num(rec[0])?;
        let phase: Phase = rec[1].parse()?;
        let n = expected - 5;
        let vals = rec[2..2 + n].iter().map(|s| num(s)).collect::<Result<Vec<f64>>>()?;
        let mut it = vals.into_iter();
        let mut next = || it.next().expect("length checked above");
        let mut robots = [RobotState::rigid(Vector3::zeros(), Vector3::zeros()); 2];
        for r in robots.iter_mut() {
            r.q = v3(&mut next);
            r.dq = v3(&mut next);
            r.motor_q = v3(&mut next);
            r.motor_dq = v3(&mut next);
        }
        let box_state = read_box(&mut next);
        let contacts = std::array::from_fn(|_| ContactPoint {
            gap: next(),
            gap_rate: next(),
            slip_rate: next(),
            lambda_n: next(),
            lambda_t: next(),
        });
        let tau = [v3(&mut next), v3(&mut next)];
        let mut ee = [Pose2::new(0.0, 0.0, 0.0); 2];
        let mut ee_tw = [Vector3::zeros(); 2];
        for i in 0..2 {
            ee[i] = Pose2::new(next(), next(), next());
            ee_tw[i] = v3(&mut next);
        }
        let ee_reference = [v3(&mut next), v3(&mut next)];
        let box_estimate = read_box(&mut next);
        let box_reference = v3(&mut next);
        let err_sync = next();
        let err_track = [next(), next()];
        let err_box = next();
        let (gp, ga, tp, ta) = (next(), next(), next(), next());
        let fault = rec[expected - 1];
        Ok(LogRow {
            t,
            phase,
            robots,
            box_state,
            contacts,
            tau,
            ee,
            ee_twist: ee_tw,
            ee_reference,
            box_estimate,
            box_reference,
            err_sync,
            err_track,
            err_box,
            goal_position_error: gp,
            goal_angle_error: ga,
            true_goal_position_error: tp,
            true_goal_angle_error: ta,
            qp_status: parse_status(rec[expected - 3])?,
            kkt_residual: num(rec[expected - 2])?,
            fault: (!fault.is_empty()).then(|| fault.to_string()),
        })
    }
}

fn v3(next: &mut dyn FnMut() -> f64) -> Vector3<f64> {
    Vector3::new(next(), next(), next())
}

fn push_box(v: &mut Vec<f64>, b: &BoxState) {
    v.extend([b.p.x, b.p.y, b.theta, b.dp.x, b.dp.y, b.dtheta]);
}

fn read_box(next: &mut dyn FnMut() -> f64) -> BoxState {
    BoxState {
        p: Vector2::new(next(), next()),
        theta: next(),
        dp: Vector2::new(next(), next()),
        dtheta: next(),
    }
}

impl EpisodeLog {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(vec![]);
        w.write_record(LogRow::header()).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row.to_record()).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("CSV output is UTF-8")
    }

    /// Rows of a CSV log. The outcome is not part of the CSV; it is
    /// reconstructed from the fault column (a fault ends the log) or
    /// reported as `Horizon` otherwise.
    pub fn rows_from_csv(text: &str) -> Result<Vec<LogRow>> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let header: Vec<String> = r
            .headers()
            .map_err(|e| Error::LogFormat(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        if header != LogRow::header() {
            return Err(Error::LogFormat("unexpected column layout".into()));
        }
        let mut rows = vec![];
        for rec in r.records() {
            let rec = rec.map_err(|e| Error::LogFormat(e.to_string()))?;
            let fields: Vec<&str> = rec.iter().collect();
            rows.push(LogRow::from_record(&fields)?);
        }
        Ok(rows)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn read_rows(path: impl AsRef<Path>) -> Result<Vec<LogRow>> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::rows_from_csv(&text)
    }
}
