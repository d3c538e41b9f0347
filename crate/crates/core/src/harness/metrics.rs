//! Comparison metrics, computed from the log rows alone so that a log read
//! back from CSV gives the same numbers.

use nalgebra::Vector3;

use crate::controller::Phase;
use crate::sim::{LogRow, SimConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct Metrics {
    /// First closed gap of each robot (s); `None` if it never touched.
    pub impact_times: [Option<f64>; 2],
    /// `|t_imp,1 − t_imp,2|`; `None` unless both robots touched.
    pub impact_time_gap: Option<f64>,
    /// Largest joint torque step into the first post-phase row (N·m).
    pub max_torque_jump_at_post_entry: Option<f64>,
    /// Largest joint torque rate from the first impact up to post entry
    /// (N·m/s), the step into the post phase excluded.
    pub interim_torque_rate_peak: Option<f64>,
    /// `‖q̇_b − reference‖` at the first post-phase row (true box twist).
    pub post_velocity_mismatch: Option<f64>,
    /// Goal tolerances held on the estimate for the success hold time.
    pub success: bool,
    pub peak_torque: f64,
    pub max_kkt_residual: f64,
    pub fault: Option<String>,
    /// Goal errors on the last row: estimate (m, rad) and true box (m, rad).
    pub final_goal_error: (f64, f64),
    pub final_true_goal_error: (f64, f64),
    /// The episode reached the post phase.
    pub reached_post: bool,
}

fn max_step(a: &[Vector3<f64>; 2], b: &[Vector3<f64>; 2]) -> f64 {
    (0..2).map(|i| (a[i] - b[i]).amax()).fold(0.0, f64::max)
}

/// Index of the first row at which the goal tolerances have held for `hold`.
pub fn success_row(rows: &[LogRow], sim: &SimConfig) -> Option<usize> {
    let tol_p = sim.success_position_tol;
    let tol_a = sim.success_angle_tol_deg.to_radians();
    let mut since: Option<f64> = None;
    for (k, r) in rows.iter().enumerate() {
        if r.phase == Phase::Post && r.goal_position_error < tol_p && r.goal_angle_error < tol_a {
            let s = *since.get_or_insert(r.t);
            if r.t - s >= sim.success_hold - 1e-9 {
                return Some(k);
            }
        } else {
            since = None;
        }
    }
    None
}

pub fn compute_metrics(rows: &[LogRow], sim: &SimConfig) -> Metrics {
    let impact_times: [Option<f64>; 2] = std::array::from_fn(|i| {
        rows.iter()
            .find(|r| r.contacts[2 * i].gap <= 0.0 || r.contacts[2 * i + 1].gap <= 0.0)
            .map(|r| r.t)
    });
    let impact_time_gap = match impact_times {
        [Some(a), Some(b)] => Some((a - b).abs()),
        _ => None,
    };
    let post_row = rows.iter().position(|r| r.phase == Phase::Post);
    let first_contact = rows.iter().position(|r| r.contacts.iter().any(|c| c.gap <= 0.0));

    let max_torque_jump_at_post_entry = post_row
        .filter(|&k| k > 0)
        .map(|k| max_step(&rows[k].tau, &rows[k - 1].tau));
    let post_velocity_mismatch = post_row.map(|k| {
        let r = &rows[k];
        let b = &r.box_state;
        (Vector3::new(b.dp.x, b.dp.y, b.dtheta) - r.box_reference).norm()
    });
    let interim_torque_rate_peak = first_contact.filter(|&k| k > 0).map(|start| {
        let end = post_row.unwrap_or(rows.len());
        (start..end)
            .map(|k| max_step(&rows[k].tau, &rows[k - 1].tau) / (rows[k].t - rows[k - 1].t))
            .fold(0.0, f64::max)
    });

    let peak_torque = rows
        .iter()
        .map(|r| r.tau[0].amax().max(r.tau[1].amax()))
        .fold(0.0, f64::max);
    let max_kkt_residual = rows.iter().map(|r| r.kkt_residual).fold(0.0, f64::max);
    let last = rows.last();
    Metrics {
        impact_times,
        impact_time_gap,
        max_torque_jump_at_post_entry,
        interim_torque_rate_peak,
        post_velocity_mismatch,
        success: success_row(rows, sim).is_some(),
        peak_torque,
        max_kkt_residual,
        fault: rows.iter().find_map(|r| r.fault.clone()),
        final_goal_error: last.map_or((f64::NAN, f64::NAN), |r| (r.goal_position_error, r.goal_angle_error)),
        final_true_goal_error: last.map_or((f64::NAN, f64::NAN), |r| {
            (r.true_goal_position_error, r.true_goal_angle_error)
        }),
        reached_post: post_row.is_some(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contact::ContactPoint;
    use crate::dynamics::{BoxState, Pose2, RobotState};
    use crate::qp::QpStatus;
    use nalgebra::Vector2;

    fn row(t: f64, phase: Phase, gaps: [f64; 4], tau: f64) -> LogRow {
        LogRow {
            t,
            phase,
            robots: [RobotState::rigid(Vector3::zeros(), Vector3::zeros()); 2],
            box_state: BoxState::at_rest(Vector2::zeros(), 0.0),
            contacts: gaps.map(|gap| ContactPoint {
                gap,
                ..ContactPoint::default()
            }),
            tau: [Vector3::repeat(tau), Vector3::zeros()],
            ee: [Pose2::new(0.0, 0.0, 0.0); 2],
            ee_twist: [Vector3::zeros(); 2],
            ee_reference: [Vector3::zeros(); 2],
            box_estimate: BoxState::at_rest(Vector2::zeros(), 0.0),
            box_reference: Vector3::zeros(),
            err_sync: 0.0,
            err_track: [0.0; 2],
            err_box: 0.0,
            goal_position_error: 1.0,
            goal_angle_error: 1.0,
            true_goal_position_error: 1.0,
            true_goal_angle_error: 1.0,
            qp_status: QpStatus::Optimal,
            kkt_residual: 0.0,
            fault: None,
        }
    }

    #[test]
    fn simultaneous_impacts_have_zero_gap() {
        let rows = vec![
            row(0.0, Phase::Ante, [0.01; 4], 0.0),
            row(0.001, Phase::Interim, [-1e-5, 0.01, 0.01, -1e-5], 0.0),
        ];
        let m = compute_metrics(&rows, &SimConfig::default());
        assert_eq!(m.impact_time_gap, Some(0.0));
    }

    #[test]
    fn constant_torque_has_no_jump() {
        let rows: Vec<_> = (0..10)
            .map(|k| {
                let phase = if k < 5 { Phase::Interim } else { Phase::Post };
                row(k as f64 * 1e-3, phase, [-1e-5; 4], 2.0)
            })
            .collect();
        let m = compute_metrics(&rows, &SimConfig::default());
        assert_eq!(m.max_torque_jump_at_post_entry, Some(0.0));
        assert_eq!(m.peak_torque, 2.0);
    }

    #[test]
    fn known_torque_step() {
        let rows = vec![
            row(0.0, Phase::Interim, [-1e-5; 4], 1.0),
            row(0.001, Phase::Post, [-1e-5; 4], 4.0),
        ];
        let m = compute_metrics(&rows, &SimConfig::default());
        assert_eq!(m.max_torque_jump_at_post_entry, Some(3.0));
    }

    #[test]
    fn interim_rate_window_excludes_post_entry() {
        let rows = vec![
            row(0.000, Phase::Ante, [0.01; 4], 0.0),
            row(0.001, Phase::Interim, [-1e-5, 0.01, 0.01, 0.01], 0.5),
            row(0.002, Phase::Interim, [-1e-5; 4], 0.7),
            row(0.003, Phase::Post, [-1e-5; 4], 9.0),
        ];
        let m = compute_metrics(&rows, &SimConfig::default());
        assert!((m.interim_torque_rate_peak.unwrap() - 500.0).abs() < 1e-9);
    }

    #[test]
    fn incomplete_episode_gives_partial_metrics() {
        let rows = vec![row(0.0, Phase::Ante, [0.01; 4], 0.0)];
        let m = compute_metrics(&rows, &SimConfig::default());
        assert_eq!(m.impact_time_gap, None);
        assert_eq!(m.max_torque_jump_at_post_entry, None);
        assert!(!m.success && !m.reached_post);
    }

    #[test]
    fn success_needs_the_hold_time() {
        let sim = SimConfig::default();
        let mut rows: Vec<_> = (0..=100)
            .map(|k| {
                let mut r = row(k as f64 * 1e-3, Phase::Post, [-1e-5; 4], 0.0);
                r.goal_position_error = 1e-3;
                r.goal_angle_error = 0.0;
                r
            })
            .collect();
        assert_eq!(success_row(&rows, &sim), Some(100));
        rows[50].goal_position_error = 0.01;
        assert_eq!(success_row(&rows, &sim), None);
    }
}
