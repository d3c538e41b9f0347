//! Runs a list of scenarios in parallel and writes per-episode logs,
//! figure data and a summary table.

use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use super::metrics::{compute_metrics, Metrics};
use super::plots::emit_plots;
use super::Scenario;
use crate::config::Config;
use crate::controller::Variant;
use crate::error::{Error, Result};
use crate::predictor::{fit_from_config, RbfModel};
use crate::sim::{run_episode, EpisodeLog, Outcome};

pub struct EpisodeResult {
    pub scenario: Scenario,
    /// The episode, or why it could not run at all.
    pub log: std::result::Result<EpisodeLog, String>,
    pub metrics: Option<Metrics>,
}

/// Loads the model at `path`, or fits one from the config when the path is
/// absent. Returns `None` when no scenario needs it.
pub fn predictor_for(config: &Config, scenarios: &[Scenario], path: Option<&Path>) -> Result<Option<Arc<RbfModel>>> {
    if !scenarios.iter().any(|s| s.variant == Variant::Proposed) {
        return Ok(None);
    }
    let model = match path {
        Some(p) => RbfModel::load(p)?,
        None => fit_from_config(config)?.0,
    };
    Ok(Some(Arc::new(model)))
}

/// Episodes run in parallel; results keep the order of `scenarios`. A
/// failed episode is recorded and the others continue.
pub fn run_suite(config: &Config, scenarios: &[Scenario], predictor: Option<Arc<RbfModel>>) -> Vec<EpisodeResult> {
    scenarios
        .par_iter()
        .map(|s| {
            let log = run_episode(config, s, predictor.clone()).map_err(|e| e.to_string());
            let metrics = log.as_ref().ok().map(|l| compute_metrics(&l.rows, &config.sim));
            EpisodeResult {
                scenario: s.clone(),
                log,
                metrics,
            }
        })
        .collect()
}

pub const SUMMARY_COLUMNS: [&str; 14] = [
    "scenario",
    "variant",
    "mode",
    "outcome",
    "success",
    "impact_time_gap",
    "max_torque_jump_at_post_entry",
    "interim_torque_rate_peak",
    "post_velocity_mismatch",
    "peak_torque",
    "final_position_error",
    "final_angle_error_deg",
    "final_true_position_error",
    "final_true_angle_error_deg",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Outcome label derived from the metrics alone.
pub fn outcome_label(m: &Metrics) -> &'static str {
    if m.fault.is_some() {
        "fault"
    } else if m.success {
        "success"
    } else {
        "horizon"
    }
}

pub fn summary_record(scenario: &Scenario, metrics: Option<&Metrics>, error: Option<&str>) -> Vec<String> {
    let mut rec = vec![
        scenario.name.clone(),
        scenario.variant.to_string(),
        scenario.mode.to_string(),
    ];
    match metrics {
        Some(m) => rec.extend([
            outcome_label(m).to_string(),
            m.success.to_string(),
            opt(m.impact_time_gap),
            opt(m.max_torque_jump_at_post_entry),
            opt(m.interim_torque_rate_peak),
            opt(m.post_velocity_mismatch),
            m.peak_torque.to_string(),
            m.final_goal_error.0.to_string(),
            m.final_goal_error.1.to_degrees().to_string(),
            m.final_true_goal_error.0.to_string(),
            m.final_true_goal_error.1.to_degrees().to_string(),
        ]),
        None => {
            rec.push(format!("error: {}", error.unwrap_or("unknown")));
            rec.push("false".into());
            rec.extend(std::iter::repeat_n(String::new(), SUMMARY_COLUMNS.len() - 5));
        }
    }
    rec
}

pub fn summary_csv(results: &[EpisodeResult]) -> String {
    let mut w = csv::Writer::from_writer(vec![]);
    w.write_record(SUMMARY_COLUMNS).expect("in-memory write");
    for r in results {
        w.write_record(summary_record(
            &r.scenario,
            r.metrics.as_ref(),
            r.log.as_ref().err().map(String::as_str),
        ))
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("CSV output is UTF-8")
}

/// Human-readable aligned table of the summary.
pub fn summary_table(results: &[EpisodeResult]) -> String {
    let short = [
        "scenario",
        "outcome",
        "t_gap[ms]",
        "jump@post[Nm]",
        "rate[Nm/s]",
        "v_mis[m/s]",
        "peak[Nm]",
        "err[mm]",
        "err[deg]",
    ];
    let fmt =
        |v: Option<f64>, scale: f64, prec: usize| v.map_or("-".to_string(), |x| format!("{:.*}", prec, x * scale));
    let mut rows: Vec<Vec<String>> = vec![short.iter().map(|s| s.to_string()).collect()];
    for r in results {
        let row = match &r.metrics {
            Some(m) => vec![
                r.scenario.name.clone(),
                outcome_label(m).to_string(),
                fmt(m.impact_time_gap, 1e3, 1),
                fmt(m.max_torque_jump_at_post_entry, 1.0, 3),
                fmt(m.interim_torque_rate_peak, 1.0, 1),
                fmt(m.post_velocity_mismatch, 1.0, 4),
                format!("{:.2}", m.peak_torque),
                format!("{:.2}", m.final_goal_error.0 * 1e3),
                format!("{:.2}", m.final_goal_error.1.to_degrees()),
            ],
            None => {
                let mut v = vec![r.scenario.name.clone(), "error".into()];
                v.extend(std::iter::repeat_n("-".to_string(), short.len() - 2));
                v
            }
        };
        rows.push(row);
    }
    let widths: Vec<usize> = (0..short.len())
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (k, r) in rows.iter().enumerate() {
        let cells: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(c, s)| {
                if c == 0 {
                    format!("{s:<width$}", width = widths[c])
                } else {
                    format!("{s:>width$}", width = widths[c])
                }
            })
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
        if k == 0 {
            out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
            out.push('\n');
        }
    }
    out
}

#[derive(Serialize)]
struct RunInfo<'a> {
    scenario: &'a str,
    variant: String,
    mode: String,
    outcome: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    outcome_time: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    fault: Option<&'a str>,
    rows: usize,
}

#[derive(Serialize)]
struct Meta<'a> {
    run: RunInfo<'a>,
    scenario: &'a Scenario,
    config: &'a Config,
}

/// Companion metadata: outcome plus the fully resolved config.
pub fn episode_metadata(config: &Config, scenario: &Scenario, log: &EpisodeLog) -> String {
    let (outcome_time, fault) = match &log.outcome {
        Outcome::Success { t } => (Some(*t), None),
        Outcome::Horizon => (None, None),
        Outcome::Fault { t, message } => (Some(*t), Some(message.as_str())),
    };
    let meta = Meta {
        run: RunInfo {
            scenario: &scenario.name,
            variant: scenario.variant.to_string(),
            mode: scenario.mode.to_string(),
            outcome: log.outcome.label(),
            outcome_time,
            fault,
            rows: log.rows.len(),
        },
        scenario,
        config,
    };
    toml::to_string(&meta).expect("metadata is representable as TOML")
}

/// `episode.csv`, `episode.meta.toml` and `figures/` in `dir`.
pub fn write_episode(dir: &Path, config: &Config, scenario: &Scenario, log: &EpisodeLog) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    log.write_csv(dir.join("episode.csv"))?;
    let meta = dir.join("episode.meta.toml");
    std::fs::write(&meta, episode_metadata(config, scenario, log)).map_err(|e| Error::io(&meta, e))?;
    emit_plots(&log.rows, &dir.join("figures"))
}

/// Per-scenario directories plus `summary.csv` and `summary.txt` in `out`.
pub fn write_suite(out: &Path, config: &Config, results: &[EpisodeResult]) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    for r in results {
        if let Ok(log) = &r.log {
            write_episode(&out.join(&r.scenario.name), config, &r.scenario, log)?;
        }
    }
    let csv_path = out.join("summary.csv");
    std::fs::write(&csv_path, summary_csv(results)).map_err(|e| Error::io(&csv_path, e))?;
    let txt = out.join("summary.txt");
    std::fs::write(&txt, summary_table(results)).map_err(|e| Error::io(&txt, e))
}
