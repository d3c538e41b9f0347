//! Validation protocol: scenarios, metrics, suites and figure output.

mod metrics;
mod plots;
mod scenario;
mod suite;

pub use metrics::{compute_metrics, success_row, Metrics};
pub use plots::{emit_plots, figure_csv, figure_svg, figures, phase_boundaries, Figure};
pub use scenario::Scenario;
pub use suite::{
    episode_metadata, outcome_label, predictor_for, run_suite, summary_csv, summary_record, summary_table,
    write_episode, write_suite, EpisodeResult, SUMMARY_COLUMNS,
};
