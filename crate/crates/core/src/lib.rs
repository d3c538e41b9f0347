//! Planar dual-arm impact-aware grasping: dynamics, compliant contact,
//! reference fields, QP controllers, simulation and evaluation harness.

// `!(x > 0.0)` is used on purpose so that NaN parameters are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod contact;
pub mod controller;
pub mod dynamics;
pub mod error;
pub mod fields;
pub mod harness;
pub mod predictor;
pub mod qp;
pub mod sim;

pub use config::Config;
pub use contact::{ContactParams, ContactPoint};
pub use controller::{Controller, ControllerGains, ControllerOptions, Phase, Variant};
pub use dynamics::{BoxParams, BoxState, FlexParams, Pose2, RobotParams, RobotState};
pub use error::{Error, Result};
pub use harness::{Metrics, Scenario};
pub use predictor::{PredictorConfig, RbfModel};
pub use qp::{QpProblem, QpSolution, QpStatus};
pub use sim::{EpisodeLog, Mode, SimConfig};
