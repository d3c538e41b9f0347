use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::controller::Variant;
use crate::sim::Mode;

/// One validation run: controller variant, plant mode, true-box
/// perturbation and starting configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Scenario {
    pub name: String,
    pub variant: Variant,
    pub mode: Mode,
    /// Rotation of the true box relative to the estimate (deg).
    pub box_rotation_deg: f64,
    /// Vertical shift of the true box relative to the estimate (m).
    pub box_shift_y: f64,
    /// End-effector poses `[x, y, θ]` the arms start from; joint angles by IK.
    pub initial_ee: [[f64; 3]; 2],
    /// Explicit joint angles; overrides `initial_ee` when present.
    pub initial_q: Option<[[f64; 3]; 2]>,
    /// Overrides the synchronization weight `w_a_s`.
    pub sync_weight: Option<f64>,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            name: "perturbed".into(),
            variant: Variant::Proposed,
            mode: Mode::Flexible,
            box_rotation_deg: 2.5,
            box_shift_y: 0.005,
            initial_ee: [[-0.5, 0.15, 0.25], [0.38, -0.02, PI - 0.1]],
            initial_q: None,
            sync_weight: None,
        }
    }
}

impl Scenario {
    /// Same scenario under another controller variant, named `<name>-<variant>`.
    pub fn with_variant(&self, variant: Variant) -> Self {
        Scenario {
            name: format!("{}-{}", self.name, variant),
            variant,
            ..self.clone()
        }
    }

    /// The three-variant comparison of the validation protocol.
    pub fn comparison_suite(&self) -> Vec<Scenario> {
        Variant::ALL.iter().map(|v| self.with_variant(*v)).collect()
    }
}
