//! Fixtures shared by the benches: a grasp-like state and the QPs built on it.

use dualgrasp_core::controller::{build_ante_qp, build_post_qp, estimate_box_state, ControlModel};
use dualgrasp_core::fields::PostFieldParams;
use dualgrasp_core::predictor::sample_impact_configs;
use dualgrasp_core::sim::World;
use dualgrasp_core::{Config, QpProblem};
use nalgebra::Vector2;

pub struct Fixture {
    pub config: Config,
    pub model: ControlModel,
    /// Both end effectors on the box faces, moving with the ante field.
    pub world: World,
}

impl Fixture {
    pub fn new() -> Self {
        let config = Config::default();
        let model = config.control_model().expect("default config is valid");
        let world = sample_impact_configs(&config, &[[0.02, -0.01]]).expect("default config is valid")[0].world;
        Fixture { config, model, world }
    }

    pub fn ante_qp(&self) -> QpProblem {
        build_ante_qp(&self.model, &self.world.robots).0
    }

    pub fn post_qp(&self) -> QpProblem {
        let est = estimate_box_state(&self.model.robots, &self.world.robots);
        let post = PostFieldParams::blended(&self.config.fields, est.p, Vector2::new(0.02, -0.17), 0.1);
        build_post_qp(&self.model, &self.world.robots, &est, &post).0
    }
}

impl Default for Fixture {
    fn default() -> Self {
        Self::new()
    }
}
