//! TOML configuration. Every section is optional; missing sections and
//! fields take the documented defaults.
//!
//! ```toml
//! [[robots]]          # exactly two entries when present
//! [box]               # BoxParams (gravity lives here)
//! [contact]           # ContactParams
//! [flexible]          # FlexParams
//! [fields]            # FieldConfig
//! [controller]        # ControllerGains
//! [predictor]         # PredictorConfig
//! [sim]               # SimConfig
//! [scenario]          # Scenario
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::contact::ContactParams;
use crate::controller::{ControlModel, ControllerGains};
use crate::dynamics::{BoxParams, FlexParams, RobotParams};
use crate::error::{Error, Result};
use crate::fields::FieldConfig;
use crate::harness::Scenario;
use crate::predictor::PredictorConfig;
use crate::sim::SimConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub robots: [RobotParams; 2],
    #[serde(rename = "box")]
    pub box_params: BoxParams,
    pub contact: ContactParams,
    pub flexible: FlexParams,
    pub fields: FieldConfig,
    pub controller: ControllerGains,
    pub predictor: PredictorConfig,
    pub sim: SimConfig,
    pub scenario: Scenario,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            robots: [
                RobotParams::with_base(-0.75, 0.0, 0.0),
                RobotParams::with_base(0.75, 0.0, std::f64::consts::PI),
            ],
            box_params: BoxParams::default(),
            contact: ContactParams::default(),
            flexible: FlexParams::default(),
            fields: FieldConfig::default(),
            controller: ControllerGains::default(),
            predictor: PredictorConfig::default(),
            sim: SimConfig::default(),
            scenario: Scenario::default(),
        }
    }
}

impl Config {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config = Self::from_toml(&text)?;
        Ok(config)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn validate(&self) -> Result<()> {
        for r in &self.robots {
            r.validate()?;
        }
        self.box_params.validate()?;
        self.contact.validate()?;
        self.flexible.validate()?;
        self.controller.validate(self.contact.friction)?;
        self.predictor.validate()?;
        self.sim.validate(self.controller.dt)?;
        self.control_model()?;
        Ok(())
    }

    pub fn control_model(&self) -> Result<ControlModel> {
        ControlModel::new(
            self.robots.clone(),
            self.box_params.clone(),
            self.controller.clone(),
            self.fields.clone(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(Config::from_toml("").unwrap(), Config::default());
    }

    #[test]
    fn round_trip() {
        let c = Config::default();
        assert_eq!(Config::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn partial_override() {
        let c = Config::from_toml(
            "[controller]\nw_a_s = 0.0\n[box]\nwidth = 0.3\nheight = 0.2\nmass = 2.0\ninertia = 0.02\ngravity = 0.0\n",
        )
        .unwrap();
        assert_eq!(c.controller.w_a_s, 0.0);
        assert_eq!(c.controller.k_a_p, 20.0);
        assert_eq!(c.box_params.mass, 2.0);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(Config::from_toml("[controller]\nbogus = 1\n").is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(Config::from_toml("[controller]\nmu_est = 0.7\n").is_err());
        assert!(Config::from_toml("[controller]\ntau_min = 50.0\n").is_err());
    }
}
