//! The JSON run configuration. Every section and field is optional; missing
//! values take the library defaults and unknown fields are rejected.

use std::path::Path;

use aimdgrid_core::learning::DEFAULT_BAND_PU;
use aimdgrid_core::{FeederConfig, ScenarioConfig, SimConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    /// Seconds between training samples taken from the baseline.
    pub sampling_s: u32,
    /// Per-unit window searched for the threshold voltage.
    pub band_pu: (f64, f64),
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self { sampling_s: 60, band_pu: DEFAULT_BAND_PU }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Seconds between rows of the series files.
    pub record_every_s: u32,
    /// EVs included in the one-second current plot file.
    pub plot_evs: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { record_every_s: 60, plot_evs: 8 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub feeder: FeederConfig,
    pub scenario: ScenarioConfig,
    pub simulation: SimConfig,
    pub training: TrainingConfig,
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            CliError::parse(path, format!("field `{field}`: {}", e.into_inner()))
        })?;
        cfg.check().map_err(|m| CliError::parse(path, m))?;
        Ok(cfg)
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    /// Cross-section consistency beyond what each section checks itself.
    pub fn check(&self) -> std::result::Result<(), String> {
        self.feeder.check().map_err(|e| e.to_string())?;
        self.scenario.check().map_err(|e| e.to_string())?;
        self.simulation.check().map_err(|e| e.to_string())?;
        if self.scenario.horizon_s != self.simulation.horizon_s {
            return Err(format!(
                "scenario.horizon_s ({}) and simulation.horizon_s ({}) differ",
                self.scenario.horizon_s, self.simulation.horizon_s
            ));
        }
        let (lo, hi) = self.training.band_pu;
        if !(lo > 0.0 && lo < hi && hi.is_finite()) {
            return Err("training.band_pu must be an increasing pair of positive numbers".into());
        }
        if self.training.sampling_s == 0 {
            return Err("training.sampling_s must be positive".into());
        }
        let rec = self.output.record_every_s;
        if rec == 0 || !rec.is_multiple_of(self.simulation.dt_s) {
            return Err("output.record_every_s must be a positive multiple of simulation.dt_s".into());
        }
        Ok(())
    }
}
