//! Run configuration: input selection, model and sampler parameters,
//! annealing schedule and grid settings, loadable from TOML. A config plus
//! its seed fully determines a run.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::SyntheticSpec;
use crate::error::{HugError, Result};
use crate::model::ThetaPrior;
use crate::sampler::{AnnealingSchedule, SamplerConfig};

/// Where the samples come from: a CSV file or a synthetic mixing system.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InputConfig {
    pub csv: Option<PathBuf>,
    pub synthetic: Option<SyntheticSpec>,
}

/// Interaction radius and the Gaussian prior on the energy weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub interaction_radius: f64,
    pub prior_means: [f64; 4],
    pub prior_variances: [f64; 4],
}

impl Default for ModelConfig {
    fn default() -> Self {
        let prior = ThetaPrior::default();
        ModelConfig {
            interaction_radius: 0.01,
            prior_means: prior.means,
            prior_variances: prior.variances,
        }
    }
}

impl ModelConfig {
    pub fn prior(&self) -> ThetaPrior {
        ThetaPrior {
            means: self.prior_means,
            variances: self.prior_variances,
        }
    }
}

/// Level-set grid resolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub cell_length: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { cell_length: 0.02 }
    }
}

/// Optional per-dimension normalization thresholds; the default threshold
/// is the observed range of each dimension.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NormalizationConfig {
    pub deltas: Option<Vec<f64>>,
}

/// The full, echoable configuration of a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub input: InputConfig,
    pub model: ModelConfig,
    pub sampler: SamplerConfig,
    pub schedule: AnnealingSchedule,
    pub grid: GridConfig,
    pub normalization: NormalizationConfig,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| HugError::config(format!("config parse: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HugError::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| HugError::config(format!("config encode: {e}")))
    }

    /// Validates all parts; returns non-fatal warnings (for example when the
    /// trace will hold fewer records than `keep_last`).
    pub fn validate(&self) -> Result<Vec<String>> {
        self.sampler.validate()?;
        self.schedule.validate()?;
        self.model.prior().validate()?;
        if !(self.model.interaction_radius > 0.0 && self.model.interaction_radius.is_finite()) {
            return Err(HugError::config("interaction radius must be positive"));
        }
        if !(self.grid.cell_length > 0.0) {
            return Err(HugError::config("grid cell length must be positive"));
        }
        let mut warnings = Vec::new();
        let saved = self.schedule.iterations / self.schedule.save_every;
        if (saved as usize) < self.schedule.keep_last {
            warnings.push(format!(
                "schedule saves {} records but keep_last is {}; inference will use all of them",
                saved + 1,
                self.schedule.keep_last
            ));
        }
        Ok(warnings)
    }
}

/// Named parameter presets.
///
/// `paper` is the full-scale setup (hours of runtime); `desk` shortens the
/// run to minutes by cutting the iteration count tenfold and cooling ten
/// times faster, so the temperature still traverses the whole range.
/// `paper-hot` is `paper` with the alternative initial temperature 2e4.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Paper,
    PaperHot,
    Desk,
}

impl FromStr for Preset {
    type Err = HugError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Preset::Paper),
            "paper-hot" => Ok(Preset::PaperHot),
            "desk" => Ok(Preset::Desk),
            other => Err(HugError::config(format!(
                "unknown preset '{other}' (expected paper, paper-hot or desk)"
            ))),
        }
    }
}

impl Preset {
    pub fn schedule(self) -> AnnealingSchedule {
        match self {
            Preset::Paper => AnnealingSchedule::default(),
            Preset::PaperHot => AnnealingSchedule {
                initial_temperature: 2e4,
                ..AnnealingSchedule::default()
            },
            Preset::Desk => AnnealingSchedule {
                iterations: 350_000,
                cooling: 0.9999,
                save_every: 350,
                ..AnnealingSchedule::default()
            },
        }
    }

    pub fn apply(self, config: &mut RunConfig) {
        config.schedule = self.schedule();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let config = RunConfig::default();
        let text = config.to_toml().unwrap();
        let back = RunConfig::from_toml_str(&text).unwrap();
        assert_eq!(config, back);
    }

    #[test]
    fn partial_toml_fills_defaults() {
        let config = RunConfig::from_toml_str(
            r#"
            seed = 7
            [schedule]
            iterations = 1000
            "#,
        )
        .unwrap();
        assert_eq!(config.seed, 7);
        assert_eq!(config.schedule.iterations, 1000);
        assert_eq!(config.schedule.cooling, 0.99999);
        assert_eq!(config.sampler.p_change, 0.6);
        assert_eq!(config.model.interaction_radius, 0.01);
    }

    #[test]
    fn presets_traverse_the_full_temperature_range() {
        for preset in [Preset::Paper, Preset::PaperHot, Preset::Desk] {
            let s = preset.schedule();
            let floor_at = (s.min_temperature / s.initial_temperature).ln() / s.cooling.ln();
            assert!(
                (floor_at as u64) < s.iterations,
                "{preset:?} never reaches its floor"
            );
            assert!(s.iterations as usize >= s.keep_last * s.save_every as usize);
        }
        assert_eq!(Preset::Desk.schedule().iterations, 350_000);
        assert_eq!(Preset::PaperHot.schedule().initial_temperature, 2e4);
    }

    #[test]
    fn bad_configs_are_rejected() {
        let mut config = RunConfig::default();
        config.sampler.p_birth = 0.9;
        config.sampler.p_death = 0.9;
        assert!(config.validate().is_err());

        let mut config = RunConfig::default();
        config.schedule.cooling = 1.5;
        assert!(config.validate().is_err());

        let mut config = RunConfig::default();
        config.model.prior_variances[2] = 0.0;
        assert!(config.validate().is_err());
    }

    #[test]
    fn short_runs_warn_about_keep_last() {
        let mut config = RunConfig::default();
        config.schedule.iterations = 10;
        config.schedule.save_every = 5;
        let warnings = config.validate().unwrap();
        assert_eq!(warnings.len(), 1);
    }

    #[test]
    fn preset_parsing() {
        assert_eq!("desk".parse::<Preset>().unwrap(), Preset::Desk);
        assert!("Desk".parse::<Preset>().is_err());
    }
}
