use serde::{Deserialize, Serialize};

use crate::characterization::SpreadMode;
use crate::clustering::ClusteringConfig;
use crate::error::{Error, Result};
use crate::sage::EstimatorConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CharacterizationConfig {
    pub spread_mode: SpreadMode,
    /// Frequency of the close-in model anchor; band centre when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ci_frequency_hz: Option<f64>,
    pub ci_d0_m: f64,
    /// De-embed the receive boresight gain from the best-direction loss.
    pub compensate_rx_gain: bool,
}

impl Default for CharacterizationConfig {
    fn default() -> Self {
        CharacterizationConfig {
            spread_mode: SpreadMode::Circular,
            ci_frequency_hz: None,
            ci_d0_m: 1.0,
            compensate_rx_gain: true,
        }
    }
}

/// Settings of every processing stage; loadable from a TOML file with
/// `[estimator]`, `[clustering]` and `[characterization]` tables.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub estimator: EstimatorConfig,
    pub clustering: ClusteringConfig,
    pub characterization: CharacterizationConfig,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.estimator.validate()?;
        self.clustering.validate()?;
        let c = &self.characterization;
        if !(c.ci_d0_m > 0.0 && c.ci_d0_m.is_finite()) {
            return Err(Error::invalid("close-in reference distance must be positive"));
        }
        if let Some(f) = c.ci_frequency_hz {
            if !(f > 0.0 && f.is_finite()) {
                return Err(Error::invalid("close-in anchor frequency must be positive"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_toml_keeps_defaults() {
        let cfg: PipelineConfig = toml::from_str("[clustering]\neps = 0.5\n").unwrap();
        assert_eq!(cfg.clustering.eps, 0.5);
        assert_eq!(cfg.clustering.min_pts, 2);
        assert_eq!(cfg.estimator, EstimatorConfig::default());
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(toml::from_str::<PipelineConfig>(&text).unwrap(), cfg);
    }
}
