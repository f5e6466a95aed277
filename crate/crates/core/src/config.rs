//! Run configuration: every constant and schedule in one TOML-backed
//! struct. Absent keys fall back to defaults, so partial files work.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::attention::AttentionConfig;
use crate::constraints::{ConstraintConfig, DensifyConfig};
use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::optimizer::LearningRates;
use crate::rasterizer::RasterConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub seed: u64,
    pub iterations: u64,
    /// Enhanced-loss cadence: edge/frequency terms use the attention
    /// map every this many iterations (0 disables).
    pub attn_interval: u64,
    /// First iteration eligible for densification.
    pub densify_start: u64,
    /// Last iteration eligible for densification.
    pub densify_stop: u64,
    /// Opacity logits reset every this many iterations (0 disables).
    pub opacity_reset_interval: u64,
    /// Final position learning rate of the exponential decay.
    pub position_lr_final: f64,
    /// Decay horizon in steps; 0 means use `iterations`.
    pub position_lr_max_steps: u64,
    /// Scale multiplier for dense regions at initialization.
    pub dense_factor: f64,
    /// Initial activated opacity for new clouds.
    pub init_opacity: f64,
    /// Enable first-order view-dependent color.
    pub use_sh1: bool,
    /// Checkpoint cadence in iterations (0 disables).
    pub checkpoint_interval: u64,
    /// Every k-th view is held out of training (0 keeps all).
    pub holdout_every: u64,
    pub raster: RasterConfig,
    pub loss: LossWeights,
    pub attention: AttentionConfig,
    pub constraints: ConstraintConfig,
    pub densify: DensifyConfig,
    pub lr: LearningRates,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            iterations: 30_000,
            attn_interval: 50,
            densify_start: 500,
            densify_stop: 15_000,
            opacity_reset_interval: 3_000,
            position_lr_final: 1.6e-6,
            position_lr_max_steps: 0,
            dense_factor: 0.5,
            init_opacity: 0.1,
            use_sh1: true,
            checkpoint_interval: 1_000,
            holdout_every: 0,
            raster: RasterConfig::default(),
            loss: LossWeights::default(),
            attention: AttentionConfig::default(),
            constraints: ConstraintConfig::default(),
            densify: DensifyConfig::default(),
            lr: LearningRates::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidParameter(
                "iterations must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.init_opacity) || self.init_opacity <= 0.0 {
            return Err(Error::InvalidParameter(
                "init_opacity must lie in (0, 1)".into(),
            ));
        }
        if self.dense_factor <= 0.0 {
            return Err(Error::InvalidParameter(
                "dense_factor must be positive".into(),
            ));
        }
        if self.position_lr_final <= 0.0 || self.lr.position <= 0.0 {
            return Err(Error::InvalidParameter(
                "position learning rates must be positive".into(),
            ));
        }
        self.loss.validate()?;
        self.constraints.validate()?;
        self.densify.validate()?;
        Ok(())
    }

    pub fn position_lr_horizon(&self) -> u64 {
        if self.position_lr_max_steps > 0 {
            self.position_lr_max_steps
        } else {
            self.iterations
        }
    }

    pub fn load_toml(path: &Path) -> Result<TrainConfig> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let cfg: TrainConfig = toml::from_str(&text).map_err(|e| Error::Parse {
            file: path.to_path_buf(),
            line: e.span().map(|s| s.start).unwrap_or(0),
            message: e.message().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save_toml(&self, path: &Path) -> Result<()> {
        let text = toml::to_string_pretty(self)
            .map_err(|e| Error::Format(format!("config serialization: {e}")))?;
        std::fs::write(path, text).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        TrainConfig::default().validate().unwrap();
    }

    #[test]
    fn toml_round_trip_preserves_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.toml");
        let mut cfg = TrainConfig::default();
        cfg.iterations = 1234;
        cfg.loss.beta = 0.05;
        cfg.constraints.tau = 0.25;
        cfg.save_toml(&path).unwrap();
        let loaded = TrainConfig::load_toml(&path).unwrap();
        assert_eq!(loaded.iterations, 1234);
        assert_eq!(loaded.loss.beta, 0.05);
        assert_eq!(loaded.constraints.tau, 0.25);
    }

    #[test]
    fn partial_toml_uses_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.toml");
        std::fs::write(&path, "iterations = 77\n[loss]\nlambda = 0.3\n").unwrap();
        let cfg = TrainConfig::load_toml(&path).unwrap();
        assert_eq!(cfg.iterations, 77);
        assert_eq!(cfg.loss.lambda, 0.3);
        assert_eq!(cfg.attn_interval, 50);
        assert_eq!(cfg.constraints.tau, 0.3);
    }

    #[test]
    fn malformed_toml_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.toml");
        std::fs::write(&path, "iterations = \"many\"\n").unwrap();
        assert!(matches!(
            TrainConfig::load_toml(&path),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn invalid_values_are_rejected() {
        let mut cfg = TrainConfig::default();
        cfg.iterations = 0;
        assert!(cfg.validate().is_err());

        let mut cfg = TrainConfig::default();
        cfg.loss.lambda = 1.5;
        assert!(cfg.validate().is_err());
    }
}
