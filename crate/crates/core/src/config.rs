//! The single versioned run configuration.
//!
//! Layering: built-in defaults (`configs/default.toml`), then an optional
//! user file, then command-line overrides. Unknown keys are rejected at
//! every level.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::BaselineConfig;
use crate::error::{Error, Result};
use crate::experiments::{SweepConfig, TrainingConfig};
use crate::imaging::ThresholdSegmenter;
use crate::models::FusionConfig;
use crate::simulator::{ExperimentDesign, KineticsParams, RenderSpec, VariabilityParams};

pub const CONFIG_VERSION: u32 = 1;
pub const DEFAULT_CONFIG_TOML: &str = include_str!("../../../configs/default.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulatorConfig {
    pub kinetics: KineticsParams,
    pub variability: VariabilityParams,
    pub render: RenderSpec,
    pub design: ExperimentDesign,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImagingConfig {
    /// Illuminant the images were captured under, kelvin.
    pub source_cct: f64,
    /// White point images are corrected to, kelvin.
    pub target_cct: f64,
    pub segmenter: ThresholdSegmenter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    /// Drives the simulator and per-fold shuffling.
    pub seed: u64,
    /// Omits wall-clock fields so equal inputs give byte-identical reports.
    pub deterministic: bool,
    pub simulator: SimulatorConfig,
    pub imaging: ImagingConfig,
    pub fusion: FusionConfig,
    pub training: TrainingConfig,
    pub baselines: BaselineConfig,
    pub sweep: SweepConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::from_toml(DEFAULT_CONFIG_TOML).expect("built-in configuration is valid")
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Defaults with a partial TOML document merged on top.
    pub fn layered(overlay: &str) -> Result<Self> {
        let mut base: toml::Value = toml::from_str(DEFAULT_CONFIG_TOML).map_err(|e| Error::Config(e.to_string()))?;
        let top: toml::Value = toml::from_str(overlay).map_err(|e| Error::Config(e.to_string()))?;
        merge(&mut base, top);
        let cfg: Self = base.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::layered(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "config version {} is not supported (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        let sim = &self.simulator;
        sim.kinetics.validate()?;
        sim.variability.validate()?;
        sim.render.validate()?;
        sim.design.validate()?;
        crate::imaging::ChannelGains::between(self.imaging.source_cct, self.imaging.target_cct)?;
        self.fusion.validate()?;
        self.training.validate()?;
        self.sweep.validate()?;
        Ok(())
    }

    /// Sets the master seed and the model initialization seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.fusion.seed = seed;
        self
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

fn merge(base: &mut toml::Value, top: toml::Value) {
    match (base, top) {
        (toml::Value::Table(b), toml::Value::Table(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(existing) if existing.is_table() && v.is_table() => merge(existing, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, t) => *b = t,
    }
}
