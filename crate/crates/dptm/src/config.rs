//! Run configuration: TOML in, validated settings out, plus the canonical
//! echo form whose SHA-256 digest stamps every artifact of a run.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classifier::{Arch, TrainConfig};
use crate::error::{Error, Result};
use crate::manipulate::ManipulationConfig;
use crate::sampler::GuidanceConfig;
use crate::synthdata::BenchmarkSpec;

/// Manipulation settings as written in config files. Band cutoffs are
/// optional; unset ones resolve to side / 8.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ManipulationSection {
    pub gamma1: f64,
    pub gamma2: f64,
    pub steps: usize,
    pub rho_init: Option<f64>,
    pub rho_mix: Option<f64>,
}

impl Default for ManipulationSection {
    fn default() -> Self {
        ManipulationSection {
            gamma1: 5.5,
            gamma2: 0.0,
            steps: 20,
            rho_init: None,
            rho_mix: None,
        }
    }
}

impl ManipulationSection {
    pub fn resolve(&self, side: usize) -> ManipulationConfig {
        let fallback = side as f64 / 8.0;
        ManipulationConfig {
            guidance: GuidanceConfig {
                gamma1: self.gamma1,
                gamma2: self.gamma2,
                steps: self.steps,
            },
            rho_init: self.rho_init.unwrap_or(fallback),
            rho_mix: self.rho_mix.unwrap_or(fallback),
        }
    }
}

fn default_source_train() -> TrainConfig {
    TrainConfig {
        epochs: 30,
        batch_size: 64,
        learning_rate: 0.05,
        momentum: 0.9,
        weight_decay: 5e-4,
        input_noise: 0.0,
        center_inputs: true,
    }
}

fn default_adapt_train() -> TrainConfig {
    TrainConfig {
        epochs: 8,
        batch_size: 64,
        learning_rate: 0.02,
        momentum: 0.9,
        weight_decay: 5e-4,
        // Rewritten samples are posterior means, far cleaner than real
        // draws; jitter at the data noise level keeps the fine-tune from
        // fitting boundaries tighter than the evaluation distribution.
        input_noise: 0.3,
        center_inputs: true,
    }
}

fn default_model() -> Arch {
    Arch::OneHidden { hidden: 256 }
}

/// Complete description of one adaptation run. Every field has a default,
/// so an empty document is a valid config; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Output directory; resolved by the runner when unset.
    pub out_dir: Option<String>,
    /// Refinement rounds after the source baseline.
    pub rounds: usize,
    /// Trust threshold on prediction entropy, in nats.
    pub entropy_threshold: f64,
    pub benchmark: BenchmarkSpec,
    pub model: Arch,
    pub manipulation: ManipulationSection,
    pub source_train: TrainConfig,
    pub adapt_train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out_dir: None,
            rounds: 10,
            entropy_threshold: 0.01,
            benchmark: BenchmarkSpec::default(),
            model: default_model(),
            manipulation: ManipulationSection::default(),
            source_train: default_source_train(),
            adapt_train: default_adapt_train(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text)
            .map_err(|e| Error::config(format!("config parse failed: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.benchmark.validate()?;
        if !(self.entropy_threshold.is_finite() && self.entropy_threshold >= 0.0) {
            return Err(Error::config("entropy_threshold must be finite and >= 0"));
        }
        if let Arch::OneHidden { hidden } = self.model {
            if hidden == 0 {
                return Err(Error::config("model hidden width must be >= 1"));
            }
        }
        self.manipulation.resolve(self.benchmark.side).validate()?;
        self.source_train.validate()?;
        self.adapt_train.validate()?;
        Ok(())
    }

    /// Settings for the manipulation pipeline with cutoffs resolved against
    /// the benchmark side.
    pub fn manipulation_config(&self) -> ManipulationConfig {
        self.manipulation.resolve(self.benchmark.side)
    }

    /// Canonical serialized form: the exact bytes that get hashed and echoed
    /// into the run directory. Field order is fixed by the struct.
    pub fn canonical_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(format!("config serialize failed: {e}")))
    }

    /// Hex SHA-256 of the canonical form.
    pub fn config_hash(&self) -> Result<String> {
        let text = self.canonical_toml()?;
        let mut hasher = Sha256::new();
        hasher.update(text.as_bytes());
        let digest = hasher.finalize();
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }
}
