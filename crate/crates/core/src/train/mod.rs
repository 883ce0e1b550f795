//! Paired-domain optimization: batching, Adam, learning-rate decay, the
//! gated composite objective, checkpoints and the per-seed driver.

mod batching;
mod checkpoint;
mod experiment;
mod optim;
mod step;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use batching::{make_batches, BatchPair};
pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC};
pub use experiment::{run_experiment, run_seed, RunArtifacts, SeedOutcome};
pub use optim::{lr_schedule, Adam, AdamConfig};
pub use step::{StepLosses, Trainer, LOG_HEADER};

use crate::data::{DataConfig, DataError};
use crate::eval::{EvalError, ScoreConvention};
use crate::losses::{KernelSpec, LossError, LossWeights};
use crate::model::{ModelConfig, ModelError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("{0}")]
    Argument(String),
    #[error("non-finite loss at iteration {iteration}: {dump}")]
    NonFinite { iteration: u64, dump: String },
    #[error("checkpoint was written for config {found}, current config is {expected}")]
    ConfigMismatch { expected: String, found: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Which objective a run optimizes on top of the source RUL loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Source RUL loss only.
    NoDa,
    /// Adversarial domain classifier on the bottleneck.
    Dann,
    /// Kernel MMD on bottleneck and projection, baseline weight.
    Mmd,
    /// Covariance alignment on the projection, baseline weight.
    Coral,
    /// MMD + reconstruction + smoothness.
    Lamanet,
    /// Ablation: MMD alone at the full model's weight.
    LamaMmd,
    /// Ablation: MMD + reconstruction.
    LamaMmdAe,
}

impl Variant {
    pub const BASELINES: [Variant; 5] = [
        Variant::NoDa,
        Variant::Dann,
        Variant::Mmd,
        Variant::Coral,
        Variant::Lamanet,
    ];
    pub const ABLATION: [Variant; 3] = [Variant::LamaMmd, Variant::LamaMmdAe, Variant::Lamanet];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::NoDa => "no_da",
            Variant::Dann => "dann",
            Variant::Mmd => "mmd",
            Variant::Coral => "coral",
            Variant::Lamanet => "lamanet",
            Variant::LamaMmd => "lama_mmd",
            Variant::LamaMmdAe => "lama_mmd_ae",
        }
    }

    /// Composite-loss weights this variant uses, derived from the run config.
    pub fn weights(self, cfg: &RunConfig) -> LossWeights {
        let w = cfg.weights;
        let off = LossWeights {
            lambda_m: 0.0,
            lambda_r: 0.0,
            lambda_s: 0.0,
            ..w
        };
        match self {
            Variant::Lamanet => w,
            Variant::LamaMmdAe => LossWeights { lambda_s: 0.0, ..w },
            Variant::LamaMmd => LossWeights {
                lambda_r: 0.0,
                lambda_s: 0.0,
                ..w
            },
            Variant::Mmd => LossWeights {
                lambda_m: cfg.baseline_lambda,
                ..off
            },
            Variant::NoDa | Variant::Dann | Variant::Coral => off,
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let all = [
            Variant::NoDa,
            Variant::Dann,
            Variant::Mmd,
            Variant::Coral,
            Variant::Lamanet,
            Variant::LamaMmd,
            Variant::LamaMmdAe,
        ];
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        all.into_iter()
            .find(|v| v.as_str() == norm)
            .ok_or_else(|| format!("unknown variant {s:?}"))
    }
}

/// Everything that determines one training run apart from the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub source: String,
    pub target: String,
    pub variant: Variant,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub epochs: usize,
    /// Total windows per step, split evenly between the domains.
    pub batch: usize,
    pub lr: f64,
    pub decay_gamma: f64,
    pub decay_start: u64,
    pub adam: AdamConfig,
    pub weights: LossWeights,
    pub kernel: KernelSpec,
    /// λ of the MMD and CORAL baselines.
    pub baseline_lambda: f64,
    /// Gradient-reversal weight of the DANN baseline.
    pub dann_weight: f64,
    pub score: ScoreConvention,
    pub seeds: Vec<u64>,
    /// Stop after this many steps instead of `epochs` full epochs.
    pub max_iterations: Option<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            source: "FD002".into(),
            target: "FD001".into(),
            variant: Variant::Lamanet,
            data: DataConfig::default(),
            model: ModelConfig::default(),
            epochs: 40,
            batch: 128,
            lr: 1e-3,
            decay_gamma: 0.95,
            decay_start: 100,
            adam: AdamConfig::default(),
            weights: LossWeights::default(),
            kernel: KernelSpec::MedianHeuristic,
            baseline_lambda: 0.2,
            dann_weight: 0.2,
            score: ScoreConvention::Printed,
            seeds: vec![1, 123074, 2457],
            max_iterations: None,
        }
    }
}

impl RunConfig {
    /// Small widths on `f = 8` compact features and `K = 16`.
    pub fn toy() -> Self {
        let data = DataConfig {
            window: 16,
            features: crate::data::FeatureSelection::compact(),
            ..DataConfig::default()
        };
        Self {
            model: ModelConfig::toy(data.features.len(), data.window),
            data,
            batch: 32,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let arg = |m: String| Err(TrainError::Argument(m));
        if self.batch == 0 || self.batch % 2 != 0 {
            return arg(format!("batch must be even and positive, got {}", self.batch));
        }
        if self.epochs == 0 && self.max_iterations.is_none() {
            return arg("epochs must be positive".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return arg(format!("lr must be positive, got {}", self.lr));
        }
        if !(self.decay_gamma > 0.0 && self.decay_gamma <= 1.0) {
            return arg(format!("decay_gamma must lie in (0, 1], got {}", self.decay_gamma));
        }
        if self.model.n_features != self.data.features.len() || self.model.window != self.data.window {
            return arg(format!(
                "model expects f={} K={} but data provides f={} K={}",
                self.model.n_features,
                self.model.window,
                self.data.features.len(),
                self.data.window
            ));
        }
        if self.baseline_lambda < 0.0 || self.dann_weight < 0.0 {
            return arg("baseline weights must be ≥ 0".into());
        }
        self.weights.validate()?;
        self.kernel.validate()?;
        self.model.validate()?;
        Ok(())
    }

    /// Hash identifying one `(config, seed)` run; the seed list is excluded.
    pub fn run_hash(&self, seed: u64) -> String {
        let mut c = self.clone();
        c.seeds = vec![seed];
        crate::config_hash(&c)
    }

    pub fn hash(&self) -> String {
        crate::config_hash(self)
    }

    pub fn pair_label(&self) -> String {
        format!("{}_to_{}", self.source, self.target)
    }
}
