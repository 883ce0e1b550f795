//! Unsupervised domain adaptation for remaining-useful-life regression.
//!
//! The crate bundles everything needed to train and evaluate a shared-weight
//! attention encoder/decoder whose bottleneck is aligned across domains with a
//! kernel MMD penalty, structured by a recurrent reconstruction decoder and
//! regularized by a local smoothness constraint.
//!
//! * [`data`]: C-MAPSS parsing, normalization, windows and labels.
//! * [`autodiff`]: the reverse-mode tape every model and loss is built on.
//! * [`model`]: encoder, squeeze/expand bottleneck, decoder, RUL head and
//!   reconstruction cells.
//! * [`losses`]: RUL/reconstruction MSE, MMD, smoothness, CORAL and the
//!   adversarial domain classifier.
//! * [`train`]: paired batching, Adam, learning-rate schedule, checkpoints and
//!   the per-seed experiment driver.
//! * [`eval`]: RMSE, the asymmetric score, aggregation and latent export.

pub mod autodiff;
mod binio;
pub mod data;
pub mod eval;
pub mod losses;
pub mod model;
pub mod train;

pub use data::{DataConfig, DomainDataset, SyntheticDomain};
pub use eval::{MetricsReport, ScoreConvention};
pub use losses::{KernelSpec, LossWeights};
pub use model::{LamaNet, ModelConfig, ReconCell};
pub use train::{RunArtifacts, RunConfig, TrainError, Variant};

use serde::Serialize;
use sha2::{Digest, Sha256};

/// Hex SHA-256 of the JSON encoding of `value`.
pub fn config_hash<T: Serialize + ?Sized>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("config serializes");
    let digest = Sha256::digest(&json);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
