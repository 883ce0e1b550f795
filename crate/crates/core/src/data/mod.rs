//! C-MAPSS ingestion, min-max normalization, stride-one windowing with
//! piecewise-linear RUL labels, and engine-level train/validation splits.

mod cmapss;
mod dataset;
mod normalize;
pub mod synthetic;
mod windows;

use std::path::PathBuf;

use thiserror::Error;

pub use cmapss::{
    load_subset, parse_cmapss, parse_rul_vector, parse_trajectories, subset_paths, to_flat_text,
    CycleRecord, RawSubset, Trajectory, N_COLUMNS, N_SENSORS, N_SETTINGS,
};
pub use dataset::{DataConfig, DomainDataset};
pub use normalize::{fit_normalization, FeatureSelection, NormalizationStats};
pub use synthetic::SyntheticDomain;
pub use windows::{last_window, make_windows, rul_label, split_train_val, DomainTag, WindowSample};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}: {msg}", path.display())]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("integrity: {0}")]
    Integrity(String),
    #[error("{0}")]
    Argument(String),
    #[error("need at least 2 trajectories to split, got {0}")]
    Split(usize),
}
