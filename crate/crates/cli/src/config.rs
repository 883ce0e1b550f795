use std::path::{Path, PathBuf};

use lamanet::{ReconCell, RunConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Where domain datasets come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    /// `train_<id>.txt`, `test_<id>.txt`, `RUL_<id>.txt` under `data_dir`.
    #[default]
    Cmapss,
    /// Built-in generated fleets `SYN_S` (source-like) and `SYN_T` (an affinely
    /// distorted copy). No files needed.
    Synthetic,
}

/// Hyperparameter grid explored by `sweep`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepGrid {
    pub lambda_m: Vec<f64>,
    pub lambda_r: Vec<f64>,
    pub lambda_s: Vec<f64>,
    pub gamma_noise: Vec<f64>,
    pub recon_cell: Vec<ReconCell>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        let lambdas = vec![0.1, 0.2, 0.35, 0.5];
        Self {
            lambda_m: lambdas.clone(),
            lambda_r: lambdas.clone(),
            lambda_s: lambdas,
            gamma_noise: vec![0.1, 0.01],
            recon_cell: ReconCell::ALL.to_vec(),
        }
    }
}

/// Contents of the `--config` TOML file. Every key is optional; missing keys
/// take the defaults printed by `lamanet config`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    /// Directory with the C-MAPSS text files. `LAMANET_DATA_DIR` and
    /// `--data-dir` take precedence.
    pub data_dir: PathBuf,
    /// Root of all run outputs.
    pub out_dir: PathBuf,
    /// Where `ingest` writes dataset caches and `train` looks for them.
    pub cache_dir: PathBuf,
    pub data_source: DataSource,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
    /// Write `latents_C.csv` / `latents_O.csv` per seed.
    pub latents: bool,
    pub run: RunConfig,
    pub sweep: SweepGrid,
}

impl Default for CliConfig {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from("data/CMAPSS"),
            out_dir: PathBuf::from("runs"),
            cache_dir: PathBuf::from("runs/cache"),
            data_source: DataSource::Cmapss,
            jobs: 0,
            latents: true,
            run: RunConfig::default(),
            sweep: SweepGrid::default(),
        }
    }
}

pub const DATA_DIR_ENV: &str = "LAMANET_DATA_DIR";

impl CliConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes to TOML")
    }

    /// Shrinks the model and data to the smoke-test sizes: 8 compact sensors,
    /// `K = 16`, attention and bottleneck widths of 8.
    pub fn apply_toy(&mut self) {
        let toy = RunConfig::toy();
        self.run.data = toy.data;
        self.run.model = toy.model;
        self.run.batch = toy.batch;
    }

    /// `--data-dir`, then the environment variable, then the file value.
    pub fn resolve_data_dir(&mut self, flag: Option<PathBuf>) {
        if let Some(dir) = flag.or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from)) {
            self.data_dir = dir;
        }
    }
}
