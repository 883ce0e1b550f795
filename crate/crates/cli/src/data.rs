use std::path::PathBuf;

use lamanet::data::{load_subset, RawSubset};
use lamanet::{DomainDataset, SyntheticDomain};

use crate::config::{CliConfig, DataSource};
use crate::CliError;

pub const SYN_SOURCE: &str = "SYN_S";
pub const SYN_TARGET: &str = "SYN_T";

pub fn raw_subset(cfg: &CliConfig, subset: &str) -> Result<RawSubset, CliError> {
    match cfg.data_source {
        DataSource::Cmapss => Ok(load_subset(&cfg.data_dir, subset)?),
        DataSource::Synthetic => match subset {
            SYN_SOURCE => Ok(SyntheticDomain::source().generate(subset)),
            SYN_TARGET => Ok(SyntheticDomain::target().generate(subset)),
            other => Err(CliError::Argument(format!(
                "synthetic data has subsets {SYN_SOURCE} and {SYN_TARGET}, not {other:?}"
            ))),
        },
    }
}

/// `<cache_dir>/<subset>-<first 16 hex digits of the data-config hash>.bin`.
pub fn cache_path(cfg: &CliConfig, subset: &str) -> PathBuf {
    let hash = cfg.run.data.hash(subset);
    cfg.cache_dir.join(format!("{subset}-{}.bin", &hash[..16]))
}

/// Reads the cache written by `ingest` when one matches the current data
/// config, otherwise builds from raw files.
pub fn dataset(cfg: &CliConfig, subset: &str) -> Result<DomainDataset, CliError> {
    let path = cache_path(cfg, subset);
    if path.is_file() {
        if let Ok(ds) = DomainDataset::read_cache(&path) {
            if ds.config_hash == cfg.run.data.hash(subset) {
                return Ok(ds);
            }
        }
    }
    Ok(DomainDataset::build(&raw_subset(cfg, subset)?, &cfg.run.data)?)
}

pub fn pair(cfg: &CliConfig) -> Result<(DomainDataset, DomainDataset), CliError> {
    let source = dataset(cfg, &cfg.run.source)?;
    let target = dataset(cfg, &cfg.run.target)?.into_target();
    Ok((source, target))
}
