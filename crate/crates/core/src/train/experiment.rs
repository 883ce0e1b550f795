use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::step::{Trainer, LOG_HEADER};
use super::{RunConfig, TrainError};
use crate::data::DomainDataset;
use crate::eval::{evaluate_target, export_latents, labeled_rmse, LatentLayer, MetricsReport, SeedFailure, SeedMetrics};

/// Where and what a run writes. With `root = None` nothing touches disk.
#[derive(Debug, Clone, Default)]
pub struct RunArtifacts {
    pub root: Option<PathBuf>,
    /// Write `latents_C.csv` / `latents_O.csv` over all training windows.
    pub latents: bool,
}

impl RunArtifacts {
    pub fn in_dir(root: impl Into<PathBuf>) -> Self {
        Self {
            root: Some(root.into()),
            latents: true,
        }
    }

    /// `<root>/<source>_to_<target>/<variant>`.
    pub fn variant_dir(&self, cfg: &RunConfig) -> Option<PathBuf> {
        self.root
            .as_ref()
            .map(|r| r.join(cfg.pair_label()).join(cfg.variant.as_str()))
    }

    pub fn seed_dir(&self, cfg: &RunConfig, seed: u64) -> Option<PathBuf> {
        self.variant_dir(cfg).map(|d| d.join(seed.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SeedOutcome {
    Completed(SeedMetrics),
    Failed(SeedFailure),
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> TrainError + '_ {
    move |source| TrainError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<(), TrainError> {
    fs::write(path, contents).map_err(io_err(path))
}

fn report_for(cfg: &RunConfig, target: &DomainDataset, outcomes: Vec<SeedOutcome>) -> MetricsReport {
    let mut seeds = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            SeedOutcome::Completed(m) => seeds.push(m),
            SeedOutcome::Failed(f) => failures.push(f),
        }
    }
    MetricsReport::new(
        &cfg.source,
        &cfg.target,
        cfg.variant.as_str(),
        target.test_windows.len(),
        seeds,
        failures,
        serde_json::to_value(cfg).expect("config serializes"),
    )
}

fn write_report(dir: &Path, report: &MetricsReport) -> Result<(), TrainError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let json = serde_json::to_string_pretty(report).expect("report serializes");
    write_file(&dir.join("report.json"), &json)?;
    write_file(&dir.join("metrics.csv"), &report.to_csv())
}

/// Trains one seed to the end of its budget and evaluates it on the target
/// test engines.
pub fn run_seed(
    cfg: &RunConfig,
    seed: u64,
    source: &DomainDataset,
    target: &DomainDataset,
    artifacts: &RunArtifacts,
) -> Result<SeedMetrics, TrainError> {
    let mut trainer = Trainer::new(cfg, seed, source, target)?;
    let dir = artifacts.seed_dir(cfg, seed);
    let mut log = match &dir {
        Some(d) => {
            fs::create_dir_all(d).map_err(io_err(d))?;
            let path = d.join("train_log.csv");
            let mut w = BufWriter::new(File::create(&path).map_err(io_err(&path))?);
            writeln!(w, "{LOG_HEADER}").map_err(io_err(&path))?;
            Some((path, w))
        }
        None => None,
    };
    trainer.run(|rec| {
        if let Some((path, w)) = log.as_mut() {
            writeln!(w, "{}", rec.csv_row()).map_err(io_err(path))?;
        }
        Ok(())
    })?;
    if let Some((path, mut w)) = log {
        w.flush().map_err(io_err(&path))?;
    }

    let net = &trainer.net;
    let ev = evaluate_target(net, target, cfg.score)?;
    let val_rmse = if source.val_windows.is_empty() {
        f64::NAN
    } else {
        labeled_rmse(net, &source.val_windows, source.rc)?
    };
    let metrics = SeedMetrics {
        seed,
        rmse: ev.rmse,
        score: ev.score.value,
        score_log10: ev.score.log10,
        score_overflow: ev.score.overflow,
        val_rmse,
        iterations: trainer.iteration(),
    };

    if let Some(d) = &dir {
        trainer.save_checkpoint(&d.join("checkpoint.bin"))?;
        let single = report_for(cfg, target, vec![SeedOutcome::Completed(metrics.clone())]);
        write_report(d, &single)?;
        if artifacts.latents {
            let windows: Vec<_> = source
                .train_windows
                .iter()
                .chain(&target.train_windows)
                .cloned()
                .collect();
            for layer in [LatentLayer::C, LatentLayer::O] {
                let path = d.join(format!("latents_{}.csv", layer.as_str()));
                export_latents(net, &windows, layer)?.write(&path)?;
            }
        }
    }
    Ok(metrics)
}

/// Runs every seed of `cfg` (in parallel on the current rayon pool) and
/// returns the combined report. Seeds that fail are recorded, not fatal.
pub fn run_experiment(
    cfg: &RunConfig,
    source: &DomainDataset,
    target: &DomainDataset,
    artifacts: &RunArtifacts,
) -> Result<MetricsReport, TrainError> {
    cfg.validate()?;
    if cfg.seeds.is_empty() {
        return Err(TrainError::Argument("no seeds requested".into()));
    }
    if source.subset != cfg.source || target.subset != cfg.target {
        return Err(TrainError::Argument(format!(
            "config pairs {}→{} but datasets are {}→{}",
            cfg.source, cfg.target, source.subset, target.subset
        )));
    }
    let outcomes: Vec<SeedOutcome> = cfg
        .seeds
        .par_iter()
        .map(|&seed| match run_seed(cfg, seed, source, target, artifacts) {
            Ok(m) => SeedOutcome::Completed(m),
            Err(e) => SeedOutcome::Failed(SeedFailure {
                seed,
                error: e.to_string(),
            }),
        })
        .collect();
    let report = report_for(cfg, target, outcomes);
    if let Some(d) = artifacts.variant_dir(cfg) {
        write_report(&d, &report)?;
    }
    Ok(report)
}
