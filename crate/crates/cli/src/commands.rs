use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use lamanet::eval::aggregate;
use lamanet::train::run_experiment;
use lamanet::{DomainDataset, MetricsReport, RunArtifacts, Variant};

use crate::config::CliConfig;
use crate::{data, CliError};

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn ingest(cfg: &CliConfig, subset: &str) -> Result<(), CliError> {
    let raw = data::raw_subset(cfg, subset)?;
    let ds = DomainDataset::build(&raw, &cfg.run.data)?;
    let path = data::cache_path(cfg, subset);
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    ds.write_cache(&path)?;
    println!("{subset}: {} train trajectories", raw.train.len());
    println!("{subset}: {} test trajectories", raw.test.len());
    println!(
        "windows (K={}): {} train from {} engines, {} validation from {} engines, {} test",
        ds.window,
        ds.train_windows.len(),
        ds.train_units.len(),
        ds.val_windows.len(),
        ds.val_units.len(),
        ds.test_windows.len()
    );
    println!("config hash {}", ds.config_hash);
    println!("wrote {}", path.display());
    Ok(())
}

fn artifacts(cfg: &CliConfig, root: &Path) -> RunArtifacts {
    RunArtifacts {
        root: Some(root.to_path_buf()),
        latents: cfg.latents,
    }
}

fn summarize(reports: &[MetricsReport]) -> Result<(), CliError> {
    let total: usize = reports.iter().map(|r| r.seeds.len() + r.failures.len()).sum();
    let failed: usize = reports.iter().map(|r| r.failures.len()).sum();
    for r in reports {
        for f in &r.failures {
            eprintln!("{} {} seed {} failed: {}", r.pair(), r.variant, f.seed, f.error);
        }
    }
    if failed > 0 {
        Err(CliError::RunsFailed { failed, total })
    } else {
        Ok(())
    }
}

/// Runs each variant over the configured seeds on one dataset pair.
pub fn run_variants(cfg: &CliConfig, variants: &[Variant]) -> Result<Vec<MetricsReport>, CliError> {
    let (source, target) = data::pair(cfg)?;
    let arts = artifacts(cfg, &cfg.out_dir);
    variants
        .iter()
        .map(|&v| {
            let mut run = cfg.run.clone();
            run.variant = v;
            Ok(run_experiment(&run, &source, &target, &arts)?)
        })
        .collect()
}

pub fn train(cfg: &CliConfig, variants: &[Variant]) -> Result<(), CliError> {
    let reports = run_variants(cfg, variants)?;
    let tables = aggregate(&reports);
    println!("{}", tables.rmse.to_text());
    println!("{}", tables.score.to_text());
    for r in &reports {
        let mut run = cfg.run.clone();
        run.variant = r.variant.parse().map_err(CliError::Argument)?;
        if let Some(d) = artifacts(cfg, &cfg.out_dir).variant_dir(&run) {
            println!("{} {}: {}", r.pair(), r.variant, d.display());
        }
    }
    summarize(&reports)
}

/// Long format, one row per seed and variant, for box plots.
pub fn boxplot_csv(reports: &[MetricsReport]) -> String {
    let mut out = String::from("variant,seed,rmse,score,score_log10\n");
    for r in reports {
        for s in &r.seeds {
            let _ = writeln!(out, "{},{},{},{},{}", r.variant, s.seed, s.rmse, s.score, s.score_log10);
        }
    }
    out
}

pub fn ablate(cfg: &CliConfig) -> Result<(), CliError> {
    let reports = run_variants(cfg, &Variant::ABLATION)?;
    let tables = aggregate(&reports);
    let dir = cfg.out_dir.join(cfg.run.pair_label());
    write(&dir.join("ablation_rmse.csv"), &tables.rmse.to_csv())?;
    write(&dir.join("ablation_score.csv"), &tables.score.to_csv())?;
    write(&dir.join("ablation_runs.csv"), &boxplot_csv(&reports))?;
    println!("{}", tables.rmse.to_text());
    println!("{}", tables.score.to_text());
    println!("wrote {}", dir.join("ablation_runs.csv").display());
    summarize(&reports)
}
