use std::fmt::Write as _;

use lamanet::train::run_experiment;
use lamanet::{MetricsReport, ReconCell, RunArtifacts, RunConfig};

use crate::config::{CliConfig, SweepGrid};
use crate::{data, CliError};

/// One grid point, applied on top of the run config.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub lambda_m: f64,
    pub lambda_r: f64,
    pub lambda_s: f64,
    pub gamma_noise: f64,
    pub cell: ReconCell,
}

impl Point {
    pub fn label(&self) -> String {
        format!(
            "m{}_r{}_s{}_g{}_{}",
            self.lambda_m,
            self.lambda_r,
            self.lambda_s,
            self.gamma_noise,
            self.cell.as_str()
        )
    }

    pub fn apply(&self, run: &mut RunConfig) {
        run.weights.lambda_m = self.lambda_m;
        run.weights.lambda_r = self.lambda_r;
        run.weights.lambda_s = self.lambda_s;
        run.weights.gamma_noise = self.gamma_noise;
        run.model.recon_cell = self.cell;
    }
}

fn parse_list<T>(key: &str, values: &str, f: impl Fn(&str) -> Option<T>) -> Result<Vec<T>, CliError> {
    let out: Option<Vec<T>> = values.split(',').map(|v| f(v.trim())).collect();
    match out {
        Some(v) if !v.is_empty() => Ok(v),
        _ => Err(CliError::Argument(format!("bad values for grid key {key}: {values:?}"))),
    }
}

/// Grid to run. Without overrides this is the configured grid; with any
/// `key=v1,v2` override, dimensions not named collapse to the run config value.
pub fn resolve_grid(cfg: &CliConfig, overrides: &[String]) -> Result<SweepGrid, CliError> {
    if overrides.is_empty() {
        return Ok(cfg.sweep.clone());
    }
    let w = &cfg.run.weights;
    let mut grid = SweepGrid {
        lambda_m: vec![w.lambda_m],
        lambda_r: vec![w.lambda_r],
        lambda_s: vec![w.lambda_s],
        gamma_noise: vec![w.gamma_noise],
        recon_cell: vec![cfg.run.model.recon_cell],
    };
    let num = |v: &str| v.parse::<f64>().ok().filter(|x| x.is_finite() && *x >= 0.0);
    for o in overrides {
        let (key, values) = o
            .split_once('=')
            .ok_or_else(|| CliError::Argument(format!("expected KEY=V1,V2, got {o:?}")))?;
        match key.trim() {
            "lambda_m" => grid.lambda_m = parse_list(key, values, num)?,
            "lambda_r" => grid.lambda_r = parse_list(key, values, num)?,
            "lambda_s" => grid.lambda_s = parse_list(key, values, num)?,
            "gamma_noise" => grid.gamma_noise = parse_list(key, values, num)?,
            "recon_cell" => grid.recon_cell = parse_list(key, values, |v| v.parse().ok())?,
            other => {
                return Err(CliError::Argument(format!(
                    "unknown grid key {other:?}; expected lambda_m, lambda_r, lambda_s, gamma_noise or recon_cell"
                )))
            }
        }
    }
    Ok(grid)
}

pub fn points(grid: &SweepGrid) -> Vec<Point> {
    let mut out = Vec::new();
    for &lambda_m in &grid.lambda_m {
        for &lambda_r in &grid.lambda_r {
            for &lambda_s in &grid.lambda_s {
                for &gamma_noise in &grid.gamma_noise {
                    for &cell in &grid.recon_cell {
                        out.push(Point {
                            lambda_m,
                            lambda_r,
                            lambda_s,
                            gamma_noise,
                            cell,
                        });
                    }
                }
            }
        }
    }
    out
}

/// Sorted by mean source-validation RMSE; target metrics are not consulted.
pub fn rank(results: &[(Point, MetricsReport)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..results.len()).collect();
    let key = |i: usize| {
        let r = &results[i].1;
        if r.seeds.is_empty() {
            f64::INFINITY
        } else {
            r.val_rmse.mean
        }
    };
    order.sort_by(|&a, &b| key(a).total_cmp(&key(b)).then(a.cmp(&b)));
    order
}

pub fn ranking_csv(results: &[(Point, MetricsReport)]) -> String {
    let mut out = String::from(
        "rank,label,lambda_m,lambda_r,lambda_s,gamma_noise,recon_cell,source_val_rmse_mean,source_val_rmse_sd,completed_seeds\n",
    );
    for (rank, i) in rank(results).into_iter().enumerate() {
        let (p, r) = &results[i];
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            rank + 1,
            p.label(),
            p.lambda_m,
            p.lambda_r,
            p.lambda_s,
            p.gamma_noise,
            p.cell.as_str(),
            r.val_rmse.mean,
            r.val_rmse.sd,
            r.seeds.len()
        );
    }
    out
}

pub fn sweep(cfg: &CliConfig, overrides: &[String], confirm: bool) -> Result<(), CliError> {
    let grid = resolve_grid(cfg, overrides)?;
    let pts = points(&grid);
    let seeds = cfg.run.seeds.len();
    println!(
        "grid: {} lambda_m × {} lambda_r × {} lambda_s × {} gamma_noise × {} recon_cell = {} points",
        grid.lambda_m.len(),
        grid.lambda_r.len(),
        grid.lambda_s.len(),
        grid.gamma_noise.len(),
        grid.recon_cell.len(),
        pts.len()
    );
    println!("{} points × {} seeds = {} runs", pts.len(), seeds, pts.len() * seeds);
    if !confirm {
        return Err(CliError::NeedsConfirm);
    }
    if pts.is_empty() {
        return Err(CliError::Argument("empty grid".into()));
    }

    let (source, target) = data::pair(cfg)?;
    let root = cfg.out_dir.join("sweep");
    let mut results = Vec::with_capacity(pts.len());
    for p in pts {
        let mut run = cfg.run.clone();
        p.apply(&mut run);
        let arts = RunArtifacts {
            root: Some(root.join(p.label())),
            latents: false,
        };
        let report = run_experiment(&run, &source, &target, &arts)?;
        println!("{}: source val RMSE {:.4}", p.label(), report.val_rmse.mean);
        results.push((p, report));
    }
    let path = root.join(format!("{}_{}_ranking.csv", cfg.run.pair_label(), cfg.run.variant));
    std::fs::write(&path, ranking_csv(&results)).map_err(|source| CliError::Io {
        path: path.clone(),
        source,
    })?;
    let best = &results[rank(&results)[0]].0;
    println!("best by source validation RMSE: {}", best.label());
    println!("wrote {}", path.display());

    let failed: usize = results.iter().map(|(_, r)| r.failures.len()).sum();
    if failed > 0 {
        return Err(CliError::RunsFailed {
            failed,
            total: results.len() * seeds,
        });
    }
    Ok(())
}
