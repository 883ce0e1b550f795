//! Target-domain metrics, seed aggregation, result tables and latent export.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DomainDataset, WindowSample};
use crate::model::{LamaNet, ModelError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{0}")]
    Argument(String),
    #[error("integrity: {0}")]
    Integrity(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{}: {source}", path.display())]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

type Result<T> = std::result::Result<T, EvalError>;

fn check_lengths(pred: &[f64], truth: &[f64]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(EvalError::Argument(format!(
            "{} predictions for {} truths",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(EvalError::Argument("no predictions".into()));
    }
    Ok(())
}

/// Root mean squared error, in the units of the inputs.
pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_lengths(pred, truth)?;
    let sse: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((sse / pred.len() as f64).sqrt())
}

/// Which exponent divisor applies to which error sign.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreConvention {
    /// `e^{−E/10} − 1` for `E < 0`, `e^{E/13} − 1` for `E ≥ 0`.
    #[default]
    Printed,
    /// Divisors swapped: late predictions (`E > 0`) are penalized harder.
    Phm08,
}

impl ScoreConvention {
    fn divisors(self) -> (f64, f64) {
        match self {
            ScoreConvention::Printed => (10.0, 13.0),
            ScoreConvention::Phm08 => (13.0, 10.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    /// The sum itself; `+∞` when it exceeds the `f64` range.
    pub value: f64,
    /// `log10` of the sum, finite even when `value` overflows (`−∞` for 0).
    pub log10: f64,
    pub overflow: bool,
}

/// Asymmetric exponential score with `E_i = pred_i − truth_i`.
///
/// Terms are accumulated in log space so the magnitude is known even when the
/// sum overflows.
pub fn score(pred: &[f64], truth: &[f64], convention: ScoreConvention) -> Result<Score> {
    check_lengths(pred, truth)?;
    let (early, late) = convention.divisors();
    let mut direct = 0.0;
    // ln(e^a − 1) = a + ln(1 − e^{−a})
    let mut logs = Vec::with_capacity(pred.len());
    for (p, t) in pred.iter().zip(truth) {
        let e = p - t;
        if !e.is_finite() {
            return Err(EvalError::Argument(format!("non-finite error {e}")));
        }
        let a = if e < 0.0 { -e / early } else { e / late };
        direct += a.exp_m1();
        if a > 0.0 {
            logs.push(a + (-(-a).exp()).ln_1p());
        }
    }
    let log10 = if logs.is_empty() {
        f64::NEG_INFINITY
    } else {
        let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let rest: f64 = logs.iter().map(|l| (l - top).exp()).sum();
        (top + rest.ln()) / std::f64::consts::LN_10
    };
    Ok(Score {
        value: direct,
        log10,
        overflow: !direct.is_finite(),
    })
}

/// Predictions and truths on a target test set, in cycles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetEval {
    pub rmse: f64,
    pub score: Score,
    pub predictions: Vec<f64>,
    pub truth: Vec<f64>,
}

/// One prediction per test engine (its last window), scaled back by `rc`
/// and compared with `min(truth, rc)`.
pub fn evaluate_target(net: &LamaNet, target: &DomainDataset, convention: ScoreConvention) -> Result<TargetEval> {
    if target.test_rul_truth.len() != target.test_windows.len() {
        return Err(EvalError::Integrity(format!(
            "{}: {} test windows but {} truth values",
            target.subset,
            target.test_windows.len(),
            target.test_rul_truth.len()
        )));
    }
    let inf = net.infer_windows(&target.test_windows, 256)?;
    let predictions: Vec<f64> = inf.y_hat.data().iter().map(|y| y * target.rc).collect();
    let truth = target.capped_truth();
    Ok(TargetEval {
        rmse: rmse(&predictions, &truth)?,
        score: score(&predictions, &truth, convention)?,
        predictions,
        truth,
    })
}

/// RMSE in cycles over labeled windows (e.g. a validation split).
pub fn labeled_rmse(net: &LamaNet, windows: &[WindowSample], rc: f64) -> Result<f64> {
    let truth: Option<Vec<f64>> = windows.iter().map(|w| w.rul_scaled.map(|y| y * rc)).collect();
    let truth = truth.ok_or_else(|| EvalError::Argument("unlabeled window".into()))?;
    let inf = net.infer_windows(windows, 256)?;
    let pred: Vec<f64> = inf.y_hat.data().iter().map(|y| y * rc).collect();
    rmse(&pred, &truth)
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1) as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedMetrics {
    pub seed: u64,
    pub rmse: f64,
    pub score: f64,
    pub score_log10: f64,
    pub score_overflow: bool,
    /// Source validation RMSE in cycles, used for model selection.
    pub val_rmse: f64,
    pub iterations: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedFailure {
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    pub sd: f64,
}

impl Aggregate {
    fn of(values: &[f64]) -> Self {
        let (mean, sd) = mean_sd(values);
        Self { mean, sd }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub source: String,
    pub target: String,
    pub variant: String,
    pub n_test_engines: usize,
    pub seeds: Vec<SeedMetrics>,
    pub failures: Vec<SeedFailure>,
    pub rmse: Aggregate,
    pub score: Aggregate,
    pub val_rmse: Aggregate,
    pub config_hash: String,
    pub config: serde_json::Value,
}

impl MetricsReport {
    pub fn new(
        source: &str,
        target: &str,
        variant: &str,
        n_test_engines: usize,
        seeds: Vec<SeedMetrics>,
        failures: Vec<SeedFailure>,
        config: serde_json::Value,
    ) -> Self {
        let pick = |f: fn(&SeedMetrics) -> f64| seeds.iter().map(f).collect::<Vec<_>>();
        Self {
            source: source.to_string(),
            target: target.to_string(),
            variant: variant.to_string(),
            n_test_engines,
            rmse: Aggregate::of(&pick(|s| s.rmse)),
            score: Aggregate::of(&pick(|s| s.score)),
            val_rmse: Aggregate::of(&pick(|s| s.val_rmse)),
            config_hash: crate::config_hash(&config),
            config,
            seeds,
            failures,
        }
    }

    pub fn pair(&self) -> String {
        format!("{}→{}", self.source, self.target)
    }

    pub fn is_complete(&self) -> bool {
        self.failures.is_empty()
    }

    /// Per-seed rows followed by mean and sd rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("seed,rmse,score,score_log10,score_overflow,val_rmse,iterations\n");
        for s in &self.seeds {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                s.seed, s.rmse, s.score, s.score_log10, s.score_overflow, s.val_rmse, s.iterations
            );
        }
        for f in &self.failures {
            let _ = writeln!(out, "{},failed,,,,,", f.seed);
        }
        let _ = writeln!(out, "mean,{},{},,,{},", self.rmse.mean, self.score.mean, self.val_rmse.mean);
        let _ = writeln!(out, "sd,{},{},,,{},", self.rmse.sd, self.score.sd, self.val_rmse.sd);
        out
    }
}

/// Pair × variant grid of one statistic.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub title: String,
    pub rows: Vec<String>,
    pub columns: Vec<String>,
    /// `cells[r][c]`, `None` where no report exists.
    pub cells: Vec<Vec<Option<String>>>,
}

impl Table {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("pair");
        for c in &self.columns {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for (r, row) in self.rows.iter().enumerate() {
            out.push_str(row);
            for cell in &self.cells[r] {
                out.push(',');
                out.push_str(cell.as_deref().unwrap_or(""));
            }
            out.push('\n');
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut widths: Vec<usize> = std::iter::once(
            self.rows.iter().map(|r| r.chars().count()).max().unwrap_or(0).max(4),
        )
        .chain(self.columns.iter().enumerate().map(|(c, name)| {
            self.cells
                .iter()
                .map(|row| row[c].as_deref().unwrap_or("-").chars().count())
                .max()
                .unwrap_or(0)
                .max(name.chars().count())
        }))
        .collect();
        widths[0] = widths[0].max("pair".len());
        let pad = |s: &str, w: usize| format!("{s}{}", " ".repeat(w.saturating_sub(s.chars().count())));
        let mut out = format!("{}\n", self.title);
        let mut line = pad("pair", widths[0]);
        for (c, name) in self.columns.iter().enumerate() {
            line.push_str(" | ");
            line.push_str(&pad(name, widths[c + 1]));
        }
        out.push_str(line.trim_end());
        out.push('\n');
        out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 3 * self.columns.len()));
        out.push('\n');
        for (r, row) in self.rows.iter().enumerate() {
            let mut line = pad(row, widths[0]);
            for (c, cell) in self.cells[r].iter().enumerate() {
                line.push_str(" | ");
                line.push_str(&pad(cell.as_deref().unwrap_or("-"), widths[c + 1]));
            }
            out.push_str(line.trim_end());
            out.push('\n');
        }
        out
    }
}

/// RMSE (mean ± sd), score (mean ± sd) and score standard-deviation tables.
#[derive(Debug, Clone, PartialEq)]
pub struct Tables {
    pub rmse: Table,
    pub score: Table,
    pub score_sd: Table,
}

fn fmt_num(v: f64) -> String {
    if !v.is_finite() {
        return format!("{v}");
    }
    if v != 0.0 && (v.abs() >= 1e6 || v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{v:.2}")
    }
}

/// Lays reports out with one row per source→target pair and one column per
/// variant, both in first-seen order.
pub fn aggregate(reports: &[MetricsReport]) -> Tables {
    let mut rows: Vec<String> = Vec::new();
    let mut columns: Vec<String> = Vec::new();
    for r in reports {
        if !rows.contains(&r.pair()) {
            rows.push(r.pair());
        }
        if !columns.contains(&r.variant) {
            columns.push(r.variant.clone());
        }
    }
    let build = |title: &str, cell: &dyn Fn(&MetricsReport) -> String| {
        let mut cells = vec![vec![None; columns.len()]; rows.len()];
        for rep in reports {
            let r = rows.iter().position(|p| *p == rep.pair()).expect("row");
            let c = columns.iter().position(|v| *v == rep.variant).expect("column");
            cells[r][c] = Some(cell(rep));
        }
        Table {
            title: title.to_string(),
            rows: rows.clone(),
            columns: columns.clone(),
            cells,
        }
    };
    Tables {
        rmse: build("RMSE (mean ± sd)", &|r| format!("{} ± {}", fmt_num(r.rmse.mean), fmt_num(r.rmse.sd))),
        score: build("Score (mean ± sd)", &|r| format!("{} ± {}", fmt_num(r.score.mean), fmt_num(r.score.sd))),
        score_sd: build("Score standard deviation", &|r| fmt_num(r.score.sd)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LatentLayer {
    C,
    O,
}

impl LatentLayer {
    pub fn as_str(self) -> &'static str {
        match self {
            LatentLayer::C => "C",
            LatentLayer::O => "O",
        }
    }
}

/// Per-window latent rows with their labels and domain tags.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentExport {
    pub layer: LatentLayer,
    pub width: usize,
    pub rows: Vec<Vec<f64>>,
    pub rul_scaled: Vec<Option<f64>>,
    pub domain: Vec<String>,
    pub unit_id: Vec<u32>,
    pub end_cycle: Vec<u32>,
}

impl LatentExport {
    /// Columns: `domain,unit_id,end_cycle,rul_scaled,z0,…,z{width−1}`;
    /// `rul_scaled` is empty for unlabeled windows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("domain,unit_id,end_cycle,rul_scaled");
        for i in 0..self.width {
            let _ = write!(out, ",z{i}");
        }
        out.push('\n');
        for (i, row) in self.rows.iter().enumerate() {
            let label = self.rul_scaled[i].map(|v| v.to_string()).unwrap_or_default();
            let _ = write!(out, "{},{},{},{}", self.domain[i], self.unit_id[i], self.end_cycle[i], label);
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let io = |source| EvalError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut f = std::fs::File::create(path).map_err(io)?;
        f.write_all(self.to_csv().as_bytes()).map_err(io)
    }
}

/// Runs the prediction path over `windows` and keeps the requested layer.
pub fn export_latents(net: &LamaNet, windows: &[WindowSample], layer: LatentLayer) -> Result<LatentExport> {
    let inf = net.infer_windows(windows, 256)?;
    let t = match layer {
        LatentLayer::C => inf.c,
        LatentLayer::O => inf.o,
    };
    let width = t.shape().get(1).copied().unwrap_or(0);
    Ok(LatentExport {
        layer,
        width,
        rows: (0..windows.len()).map(|i| t.row(i).to_vec()).collect(),
        rul_scaled: windows.iter().map(|w| w.rul_scaled).collect(),
        domain: windows.iter().map(|w| w.domain.as_str().to_string()).collect(),
        unit_id: windows.iter().map(|w| w.unit_id).collect(),
        end_cycle: windows.iter().map(|w| w.end_cycle).collect(),
    })
}
