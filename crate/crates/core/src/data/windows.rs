use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::cmapss::Trajectory;
use super::normalize::NormalizationStats;
use super::DataError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainTag {
    Source,
    Target,
}

impl DomainTag {
    pub fn as_str(self) -> &'static str {
        match self {
            DomainTag::Source => "source",
            DomainTag::Target => "target",
        }
    }
}

/// One `f × K` window, stored feature-major (`features[j * K + k]`).
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample {
    pub features: Vec<f64>,
    pub n_features: usize,
    pub window: usize,
    pub rul_scaled: Option<f64>,
    pub domain: DomainTag,
    pub unit_id: u32,
    pub end_cycle: u32,
}

impl WindowSample {
    pub fn feature(&self, j: usize, k: usize) -> f64 {
        self.features[j * self.window + k]
    }

    /// Features at time step `k`.
    pub fn step(&self, k: usize) -> Vec<f64> {
        (0..self.n_features).map(|j| self.feature(j, k)).collect()
    }
}

/// Piecewise-linear label `min(T − t, rc) / rc` for the window ending at cycle `t`.
pub fn rul_label(total: usize, t: usize, rc: f64) -> Result<f64, DataError> {
    if t == 0 || t > total {
        return Err(DataError::Argument(format!(
            "cycle {t} outside trajectory of length {total}"
        )));
    }
    if rc <= 0.0 {
        return Err(DataError::Argument(format!("rc must be positive, got {rc}")));
    }
    Ok(((total - t) as f64).min(rc) / rc)
}

/// Window whose last row is cycle `end` (1-based). Rows before cycle 1 repeat cycle 1.
fn window_ending_at(traj: &Trajectory, end: usize, k: usize, stats: &NormalizationStats) -> Vec<f64> {
    let f = stats.n_features();
    let rows: Vec<Vec<f64>> = (0..k)
        .map(|step| {
            let cycle = (end + step + 1).saturating_sub(k).max(1);
            stats.normalize_record(&traj.cycles()[cycle - 1])
        })
        .collect();
    let mut out = vec![0.0; f * k];
    for (step, row) in rows.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            out[j * k + step] = *v;
        }
    }
    out
}

/// Stride-one windows over a run-to-failure trajectory, labeled by [`rul_label`].
///
/// Trajectories shorter than `k` produce a single left-padded window.
pub fn make_windows(
    traj: &Trajectory,
    k: usize,
    stats: &NormalizationStats,
    rc: f64,
) -> Result<Vec<WindowSample>, DataError> {
    if k == 0 {
        return Err(DataError::Argument("window length must be ≥ 1".into()));
    }
    let total = traj.len();
    let first_end = k.min(total);
    (first_end..=total)
        .map(|end| {
            Ok(WindowSample {
                features: window_ending_at(traj, end, k, stats),
                n_features: stats.n_features(),
                window: k,
                rul_scaled: Some(rul_label(total, end, rc)?),
                domain: DomainTag::Source,
                unit_id: traj.unit_id(),
                end_cycle: end as u32,
            })
        })
        .collect()
}

/// Window ending at the final recorded cycle, for test engines cut before failure.
pub fn last_window(traj: &Trajectory, k: usize, stats: &NormalizationStats) -> WindowSample {
    let end = traj.len();
    WindowSample {
        features: window_ending_at(traj, end, k, stats),
        n_features: stats.n_features(),
        window: k,
        rul_scaled: None,
        domain: DomainTag::Source,
        unit_id: traj.unit_id(),
        end_cycle: end as u32,
    }
}

/// Engine-level random split; returns `(train, validation)`, each in input order.
pub fn split_train_val(
    trajectories: &[Trajectory],
    seed: u64,
    fraction: f64,
) -> Result<(Vec<Trajectory>, Vec<Trajectory>), DataError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(DataError::Argument(format!(
            "validation fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let n = trajectories.len();
    if n < 2 {
        return Err(DataError::Split(n));
    }
    let n_val = ((n as f64 * fraction).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut is_val = vec![false; n];
    for &i in &order[..n_val] {
        is_val[i] = true;
    }
    let (val, train): (Vec<_>, Vec<_>) = trajectories
        .iter()
        .cloned()
        .zip(is_val)
        .partition(|(_, v)| *v);
    Ok((
        train.into_iter().map(|(t, _)| t).collect(),
        val.into_iter().map(|(t, _)| t).collect(),
    ))
}
