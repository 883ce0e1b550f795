use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cmapss::{RawSubset, Trajectory};
use super::normalize::{fit_normalization, FeatureSelection, NormalizationStats};
use super::windows::{last_window, make_windows, split_train_val, DomainTag, WindowSample};
use super::DataError;
use crate::binio::*;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub window: usize,
    pub rc: f64,
    pub val_fraction: f64,
    pub val_seed: u64,
    pub features: FeatureSelection,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            window: 40,
            rc: 125.0,
            val_fraction: 0.1,
            val_seed: 42,
            features: FeatureSelection::default(),
        }
    }
}

impl DataConfig {
    pub fn hash(&self, subset: &str) -> String {
        crate::config_hash(&(subset, self))
    }
}

/// A domain's windows: stride-one training windows, validation windows from
/// held-out engines, and one evaluation window per test engine.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainDataset {
    pub subset: String,
    pub role: DomainTag,
    pub window: usize,
    pub rc: f64,
    pub stats: NormalizationStats,
    pub train_units: Vec<u32>,
    pub val_units: Vec<u32>,
    pub train_windows: Vec<WindowSample>,
    pub val_windows: Vec<WindowSample>,
    pub test_windows: Vec<WindowSample>,
    /// Ground-truth RUL of each test engine in cycles, as published (uncapped).
    pub test_rul_truth: Vec<f64>,
    pub config_hash: String,
}

fn windows_of(
    trajs: &[Trajectory],
    k: usize,
    stats: &NormalizationStats,
    rc: f64,
) -> Result<Vec<WindowSample>, DataError> {
    let per: Vec<Vec<WindowSample>> = trajs
        .par_iter()
        .map(|t| make_windows(t, k, stats, rc))
        .collect::<Result<_, _>>()?;
    Ok(per.into_iter().flatten().collect())
}

impl DomainDataset {
    /// Builds a labeled (source-role) dataset. Statistics are fitted on all of
    /// the subset's training engines and reused for validation and test.
    pub fn build(raw: &RawSubset, cfg: &DataConfig) -> Result<Self, DataError> {
        if raw.test_rul.len() != raw.test.len() {
            return Err(DataError::Integrity(format!(
                "{}: {} RUL values for {} test engines",
                raw.name,
                raw.test_rul.len(),
                raw.test.len()
            )));
        }
        let stats = fit_normalization(&raw.train, &cfg.features, &raw.name)?;
        let (train, val) = split_train_val(&raw.train, cfg.val_seed, cfg.val_fraction)?;
        let train_windows = windows_of(&train, cfg.window, &stats, cfg.rc)?;
        let val_windows = windows_of(&val, cfg.window, &stats, cfg.rc)?;
        let test_windows = raw
            .test
            .iter()
            .zip(&raw.test_rul)
            .map(|(t, &truth)| {
                let mut w = last_window(t, cfg.window, &stats);
                w.rul_scaled = Some(truth.min(cfg.rc) / cfg.rc);
                w
            })
            .collect();
        Ok(Self {
            subset: raw.name.clone(),
            role: DomainTag::Source,
            window: cfg.window,
            rc: cfg.rc,
            stats,
            train_units: train.iter().map(Trajectory::unit_id).collect(),
            val_units: val.iter().map(Trajectory::unit_id).collect(),
            train_windows,
            val_windows,
            test_windows,
            test_rul_truth: raw.test_rul.clone(),
            config_hash: cfg.hash(&raw.name),
        })
    }

    /// Re-tags the dataset as an unlabeled target domain. Test windows keep
    /// their labels for evaluation only.
    pub fn into_target(mut self) -> Self {
        self.role = DomainTag::Target;
        for w in self.train_windows.iter_mut().chain(self.val_windows.iter_mut()) {
            w.rul_scaled = None;
            w.domain = DomainTag::Target;
        }
        for w in &mut self.test_windows {
            w.domain = DomainTag::Target;
        }
        self
    }

    pub fn n_features(&self) -> usize {
        self.stats.n_features()
    }

    /// Test truth capped at `rc`, in cycles.
    pub fn capped_truth(&self) -> Vec<f64> {
        self.test_rul_truth.iter().map(|t| t.min(self.rc)).collect()
    }

    /// Binary cache layout (all integers and floats little-endian):
    ///
    /// ```text
    /// magic "LAMADS01" | str config_hash | str subset | u8 role | u32 window | f64 rc
    /// stats: u32 f | u32 column × f | f64s min | f64s max | u8 constant × f | str fitted_on
    /// u32 n + u32 × n train units | u32 n + u32 × n val units
    /// 3 × (u64 count | count × window) for train, val, test
    ///   window: u32 unit | u32 end_cycle | u8 domain | u8 has_label | f64 label | f64 × f·K
    /// f64s test_rul_truth
    /// ```
    ///
    /// `str` is a u32 byte length followed by UTF-8; `f64s` is a u64 count followed by values.
    pub fn write_cache(&self, path: &Path) -> Result<(), DataError> {
        let io = |source| DataError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut w = BufWriter::new(File::create(path).map_err(io)?);
        self.encode(&mut w).map_err(io)?;
        w.flush().map_err(io)
    }

    fn encode(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(CACHE_MAGIC)?;
        put_str(w, &self.config_hash)?;
        put_str(w, &self.subset)?;
        put_u8(w, tag_code(self.role))?;
        put_u32(w, self.window as u32)?;
        put_f64(w, self.rc)?;
        let s = &self.stats;
        put_u32(w, s.n_features() as u32)?;
        for &c in s.selection.columns() {
            put_u32(w, c as u32)?;
        }
        put_f64s(w, &s.min)?;
        put_f64s(w, &s.max)?;
        for &c in &s.constant {
            put_u8(w, c as u8)?;
        }
        put_str(w, &s.fitted_on)?;
        for units in [&self.train_units, &self.val_units] {
            put_u32(w, units.len() as u32)?;
            for &u in units {
                put_u32(w, u)?;
            }
        }
        for section in [&self.train_windows, &self.val_windows, &self.test_windows] {
            put_u64(w, section.len() as u64)?;
            for win in section {
                put_u32(w, win.unit_id)?;
                put_u32(w, win.end_cycle)?;
                put_u8(w, tag_code(win.domain))?;
                put_u8(w, win.rul_scaled.is_some() as u8)?;
                put_f64(w, win.rul_scaled.unwrap_or(0.0))?;
                for &v in &win.features {
                    put_f64(w, v)?;
                }
            }
        }
        put_f64s(w, &self.test_rul_truth)
    }

    pub fn read_cache(path: &Path) -> Result<Self, DataError> {
        let io = |source| DataError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut r = BufReader::new(File::open(path).map_err(io)?);
        Self::decode(&mut r).map_err(io)
    }

    fn decode(r: &mut impl Read) -> std::io::Result<Self> {
        expect_magic(r, CACHE_MAGIC)?;
        let config_hash = get_str(r)?;
        let subset = get_str(r)?;
        let role = tag_from(get_u8(r)?)?;
        let window = get_u32(r)? as usize;
        let rc = get_f64(r)?;
        let f = get_u32(r)? as usize;
        let columns = (0..f)
            .map(|_| get_u32(r).map(|c| c as usize))
            .collect::<std::io::Result<Vec<_>>>()?;
        let selection = FeatureSelection::new(columns)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string()))?;
        let min = get_f64s(r)?;
        let max = get_f64s(r)?;
        let constant = (0..f)
            .map(|_| get_u8(r).map(|b| b != 0))
            .collect::<std::io::Result<Vec<_>>>()?;
        let fitted_on = get_str(r)?;
        let mut units = Vec::new();
        for _ in 0..2 {
            let n = get_u32(r)? as usize;
            units.push((0..n).map(|_| get_u32(r)).collect::<std::io::Result<Vec<_>>>()?);
        }
        let mut sections = Vec::new();
        for _ in 0..3 {
            let n = get_u64(r)? as usize;
            let mut section = Vec::with_capacity(n);
            for _ in 0..n {
                let unit_id = get_u32(r)?;
                let end_cycle = get_u32(r)?;
                let domain = tag_from(get_u8(r)?)?;
                let has_label = get_u8(r)? != 0;
                let label = get_f64(r)?;
                let features = (0..f * window)
                    .map(|_| get_f64(r))
                    .collect::<std::io::Result<Vec<_>>>()?;
                section.push(WindowSample {
                    features,
                    n_features: f,
                    window,
                    rul_scaled: has_label.then_some(label),
                    domain,
                    unit_id,
                    end_cycle,
                });
            }
            sections.push(section);
        }
        let test_rul_truth = get_f64s(r)?;
        let test_windows = sections.pop().unwrap_or_default();
        let val_windows = sections.pop().unwrap_or_default();
        let train_windows = sections.pop().unwrap_or_default();
        let val_units = units.pop().unwrap_or_default();
        let train_units = units.pop().unwrap_or_default();
        Ok(Self {
            subset,
            role,
            window,
            rc,
            stats: NormalizationStats {
                min,
                max,
                constant,
                fitted_on,
                selection,
            },
            train_units,
            val_units,
            train_windows,
            val_windows,
            test_windows,
            test_rul_truth,
            config_hash,
        })
    }
}

const CACHE_MAGIC: &[u8; 8] = b"LAMADS01";

fn tag_code(t: DomainTag) -> u8 {
    match t {
        DomainTag::Source => 0,
        DomainTag::Target => 1,
    }
}

fn tag_from(b: u8) -> std::io::Result<DomainTag> {
    match b {
        0 => Ok(DomainTag::Source),
        1 => Ok(DomainTag::Target),
        _ => Err(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            format!("bad domain tag {b}"),
        )),
    }
}
