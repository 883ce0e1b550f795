use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::DataError;

pub const N_SETTINGS: usize = 3;
pub const N_SENSORS: usize = 21;
/// Feature columns per cycle: operating settings followed by sensors.
pub const N_COLUMNS: usize = N_SETTINGS + N_SENSORS;
/// Columns per row in the flat files: unit, cycle, then the features.
const ROW_ARITY: usize = 2 + N_COLUMNS;

#[derive(Debug, Clone, PartialEq)]
pub struct CycleRecord {
    pub cycle: u32,
    pub op_settings: [f64; N_SETTINGS],
    pub sensors: [f64; N_SENSORS],
}

impl CycleRecord {
    /// Value of feature column `j` (settings first, then sensors).
    pub fn column(&self, j: usize) -> f64 {
        if j < N_SETTINGS {
            self.op_settings[j]
        } else {
            self.sensors[j - N_SETTINGS]
        }
    }

    pub fn from_columns(cycle: u32, values: &[f64; N_COLUMNS]) -> Self {
        let mut op_settings = [0.0; N_SETTINGS];
        let mut sensors = [0.0; N_SENSORS];
        op_settings.copy_from_slice(&values[..N_SETTINGS]);
        sensors.copy_from_slice(&values[N_SETTINGS..]);
        Self {
            cycle,
            op_settings,
            sensors,
        }
    }
}

/// One engine's run, cycles numbered 1, 2, … without gaps.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    unit_id: u32,
    cycles: Vec<CycleRecord>,
}

impl Trajectory {
    pub fn new(unit_id: u32, cycles: Vec<CycleRecord>) -> Result<Self, DataError> {
        if cycles.is_empty() {
            return Err(DataError::Integrity(format!("unit {unit_id} has no cycles")));
        }
        for (i, rec) in cycles.iter().enumerate() {
            if rec.cycle as usize != i + 1 {
                return Err(DataError::Integrity(format!(
                    "unit {unit_id}: expected cycle {} but found {}",
                    i + 1,
                    rec.cycle
                )));
            }
        }
        Ok(Self { unit_id, cycles })
    }

    pub fn unit_id(&self) -> u32 {
        self.unit_id
    }

    pub fn cycles(&self) -> &[CycleRecord] {
        &self.cycles
    }

    /// Number of recorded cycles `T`.
    pub fn len(&self) -> usize {
        self.cycles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cycles.is_empty()
    }

    /// First `n` cycles as a new trajectory.
    pub fn truncated(&self, n: usize) -> Self {
        Self {
            unit_id: self.unit_id,
            cycles: self.cycles[..n.clamp(1, self.cycles.len())].to_vec(),
        }
    }
}

/// Raw contents of one C-MAPSS subset.
#[derive(Debug, Clone)]
pub struct RawSubset {
    pub name: String,
    pub train: Vec<Trajectory>,
    pub test: Vec<Trajectory>,
    pub test_rul: Vec<f64>,
}

fn read(path: &Path) -> Result<String, DataError> {
    fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Parses the three flat files of a subset.
pub fn parse_cmapss(
    train_path: &Path,
    test_path: &Path,
    rul_path: &Path,
) -> Result<(Vec<Trajectory>, Vec<Trajectory>, Vec<f64>), DataError> {
    let train = parse_trajectories(&read(train_path)?, train_path)?;
    let test = parse_trajectories(&read(test_path)?, test_path)?;
    let rul = parse_rul_vector(&read(rul_path)?, rul_path)?;
    if rul.len() != test.len() {
        return Err(DataError::Integrity(format!(
            "{} holds {} values but {} has {} test engines",
            rul_path.display(),
            rul.len(),
            test_path.display(),
            test.len()
        )));
    }
    Ok((train, test, rul))
}

/// File names of subset `id` (e.g. `FD001`) inside `dir`.
pub fn subset_paths(dir: &Path, id: &str) -> [PathBuf; 3] {
    [
        dir.join(format!("train_{id}.txt")),
        dir.join(format!("test_{id}.txt")),
        dir.join(format!("RUL_{id}.txt")),
    ]
}

pub fn load_subset(dir: &Path, id: &str) -> Result<RawSubset, DataError> {
    let [train, test, rul] = subset_paths(dir, id);
    let (train, test, test_rul) = parse_cmapss(&train, &test, &rul)?;
    Ok(RawSubset {
        name: id.to_string(),
        train,
        test,
        test_rul,
    })
}

/// Parses whitespace-separated rows `unit cycle s1 s2 s3 x1 … x21`.
pub fn parse_trajectories(text: &str, origin: &Path) -> Result<Vec<Trajectory>, DataError> {
    let parse_err = |line: usize, msg: String| DataError::Parse {
        path: origin.to_path_buf(),
        line,
        msg,
    };
    let mut units: BTreeMap<u32, Vec<CycleRecord>> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let fields: Vec<&str> = raw.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != ROW_ARITY {
            return Err(parse_err(
                line,
                format!("expected {ROW_ARITY} columns, found {}", fields.len()),
            ));
        }
        let int = |s: &str| -> Result<u32, DataError> {
            s.parse::<u32>()
                .map_err(|_| parse_err(line, format!("not an integer: {s:?}")))
        };
        let unit = int(fields[0])?;
        let cycle = int(fields[1])?;
        let mut values = [0.0; N_COLUMNS];
        for (v, s) in values.iter_mut().zip(&fields[2..]) {
            *v = s
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(line, format!("not a number: {s:?}")))?;
        }
        units
            .entry(unit)
            .or_default()
            .push(CycleRecord::from_columns(cycle, &values));
    }
    if units.is_empty() {
        return Err(parse_err(0, "file contains no rows".into()));
    }
    units
        .into_iter()
        .map(|(unit, mut cycles)| {
            cycles.sort_by_key(|c| c.cycle);
            Trajectory::new(unit, cycles)
        })
        .collect()
}

/// One true RUL per line.
pub fn parse_rul_vector(text: &str, origin: &Path) -> Result<Vec<f64>, DataError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let s = raw.trim();
        if s.is_empty() {
            continue;
        }
        let v = s.parse::<f64>().map_err(|_| DataError::Parse {
            path: origin.to_path_buf(),
            line: idx + 1,
            msg: format!("not a number: {s:?}"),
        })?;
        out.push(v);
    }
    if out.is_empty() {
        return Err(DataError::Parse {
            path: origin.to_path_buf(),
            line: 0,
            msg: "file contains no rows".into(),
        });
    }
    Ok(out)
}

/// Writes trajectories back in the flat layout; values use round-trip formatting.
pub fn to_flat_text(trajectories: &[Trajectory]) -> String {
    let mut out = String::new();
    for t in trajectories {
        for rec in &t.cycles {
            let _ = write!(out, "{} {}", t.unit_id, rec.cycle);
            for j in 0..N_COLUMNS {
                let _ = write!(out, " {}", rec.column(j));
            }
            out.push('\n');
        }
    }
    out
}
