use serde::{Deserialize, Serialize};

use super::cmapss::{Trajectory, N_COLUMNS, N_SETTINGS};
use super::DataError;

/// Which of the 24 feature columns are model inputs, in order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureSelection(Vec<usize>);

impl Default for FeatureSelection {
    fn default() -> Self {
        Self((0..N_COLUMNS).collect())
    }
}

impl FeatureSelection {
    pub fn new(columns: Vec<usize>) -> Result<Self, DataError> {
        if columns.is_empty() {
            return Err(DataError::Argument("feature selection is empty".into()));
        }
        if let Some(&bad) = columns.iter().find(|&&c| c >= N_COLUMNS) {
            return Err(DataError::Argument(format!(
                "feature column {bad} out of range (0..{N_COLUMNS})"
            )));
        }
        Ok(Self(columns))
    }

    /// Sensors only, dropping the operating settings.
    pub fn sensors_only() -> Self {
        Self((N_SETTINGS..N_COLUMNS).collect())
    }

    /// Eight sensors that carry degradation trend in every subset
    /// (sensors 2, 3, 4, 7, 11, 12, 15, 20).
    pub fn compact() -> Self {
        Self([2, 3, 4, 7, 11, 12, 15, 20].iter().map(|s| N_SETTINGS + s - 1).collect())
    }

    pub fn columns(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Per-feature min/max fitted on one domain's training trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub constant: Vec<bool>,
    pub fitted_on: String,
    pub selection: FeatureSelection,
}

impl NormalizationStats {
    pub fn n_features(&self) -> usize {
        self.min.len()
    }

    /// `(x − min) / (max − min)`; constant features map to 0.
    pub fn normalize(&self, x: f64, j: usize) -> f64 {
        if self.constant[j] {
            0.0
        } else {
            (x - self.min[j]) / (self.max[j] - self.min[j])
        }
    }

    pub fn denormalize(&self, y: f64, j: usize) -> f64 {
        if self.constant[j] {
            self.min[j]
        } else {
            y * (self.max[j] - self.min[j]) + self.min[j]
        }
    }

    /// Normalized selected features of one cycle.
    pub fn normalize_record(&self, rec: &super::cmapss::CycleRecord) -> Vec<f64> {
        self.selection
            .columns()
            .iter()
            .enumerate()
            .map(|(j, &col)| self.normalize(rec.column(col), j))
            .collect()
    }
}

pub fn fit_normalization(
    trajectories: &[Trajectory],
    selection: &FeatureSelection,
    fitted_on: &str,
) -> Result<NormalizationStats, DataError> {
    if trajectories.is_empty() {
        return Err(DataError::Argument(
            "cannot fit normalization on zero trajectories".into(),
        ));
    }
    let f = selection.len();
    let mut min = vec![f64::INFINITY; f];
    let mut max = vec![f64::NEG_INFINITY; f];
    for rec in trajectories.iter().flat_map(|t| t.cycles()) {
        for (j, &col) in selection.columns().iter().enumerate() {
            let v = rec.column(col);
            min[j] = min[j].min(v);
            max[j] = max[j].max(v);
        }
    }
    let constant = min.iter().zip(&max).map(|(a, b)| a == b).collect();
    Ok(NormalizationStats {
        min,
        max,
        constant,
        fitted_on: fitted_on.to_string(),
        selection: selection.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::super::cmapss::CycleRecord;
    use super::*;

    fn traj(unit: u32, column: usize, values: &[f64]) -> Trajectory {
        let cycles = values
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let mut cols = [0.0; N_COLUMNS];
                cols[column] = v;
                CycleRecord::from_columns(i as u32 + 1, &cols)
            })
            .collect();
        Trajectory::new(unit, cycles).unwrap()
    }

    fn one_feature(col: usize) -> FeatureSelection {
        FeatureSelection::new(vec![col]).unwrap()
    }

    #[test]
    fn min_max_over_cycles() {
        let s = fit_normalization(&[traj(1, 5, &[2.0, 6.0, 10.0])], &one_feature(5), "t").unwrap();
        assert_eq!((s.min[0], s.max[0], s.constant[0]), (2.0, 10.0, false));
        assert_eq!(s.normalize(6.0, 0), 0.5);
        assert_eq!(s.normalize(2.0, 0), 0.0);
        assert_eq!(s.normalize(10.0, 0), 1.0);
    }

    #[test]
    fn constant_feature_is_flagged_and_maps_to_zero() {
        let s = fit_normalization(&[traj(1, 4, &[5.0, 5.0, 5.0])], &one_feature(4), "t").unwrap();
        assert!(s.constant[0]);
        assert_eq!((s.min[0], s.max[0]), (5.0, 5.0));
        assert_eq!(s.normalize(123.0, 0), 0.0);
    }

    #[test]
    fn pools_all_trajectories() {
        let ts = [traj(1, 0, &[0.0, 4.0]), traj(2, 0, &[2.0, 8.0])];
        let s = fit_normalization(&ts, &one_feature(0), "t").unwrap();
        assert_eq!((s.min[0], s.max[0]), (0.0, 8.0));
    }

    #[test]
    fn empty_input_is_rejected() {
        assert!(fit_normalization(&[], &FeatureSelection::default(), "t").is_err());
    }

    #[test]
    fn selections() {
        assert_eq!(FeatureSelection::default().len(), 24);
        assert_eq!(FeatureSelection::sensors_only().len(), 21);
        assert_eq!(FeatureSelection::compact().columns()[0], 4);
        assert!(FeatureSelection::new(vec![24]).is_err());
    }
}
