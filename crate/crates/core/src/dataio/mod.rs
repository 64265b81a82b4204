//! Ingestion, normalization, windowing and synthetic data.

mod csvio;
mod normalize;
mod synthetic;
mod window;

use std::path::Path;

pub use csvio::{load_csv, read_csv, write_csv, CsvTable};
pub use normalize::{apply_normalizer, fit_normalizer, NormStats, Normalization};
pub use synthetic::{designated_pair, generate_synthetic, spread_segments, AnomalySegment};
pub use window::{make_windows, split_train_val, window_at, window_count, Window};

use crate::diffcore::Tensor;
use crate::error::{Error, Result};

pub const TRAIN_FILE: &str = "train.csv";
pub const TEST_FILE: &str = "test.csv";
pub const DEFAULT_LABEL_COLUMN: &str = "label";

/// Train and test halves of a multivariate series, both `T × N`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub train: Tensor,
    pub test: Tensor,
    pub test_labels: Option<Vec<u8>>,
    /// Present once [`Dataset::normalize`] has run.
    pub norm_stats: Option<NormStats>,
}

impl Dataset {
    pub fn new(feature_names: Vec<String>, train: Tensor, test: Tensor, test_labels: Option<Vec<u8>>) -> Result<Self> {
        let n = feature_names.len();
        if n < 2 {
            return Err(Error::Data(format!("need at least 2 features, got {n}")));
        }
        for (name, m) in [("train", &train), ("test", &test)] {
            if m.ndim() != 2 || m.cols() != n {
                return Err(Error::Data(format!("{name} matrix {:?} does not have {n} columns", m.shape())));
            }
        }
        if let Some(l) = &test_labels {
            if l.len() != test.rows() {
                return Err(Error::Data(format!("{} labels for {} test rows", l.len(), test.rows())));
            }
            if l.iter().any(|&v| v > 1) {
                return Err(Error::Data("labels must be 0 or 1".into()));
            }
        }
        Ok(Self {
            feature_names,
            train,
            test,
            test_labels,
            norm_stats: None,
        })
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// Reads `train.csv` and `test.csv` from `dir`. The label column, looked up
    /// in the test file only, is optional unless `require_labels` is set.
    pub fn load_dir(dir: &Path, label_column: &str, require_labels: bool) -> Result<Self> {
        let train = load_csv(&dir.join(TRAIN_FILE), None)?;
        let test_path = dir.join(TEST_FILE);
        let probe = load_csv(&test_path, None)?;
        let has_label = probe.names.iter().any(|n| n == label_column);
        if require_labels && !has_label {
            return Err(Error::Data(format!(
                "{}: no label column {label_column:?}",
                test_path.display()
            )));
        }
        let test = if has_label {
            load_csv(&test_path, Some(label_column))?
        } else {
            probe
        };
        if test.names != train.names {
            return Err(Error::Data(format!(
                "feature columns differ between {TRAIN_FILE} and {TEST_FILE}"
            )));
        }
        Self::new(train.names, train.values, test.values, test.labels)
    }

    /// Writes raw (unnormalized) values to `train.csv` and `test.csv` in `dir`.
    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_csv(&dir.join(TRAIN_FILE), &self.feature_names, &self.train, None)?;
        let labels = self.test_labels.as_deref().map(|l| (DEFAULT_LABEL_COLUMN, l));
        write_csv(&dir.join(TEST_FILE), &self.feature_names, &self.test, labels)
    }

    /// Fits statistics on the train half and applies them to both halves.
    pub fn normalize(&mut self, method: Normalization) -> Result<()> {
        if self.norm_stats.is_some() {
            return Err(Error::InvalidArgument("dataset is already normalized".into()));
        }
        let stats = fit_normalizer(&self.train, method)?;
        self.train = stats.apply(&self.train)?;
        self.test = stats.apply(&self.test)?;
        self.norm_stats = Some(stats);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn directory_round_trip_and_normalization() {
        let ds = generate_synthetic(4, 300, &[AnomalySegment { start: 200, len: 10 }], 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        ds.save_dir(dir.path()).unwrap();
        let mut back = Dataset::load_dir(dir.path(), DEFAULT_LABEL_COLUMN, true).unwrap();
        assert_eq!(back, ds);
        back.normalize(Normalization::MinMax).unwrap();
        assert!(back.train.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert!(back.normalize(Normalization::MinMax).is_err());
    }

    #[test]
    fn rejects_single_feature_and_bad_labels() {
        let m = Tensor::zeros(&[3, 1]);
        assert!(Dataset::new(vec!["a".into()], m.clone(), m, None).is_err());
        let m = Tensor::zeros(&[3, 2]);
        assert!(Dataset::new(vec!["a".into(), "b".into()], m.clone(), m.clone(), Some(vec![0, 1])).is_err());
        assert!(Dataset::new(vec!["a".into(), "b".into()], m.clone(), m, Some(vec![0, 2, 1])).is_err());
    }
}
