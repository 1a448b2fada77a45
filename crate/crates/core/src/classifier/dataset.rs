use crate::error::{Error, Result};

/// Dense row-major feature matrix with binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    feature_names: Vec<String>,
    values: Vec<f64>,
    labels: Vec<bool>,
}

impl Dataset {
    pub fn new(feature_names: Vec<String>, rows: Vec<Vec<f64>>, labels: Vec<bool>) -> Result<Self> {
        let d = feature_names.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: bad.len(),
            });
        }
        Self::from_flat(feature_names, rows.into_iter().flatten().collect(), labels)
    }

    pub fn from_flat(feature_names: Vec<String>, values: Vec<f64>, labels: Vec<bool>) -> Result<Self> {
        let d = feature_names.len();
        if d == 0 {
            return Err(Error::config("dataset needs at least one feature"));
        }
        if values.len() != labels.len() * d {
            return Err(Error::LengthMismatch(values.len() / d, labels.len()));
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::domain("feature matrix contains NaN"));
        }
        Ok(Self {
            feature_names,
            values,
            labels,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.n_features();
        &self.values[i * d..(i + 1) * d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.n_features())
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn n_positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }
}
