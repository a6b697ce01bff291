use serde::{Deserialize, Serialize};

use super::{DataError, FeatureMatrix};

/// Per-feature z-score statistics (population standard deviation).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

pub fn fit_scaler(rows: &FeatureMatrix) -> Result<Scaler, DataError> {
    let n = rows.n_rows();
    if n < 2 {
        return Err(DataError::TooFewRows { required: 2, found: n });
    }
    let d = rows.n_cols();
    let mut means = vec![0.0; d];
    for row in rows.rows() {
        for (m, x) in means.iter_mut().zip(row) {
            *m += x;
        }
    }
    for m in &mut means {
        *m /= n as f64;
    }
    let mut vars = vec![0.0; d];
    for row in rows.rows() {
        for ((v, x), m) in vars.iter_mut().zip(row).zip(&means) {
            *v += (x - m) * (x - m);
        }
    }
    let mut stds = Vec::with_capacity(d);
    for (j, v) in vars.into_iter().enumerate() {
        let std = (v / n as f64).sqrt();
        // relative to the magnitude of the mean: a column of identical large
        // timestamps can pick up rounding noise in the variance
        if !(std > 1e-12 * means[j].abs().max(1.0)) {
            return Err(DataError::ConstantFeature(j));
        }
        stds.push(std);
    }
    Ok(Scaler { means, stds })
}

impl Scaler {
    pub fn dim(&self) -> usize {
        self.means.len()
    }

    pub fn apply(&self, rows: &FeatureMatrix) -> Result<FeatureMatrix, DataError> {
        self.check(rows)?;
        let d = self.dim();
        let data = rows.as_slice().iter().enumerate().map(|(i, x)| (x - self.means[i % d]) / self.stds[i % d]).collect();
        FeatureMatrix::new(data, d)
    }

    pub fn inverse(&self, rows: &FeatureMatrix) -> Result<FeatureMatrix, DataError> {
        self.check(rows)?;
        let d = self.dim();
        let data = rows.as_slice().iter().enumerate().map(|(i, z)| z * self.stds[i % d] + self.means[i % d]).collect();
        FeatureMatrix::new(data, d)
    }

    fn check(&self, rows: &FeatureMatrix) -> Result<(), DataError> {
        if rows.n_cols() != self.dim() {
            return Err(DataError::DimensionMismatch { expected: self.dim(), found: rows.n_cols() });
        }
        Ok(())
    }
}
