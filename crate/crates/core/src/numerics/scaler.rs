use super::Matrix;
use crate::error::{Error, Result};

const STD_FLOOR: f64 = 1e-12;

/// Per-column standardization `(x − mean) / std` with population std.
#[derive(Clone, Debug, PartialEq)]
pub struct Scaler {
    means: Vec<f64>,
    stds: Vec<f64>,
}

impl Scaler {
    pub fn fit(data: &Matrix) -> Result<Self> {
        if data.rows() < 2 || data.cols() == 0 {
            return Err(Error::EmptyInput(format!(
                "scaler needs at least 2 rows, got {}",
                data.rows()
            )));
        }
        let n = data.rows() as f64;
        let mut means = vec![0.0; data.cols()];
        for i in 0..data.rows() {
            for (m, v) in means.iter_mut().zip(data.row(i)) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= n);
        let mut vars = vec![0.0; data.cols()];
        for i in 0..data.rows() {
            for ((s, v), m) in vars.iter_mut().zip(data.row(i)).zip(&means) {
                *s += (v - m) * (v - m);
            }
        }
        let stds = vars.into_iter().map(|s| (s / n).sqrt().max(STD_FLOOR)).collect();
        Ok(Scaler { means, stds })
    }

    /// Scaler that leaves data unchanged.
    pub fn identity(cols: usize) -> Self {
        Scaler {
            means: vec![0.0; cols],
            stds: vec![1.0; cols],
        }
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn stds(&self) -> &[f64] {
        &self.stds
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    pub fn transform(&self, data: &Matrix) -> Result<Matrix> {
        self.check(data)?;
        let mut out = data.clone();
        for i in 0..out.rows() {
            self.transform_row(out.row_mut(i));
        }
        Ok(out)
    }

    pub fn inverse(&self, data: &Matrix) -> Result<Matrix> {
        self.check(data)?;
        let mut out = data.clone();
        for i in 0..out.rows() {
            self.inverse_row(out.row_mut(i));
        }
        Ok(out)
    }

    pub fn transform_row(&self, row: &mut [f64]) {
        for ((v, m), s) in row.iter_mut().zip(&self.means).zip(&self.stds) {
            *v = (*v - m) / s;
        }
    }

    pub fn inverse_row(&self, row: &mut [f64]) {
        for ((v, m), s) in row.iter_mut().zip(&self.means).zip(&self.stds) {
            *v = *v * s + m;
        }
    }

    fn check(&self, data: &Matrix) -> Result<()> {
        if data.cols() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "scaler fitted on {} columns, got {}",
                self.dim(),
                data.cols()
            )));
        }
        Ok(())
    }
}
