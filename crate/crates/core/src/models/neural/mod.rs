//! Dense nets trained by backpropagation, a mean-field Bayesian net and an
//! Elman recurrent net.

pub mod adam;
pub mod bnn;
pub mod dense;
pub mod rnn;

pub use adam::Adam;
pub use bnn::{bnn_loss_and_grad, fit_bnn, kl_gaussian, BnnConfig, BnnModel};
pub use dense::{forward_with, loss_and_grad_with, param_count, DenseNet};
pub use rnn::{build_sequences, fit_rnn, rnn_loss_and_grad, RnnConfig, RnnModel, Sequence};

use crate::numerics::Matrix;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvePoint {
    pub epoch: usize,
    pub train_mae: f64,
    /// NaN when there is no validation data.
    pub val_mae: f64,
}

pub type TrainingCurve = Vec<CurvePoint>;

/// MAE in original units, from standardized predictions and targets.
pub(crate) fn destandardized_mae(pred: &Matrix, target: &Matrix, out_std: &[f64]) -> f64 {
    if pred.rows() == 0 {
        return f64::NAN;
    }
    let mut acc = 0.0;
    for i in 0..pred.rows() {
        for (k, s) in out_std.iter().enumerate() {
            acc += (pred[(i, k)] - target[(i, k)]).abs() * s;
        }
    }
    acc / (pred.rows() * out_std.len()) as f64
}

pub(crate) fn select_rows(m: &Matrix, idx: &[usize]) -> Matrix {
    let mut out = Matrix::zeros(idx.len(), m.cols());
    for (r, &i) in idx.iter().enumerate() {
        out.row_mut(r).copy_from_slice(m.row(i));
    }
    out
}
