//! Ridge (closed form) and lasso (cyclic coordinate descent).

use crate::error::{Error, Result};
use crate::numerics::{cholesky_solve, soft_threshold, Matrix};

/// Per-output linear predictor `y_k = b_k + Σ_j w_kj·x_j`.
#[derive(Clone, Debug)]
pub struct LinearModel {
    /// `outputs × (features + 1)`; column 0 is the intercept.
    weights: Matrix,
    lambda: f64,
    /// Non-fatal solver notes (e.g. iteration cap reached).
    pub warnings: Vec<String>,
}

impl LinearModel {
    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn intercept(&self, output: usize) -> f64 {
        self.weights[(output, 0)]
    }

    pub fn coef(&self, output: usize, feature: usize) -> f64 {
        self.weights[(output, feature + 1)]
    }

    pub fn predict(&self, x: &Matrix) -> Matrix {
        let k = self.weights.rows();
        let mut out = Matrix::zeros(x.rows(), k);
        for i in 0..x.rows() {
            let xi = x.row(i);
            for o in 0..k {
                let w = self.weights.row(o);
                out[(i, o)] = w[0] + w[1..].iter().zip(xi).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        out
    }
}

struct Centered {
    x: Matrix,
    y: Matrix,
    x_mean: Vec<f64>,
    y_mean: Vec<f64>,
}

fn center(x: &Matrix, y: &Matrix) -> Result<Centered> {
    if x.rows() != y.rows() {
        return Err(Error::LengthMismatch {
            left: x.rows(),
            right: y.rows(),
        });
    }
    if x.rows() == 0 {
        return Err(Error::EmptyInput("no training rows".into()));
    }
    let n = x.rows() as f64;
    let col_means = |m: &Matrix| -> Vec<f64> {
        (0..m.cols())
            .map(|j| (0..m.rows()).map(|i| m[(i, j)]).sum::<f64>() / n)
            .collect()
    };
    let x_mean = col_means(x);
    let y_mean = col_means(y);
    let mut xc = x.clone();
    let mut yc = y.clone();
    for i in 0..x.rows() {
        xc.row_mut(i).iter_mut().zip(&x_mean).for_each(|(v, m)| *v -= m);
        yc.row_mut(i).iter_mut().zip(&y_mean).for_each(|(v, m)| *v -= m);
    }
    Ok(Centered {
        x: xc,
        y: yc,
        x_mean,
        y_mean,
    })
}

fn assemble(coef: &Matrix, c: &Centered, lambda: f64, warnings: Vec<String>) -> LinearModel {
    // coef is features × outputs
    let (d, k) = (coef.rows(), coef.cols());
    let mut weights = Matrix::zeros(k, d + 1);
    for o in 0..k {
        let shift: f64 = (0..d).map(|j| coef[(j, o)] * c.x_mean[j]).sum();
        weights[(o, 0)] = c.y_mean[o] - shift;
        for j in 0..d {
            weights[(o, j + 1)] = coef[(j, o)];
        }
    }
    LinearModel {
        weights,
        lambda,
        warnings,
    }
}

/// Ridge regression `(XᵀX + λI)⁻¹XᵀY` on centered data; the intercept is
/// not penalized.
pub fn fit_ridge(x: &Matrix, y: &Matrix, lambda: f64) -> Result<LinearModel> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!("lambda {} must be >= 0", lambda)));
    }
    let c = center(x, y)?;
    let mut gram = c.x.t_matmul(&c.x)?;
    for j in 0..gram.rows() {
        gram[(j, j)] += lambda;
    }
    let rhs = c.x.t_matmul(&c.y)?;
    let coef = cholesky_solve(&gram, &rhs)?;
    Ok(assemble(&coef, &c, lambda, Vec::new()))
}

/// Outcome of a single-output lasso solve.
#[derive(Clone, Debug)]
pub struct LassoPath {
    pub coef: Vec<f64>,
    /// Objective `½‖y − Xw‖² + λ‖w‖₁` after each full sweep.
    pub objectives: Vec<f64>,
    pub converged: bool,
}

/// Cyclic coordinate descent on centered data for a single output column.
pub fn lasso_coordinate_descent(x: &Matrix, y: &[f64], lambda: f64, tol: f64, max_iter: usize) -> LassoPath {
    let (n, d) = (x.rows(), x.cols());
    let col_sq: Vec<f64> = (0..d).map(|j| (0..n).map(|i| x[(i, j)].powi(2)).sum()).collect();
    let mut w = vec![0.0; d];
    let mut resid = y.to_vec();
    let objective = |resid: &[f64], w: &[f64]| {
        0.5 * resid.iter().map(|r| r * r).sum::<f64>() + lambda * w.iter().map(|v| v.abs()).sum::<f64>()
    };
    let mut objectives = Vec::new();
    let mut converged = false;
    for _ in 0..max_iter {
        let mut max_change = 0.0f64;
        for j in 0..d {
            if col_sq[j] == 0.0 {
                continue;
            }
            let old = w[j];
            let rho: f64 = (0..n).map(|i| x[(i, j)] * resid[i]).sum::<f64>() + col_sq[j] * old;
            let new = soft_threshold(rho, lambda) / col_sq[j];
            if new != old {
                let delta = new - old;
                for i in 0..n {
                    resid[i] -= x[(i, j)] * delta;
                }
                w[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        objectives.push(objective(&resid, &w));
        if max_change < tol {
            converged = true;
            break;
        }
    }
    LassoPath {
        coef: w,
        objectives,
        converged,
    }
}

/// Lasso `½‖Y − XW‖² + λ‖W‖₁`, one independent solve per output column.
/// Hitting `max_iter` leaves a warning on the model rather than failing.
pub fn fit_lasso(x: &Matrix, y: &Matrix, lambda: f64, tol: f64, max_iter: usize) -> Result<LinearModel> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!("lambda {} must be >= 0", lambda)));
    }
    let c = center(x, y)?;
    let (d, k) = (x.cols(), y.cols());
    let mut coef = Matrix::zeros(d, k);
    let mut warnings = Vec::new();
    for o in 0..k {
        let path = lasso_coordinate_descent(&c.x, &c.y.column(o), lambda, tol, max_iter);
        if !path.converged {
            warnings.push(format!(
                "lasso output {} hit max_iter={} (objective {:.6e})",
                o,
                max_iter,
                path.objectives.last().copied().unwrap_or(f64::NAN)
            ));
        }
        for (j, v) in path.coef.into_iter().enumerate() {
            coef[(j, o)] = v;
        }
    }
    Ok(assemble(&coef, &c, lambda, warnings))
}
