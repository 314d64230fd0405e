//! RBF-kernel models: epsilon-insensitive SVR solved by SMO, and Gaussian
//! process regression through a Cholesky factorization.

use crate::error::{Error, Result};
use crate::numerics::{Cholesky, Matrix};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RbfKernel {
    pub lengthscale: f64,
    pub variance: f64,
}

impl RbfKernel {
    pub fn new(lengthscale: f64, variance: f64) -> Result<Self> {
        if !(lengthscale > 0.0 && lengthscale.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "lengthscale {} must be > 0",
                lengthscale
            )));
        }
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "signal variance {} must be > 0",
                variance
            )));
        }
        Ok(RbfKernel { lengthscale, variance })
    }

    #[inline]
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        self.variance * (-0.5 * d2 / (self.lengthscale * self.lengthscale)).exp()
    }

    pub fn gram(&self, x: &Matrix) -> Matrix {
        let n = x.rows();
        let mut k = Matrix::zeros(n, n);
        for i in 0..n {
            k[(i, i)] = self.variance;
            for j in 0..i {
                let v = self.eval(x.row(i), x.row(j));
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        k
    }

    pub fn cross(&self, train: &Matrix, point: &[f64]) -> Vec<f64> {
        (0..train.rows()).map(|i| self.eval(train.row(i), point)).collect()
    }
}

/// Median of all pairwise Euclidean distances between rows.
pub fn median_pairwise_distance(x: &Matrix) -> f64 {
    let n = x.rows();
    let mut d = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in 0..i {
            let d2: f64 = x.row(i).iter().zip(x.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            d.push(d2.sqrt());
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    let mid = d.len() / 2;
    let (_, m, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    let m = *m;
    if m > 0.0 {
        m
    } else {
        1.0
    }
}

#[derive(Clone, Debug)]
pub struct SvrModel {
    /// `α_i − α_i*` per training point.
    pub coef: Vec<f64>,
    pub bias: f64,
    pub c: f64,
    pub epsilon: f64,
    pub kernel: RbfKernel,
    support: Matrix,
    support_coef: Vec<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct SvrReport {
    pub iterations: usize,
    pub final_violation: f64,
    pub converged: bool,
    /// Dual objective after each accepted step (only when tracing).
    pub objective_trace: Vec<f64>,
    pub dual_objective: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct SvrOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub trace: bool,
}

impl Default for SvrOptions {
    fn default() -> Self {
        SvrOptions {
            tol: 1e-3,
            max_iter: 100_000,
            trace: false,
        }
    }
}

impl SvrModel {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.bias
            + (0..self.support.rows())
                .map(|i| self.support_coef[i] * self.kernel.eval(self.support.row(i), x))
                .sum::<f64>()
    }

    pub fn predict(&self, x: &Matrix) -> Vec<f64> {
        (0..x.rows()).map(|i| self.predict_row(x.row(i))).collect()
    }

    pub fn support_count(&self) -> usize {
        self.support.rows()
    }
}

/// Dual objective of epsilon-SVR in `β = α − α*` form:
/// `−½βᵀKβ − ε‖β‖₁ + yᵀβ`.
pub fn svr_dual_objective(k: &Matrix, y: &[f64], epsilon: f64, beta: &[f64]) -> f64 {
    let n = beta.len();
    let mut quad = 0.0;
    for i in 0..n {
        if beta[i] == 0.0 {
            continue;
        }
        let row = k.row(i);
        quad += beta[i] * (0..n).map(|j| row[j] * beta[j]).sum::<f64>();
    }
    -0.5 * quad - epsilon * beta.iter().map(|b| b.abs()).sum::<f64>()
        + y.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>()
}

/// Epsilon-SVR by SMO on the `2n`-variable dual
/// `min ½aᵀQa + pᵀa, 0 ≤ a ≤ C, zᵀa = 0` with second-order working-set
/// selection. Stops when the maximal KKT violation drops below `tol`.
pub fn fit_svr(
    x: &Matrix,
    y: &[f64],
    c: f64,
    epsilon: f64,
    kernel: RbfKernel,
    opts: SvrOptions,
) -> Result<(SvrModel, SvrReport)> {
    if x.rows() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.rows(),
            right: y.len(),
        });
    }
    if x.rows() == 0 {
        return Err(Error::EmptyInput("svr needs at least one sample".into()));
    }
    if !(c > 0.0) || !(epsilon >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "svr needs C > 0 and epsilon >= 0 (C={}, eps={})",
            c, epsilon
        )));
    }
    let n = x.rows();
    let l = 2 * n;
    let k = kernel.gram(x);
    let z = |t: usize| if t < n { 1.0 } else { -1.0 };
    let kk = |s: usize, t: usize| k[(s % n, t % n)];

    let mut a = vec![0.0; l];
    // gradient of ½aᵀQa + pᵀa at a = 0 is p
    let mut g: Vec<f64> = (0..l)
        .map(|t| if t < n { epsilon - y[t] } else { epsilon + y[t - n] })
        .collect();
    let p = g.clone();
    let tau = 1e-12;
    let is_up = |t: usize, a: &[f64]| if t < n { a[t] < c } else { a[t] > 0.0 };
    let is_low = |t: usize, a: &[f64]| if t < n { a[t] > 0.0 } else { a[t] < c };

    let mut report = SvrReport::default();
    let objective = |a: &[f64], g: &[f64]| -> f64 {
        -0.5 * a
            .iter()
            .zip(g)
            .zip(&p)
            .map(|((ai, gi), pi)| ai * (gi + pi))
            .sum::<f64>()
    };

    loop {
        // working set: i maximizes −z·G over I_up
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = None;
        for t in 0..l {
            if is_up(t, &a) {
                let v = -z(t) * g[t];
                if v > gmax {
                    gmax = v;
                    i_sel = Some(t);
                }
            }
        }
        let mut gmin = f64::INFINITY;
        let mut j_sel = None;
        let mut best_gain = f64::INFINITY;
        if let Some(i) = i_sel {
            let kii = kk(i, i);
            for t in 0..l {
                if !is_low(t, &a) {
                    continue;
                }
                let v = -z(t) * g[t];
                gmin = gmin.min(v);
                let b = gmax - v;
                if b > 0.0 {
                    let quad = (kii + kk(t, t) - 2.0 * kk(i, t)).max(tau);
                    let gain = -(b * b) / quad;
                    if gain <= best_gain {
                        best_gain = gain;
                        j_sel = Some(t);
                    }
                }
            }
        }
        let violation = if i_sel.is_some() { gmax - gmin } else { 0.0 };
        report.final_violation = violation.max(0.0);
        if violation < opts.tol || j_sel.is_none() {
            report.converged = true;
            break;
        }
        if report.iterations >= opts.max_iter {
            break;
        }
        report.iterations += 1;

        let (i, j) = (i_sel.unwrap(), j_sel.unwrap());
        let (old_ai, old_aj) = (a[i], a[j]);
        let qij = z(i) * z(j) * kk(i, j);
        if z(i) != z(j) {
            let delta = (-g[i] - g[j]) / (kk(i, i) + kk(j, j) + 2.0 * qij).max(tau);
            let diff = a[i] - a[j];
            a[i] += delta;
            a[j] += delta;
            if diff > 0.0 {
                if a[j] < 0.0 {
                    a[j] = 0.0;
                    a[i] = diff;
                }
            } else if a[i] < 0.0 {
                a[i] = 0.0;
                a[j] = -diff;
            }
            if diff > 0.0 {
                if a[i] > c {
                    a[i] = c;
                    a[j] = c - diff;
                }
            } else if a[j] > c {
                a[j] = c;
                a[i] = c + diff;
            }
        } else {
            let delta = (g[i] - g[j]) / (kk(i, i) + kk(j, j) - 2.0 * qij).max(tau);
            let sum = a[i] + a[j];
            a[i] -= delta;
            a[j] += delta;
            if sum > c {
                if a[i] > c {
                    a[i] = c;
                    a[j] = sum - c;
                }
            } else if a[j] < 0.0 {
                a[j] = 0.0;
                a[i] = sum;
            }
            if sum > c {
                if a[j] > c {
                    a[j] = c;
                    a[i] = sum - c;
                }
            } else if a[i] < 0.0 {
                a[i] = 0.0;
                a[j] = sum;
            }
        }
        let (di, dj) = (a[i] - old_ai, a[j] - old_aj);
        for t in 0..l {
            g[t] += z(t) * (z(i) * kk(t, i) * di + z(j) * kk(t, j) * dj);
        }
        if opts.trace {
            report.objective_trace.push(objective(&a, &g));
        }
    }

    // bias from free variables, else midpoint of the feasible interval
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum_free, mut n_free) = (0.0, 0usize);
    for t in 0..l {
        let yg = z(t) * g[t];
        let at_upper = a[t] >= c;
        let at_lower = a[t] <= 0.0;
        if at_upper {
            if z(t) < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if at_lower {
            if z(t) > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 {
        sum_free / n_free as f64
    } else {
        0.5 * (ub + lb)
    };

    let coef: Vec<f64> = (0..n).map(|t| a[t] - a[t + n]).collect();
    report.dual_objective = objective(&a, &g);
    let sv: Vec<usize> = (0..n).filter(|&t| coef[t] != 0.0).collect();
    let mut support = Matrix::zeros(sv.len(), x.cols());
    for (r, &t) in sv.iter().enumerate() {
        support.row_mut(r).copy_from_slice(x.row(t));
    }
    let support_coef = sv.iter().map(|&t| coef[t]).collect();
    Ok((
        SvrModel {
            coef,
            bias: -rho,
            c,
            epsilon,
            kernel,
            support,
            support_coef,
        },
        report,
    ))
}

#[derive(Clone, Debug)]
pub struct GprModel {
    pub kernel: RbfKernel,
    /// Diagonal jitter actually used (after escalation).
    pub jitter: f64,
    chol: Cholesky,
    weights: Vec<f64>,
    /// `L⁻¹y`, so the mean is `(L⁻¹k)·(L⁻¹y)` with one triangular solve.
    whitened: Vec<f64>,
    train: Matrix,
}

pub const GPR_MAX_JITTER: f64 = 1e-4;

/// Factorizes `K + jitter·I`, multiplying the jitter by ten on failure up to
/// [`GPR_MAX_JITTER`].
pub fn fit_gpr(x: &Matrix, y: &[f64], kernel: RbfKernel, jitter: f64) -> Result<GprModel> {
    if x.rows() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.rows(),
            right: y.len(),
        });
    }
    if x.rows() == 0 {
        return Err(Error::EmptyInput("gpr needs at least one sample".into()));
    }
    if !(jitter > 0.0) {
        return Err(Error::InvalidParameter(format!("jitter {} must be > 0", jitter)));
    }
    let base = kernel.gram(x);
    let mut jit = jitter;
    let chol = loop {
        let mut k = base.clone();
        for i in 0..k.rows() {
            k[(i, i)] += jit;
        }
        match Cholesky::factor(&k) {
            Ok(c) => break c,
            Err(e @ Error::NotPositiveDefinite { .. }) => {
                if jit >= GPR_MAX_JITTER {
                    return Err(e);
                }
                jit = (jit * 10.0).min(GPR_MAX_JITTER);
            }
            Err(e) => return Err(e),
        }
    };
    let weights = chol.solve_vec(y);
    let mut whitened = y.to_vec();
    chol.forward_substitute(&mut whitened);
    Ok(GprModel {
        kernel,
        jitter: jit,
        chol,
        weights,
        whitened,
        train: x.clone(),
    })
}

impl GprModel {
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn predict_mean_row(&self, x: &[f64]) -> f64 {
        let mut ks = self.kernel.cross(&self.train, x);
        self.chol.forward_substitute(&mut ks);
        ks.iter().zip(&self.whitened).map(|(a, b)| a * b).sum()
    }

    pub fn predict_mean(&self, x: &Matrix) -> Vec<f64> {
        (0..x.rows()).map(|i| self.predict_mean_row(x.row(i))).collect()
    }

    /// Posterior mean and standard deviation; the variance is clamped at 0.
    pub fn predict_with_std(&self, x: &Matrix) -> (Vec<f64>, Vec<f64>) {
        let mut means = Vec::with_capacity(x.rows());
        let mut stds = Vec::with_capacity(x.rows());
        for i in 0..x.rows() {
            let row = x.row(i);
            let mut ks = self.kernel.cross(&self.train, row);
            self.chol.forward_substitute(&mut ks);
            means.push(ks.iter().zip(&self.whitened).map(|(a, b)| a * b).sum());
            let var = self.kernel.eval(row, row) - ks.iter().map(|v| v * v).sum::<f64>();
            stds.push(var.max(0.0).sqrt());
        }
        (means, stds)
    }
}
