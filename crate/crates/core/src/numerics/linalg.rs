use super::Matrix;
use crate::error::{Error, Result};

/// Lower-triangular Cholesky factor `L` with `A = L·Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Matrix,
}

impl Cholesky {
    /// Factorizes a symmetric positive definite matrix. Only the lower
    /// triangle of `a` is read.
    pub fn factor(a: &Matrix) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "cholesky needs a square matrix, got {}x{}",
                a.rows(),
                a.cols()
            )));
        }
        let n = a.rows();
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let mut pivot = a[(j, j)];
            {
                let lj = l.row(j);
                pivot -= lj[..j].iter().map(|v| v * v).sum::<f64>();
            }
            if !(pivot > 0.0) {
                return Err(Error::NotPositiveDefinite { row: j, pivot });
            }
            let d = pivot.sqrt();
            l[(j, j)] = d;
            for i in (j + 1)..n {
                let s: f64 = {
                    let (li, lj) = (l.row(i), l.row(j));
                    li[..j].iter().zip(&lj[..j]).map(|(x, y)| x * y).sum()
                };
                l[(i, j)] = (a[(i, j)] - s) / d;
            }
        }
        Ok(Cholesky { l })
    }

    pub fn l(&self) -> &Matrix {
        &self.l
    }

    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    /// Squared diagonal of `L`, i.e. the elimination pivots.
    pub fn pivots(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.dim()).map(|i| self.l[(i, i)] * self.l[(i, i)])
    }

    /// Solves `L·y = b` in place.
    pub fn forward_substitute(&self, b: &mut [f64]) {
        let n = self.dim();
        for i in 0..n {
            let row = self.l.row(i);
            let s: f64 = row[..i].iter().zip(&b[..i]).map(|(x, y)| x * y).sum();
            b[i] = (b[i] - s) / row[i];
        }
    }

    /// Solves `Lᵀ·x = y` in place.
    pub fn backward_substitute(&self, y: &mut [f64]) {
        let n = self.dim();
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= self.l[(k, i)] * y[k];
            }
            y[i] = s / self.l[(i, i)];
        }
    }

    pub fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.forward_substitute(&mut x);
        self.backward_substitute(&mut x);
        x
    }

    pub fn solve(&self, b: &Matrix) -> Result<Matrix> {
        if b.rows() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "rhs has {} rows, system has {}",
                b.rows(),
                self.dim()
            )));
        }
        let mut out = Matrix::zeros(b.rows(), b.cols());
        for j in 0..b.cols() {
            let x = self.solve_vec(&b.column(j));
            for (i, v) in x.into_iter().enumerate() {
                out[(i, j)] = v;
            }
        }
        Ok(out)
    }
}

/// Solves `A·x = b` for symmetric positive definite `A`.
pub fn cholesky_solve(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    check_symmetric(a, 1e-9)?;
    Cholesky::factor(a)?.solve(b)
}

fn check_symmetric(a: &Matrix, tol: f64) -> Result<()> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "expected a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    let scale = 1.0 + a.max_abs();
    for i in 0..a.rows() {
        for j in 0..i {
            if (a[(i, j)] - a[(j, i)]).abs() > tol * scale {
                return Err(Error::InvalidParameter(format!(
                    "matrix not symmetric at ({}, {})",
                    i, j
                )));
            }
        }
    }
    Ok(())
}

/// Least-squares solution of `X·W ≈ Y` through the normal equations.
///
/// Columns of `X` are scaled to unit Euclidean norm first; the jitter
/// `1e-10·trace(XᵀX)/cols` is then added to the scaled Gram matrix, the
/// solve is refined against the bare Gram matrix, and the solution is mapped
/// back to the original column scale.
pub fn least_squares(x: &Matrix, y: &Matrix) -> Result<Matrix> {
    if x.rows() != y.rows() {
        return Err(Error::LengthMismatch {
            left: x.rows(),
            right: y.rows(),
        });
    }
    let (n, d) = (x.rows(), x.cols());
    if d == 0 || n < d {
        return Err(Error::RankDeficient { ratio: 0.0 });
    }

    let norms: Vec<f64> = (0..d)
        .map(|j| (0..n).map(|i| x[(i, j)] * x[(i, j)]).sum::<f64>().sqrt())
        .collect();
    if norms.iter().any(|&v| v == 0.0) {
        return Err(Error::RankDeficient { ratio: 0.0 });
    }
    let mut xs = x.clone();
    for i in 0..n {
        for (v, s) in xs.row_mut(i).iter_mut().zip(&norms) {
            *v /= s;
        }
    }

    let mut gram = xs.t_matmul(&xs)?;

    // Rank is judged on the bare Gram matrix; the jitter would mask it.
    let bare = Cholesky::factor(&gram).map_err(|_| Error::RankDeficient { ratio: 0.0 })?;
    let (lo, hi) = bare
        .pivots()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), p| (lo.min(p), hi.max(p)));
    if lo < 1e-12 * hi {
        return Err(Error::RankDeficient { ratio: lo / hi });
    }

    let bare_gram = gram.clone();
    let jitter = 1e-10 * gram.trace() / d as f64;
    for i in 0..d {
        gram[(i, i)] += jitter;
    }
    let chol = Cholesky::factor(&gram)?;

    let rhs = xs.t_matmul(y)?;
    let mut w = chol.solve(&rhs)?;
    // Iterative refinement against the unjittered normal equations removes
    // the O(jitter) bias while keeping the jittered factorization.
    for _ in 0..3 {
        let gw = bare_gram.matmul(&w)?;
        let mut r = rhs.clone();
        for i in 0..d {
            for (rv, gv) in r.row_mut(i).iter_mut().zip(gw.row(i)) {
                *rv -= gv;
            }
        }
        let dw = chol.solve(&r)?;
        for i in 0..d {
            for (wv, dv) in w.row_mut(i).iter_mut().zip(dw.row(i)) {
                *wv += dv;
            }
        }
    }
    for (j, s) in norms.iter().enumerate() {
        for v in w.row_mut(j) {
            *v /= s;
        }
    }
    Ok(w)
}
