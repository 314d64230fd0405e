//! Independent reference implementations used by the integration and
//! acceptance tests. None of these call into the solvers they check.
#![allow(dead_code)]

pub mod oracle_suite;

use tendon_core::numerics::{Matrix, RngStream};

pub fn random_matrix(rows: usize, cols: usize, rng: &mut RngStream) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.next_gaussian()).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

/// Gaussian elimination with partial pivoting; `a` is row-major `n×n`.
pub fn gauss_solve(a: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = a.rows();
    let mut m: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut r = a.row(i).to_vec();
            r.push(b[i]);
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        m.swap(col, piv);
        for r in col + 1..n {
            let f = m[r][col] / m[col][col];
            for c in col..=n {
                m[r][c] -= f * m[col][c];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| m[i][j] * x[j]).sum();
        x[i] = (m[i][n] - s) / m[i][i];
    }
    x
}

/// Gauss-Jordan inverse with partial pivoting.
pub fn gauss_inverse(a: &Matrix) -> Matrix {
    let n = a.rows();
    let mut m: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut r = a.row(i).to_vec();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        m.swap(col, piv);
        let d = m[col][col];
        m[col].iter_mut().for_each(|v| *v /= d);
        for r in 0..n {
            if r != col {
                let f = m[r][col];
                if f != 0.0 {
                    for c in 0..2 * n {
                        m[r][c] -= f * m[col][c];
                    }
                }
            }
        }
    }
    Matrix::from_rows(&m.iter().map(|r| r[n..].to_vec()).collect::<Vec<_>>()).unwrap()
}

/// Ordinary least squares with intercept via the normal equations solved by
/// elimination. Returns `[intercept, w_1, ..., w_d]`.
pub fn ols_with_intercept(x: &Matrix, y: &[f64]) -> Vec<f64> {
    let (n, d) = (x.rows(), x.cols());
    let mut design = Matrix::zeros(n, d + 1);
    for i in 0..n {
        design[(i, 0)] = 1.0;
        for j in 0..d {
            design[(i, j + 1)] = x[(i, j)];
        }
    }
    let mut g = Matrix::zeros(d + 1, d + 1);
    let mut rhs = vec![0.0; d + 1];
    for i in 0..n {
        for a in 0..=d {
            rhs[a] += design[(i, a)] * y[i];
            for b in 0..=d {
                g[(a, b)] += design[(i, a)] * design[(i, b)];
            }
        }
    }
    gauss_solve(&g, &rhs)
}

fn sse(y: &Matrix, idx: &[usize]) -> f64 {
    if idx.is_empty() {
        return 0.0;
    }
    (0..y.cols())
        .map(|k| {
            let mean = idx.iter().map(|&i| y[(i, k)]).sum::<f64>() / idx.len() as f64;
            idx.iter().map(|&i| (y[(i, k)] - mean).powi(2)).sum::<f64>()
        })
        .sum()
}

/// Tries every midpoint between consecutive distinct values of every
/// feature and returns `(feature, threshold, sse_reduction)` of the best
/// split; ties keep the first candidate found (lower feature, lower
/// threshold).
pub fn exhaustive_root_split(x: &Matrix, y: &Matrix, min_leaf: usize) -> Option<(usize, f64, f64)> {
    let all: Vec<usize> = (0..x.rows()).collect();
    let parent = sse(y, &all);
    let mut best: Option<(usize, f64, f64)> = None;
    for f in 0..x.cols() {
        let mut vals: Vec<f64> = x.column(f);
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for w in vals.windows(2) {
            let t = 0.5 * (w[0] + w[1]);
            let (l, r): (Vec<usize>, Vec<usize>) = all.iter().partition(|&&i| x[(i, f)] <= t);
            if l.len() < min_leaf || r.len() < min_leaf {
                continue;
            }
            let red = parent - sse(y, &l) - sse(y, &r);
            if best.map_or(true, |b| red > b.2 + 1e-12 * parent.max(1.0)) {
                best = Some((f, t, red));
            }
        }
    }
    best
}

/// Epsilon-SVR dual `min ½aᵀQa + pᵀa, 0 ≤ a ≤ C, zᵀa = 0` over the stacked
/// `a = (α, α*)` by accelerated projected gradient. The projection onto the
/// box-and-hyperplane set is found by bisection on the hyperplane
/// multiplier. Returns `β = α − α*`.
pub fn svr_dual_projected_gradient(k: &Matrix, y: &[f64], c: f64, eps: f64, iters: usize) -> Vec<f64> {
    let n = y.len();
    let z: Vec<f64> = (0..2 * n).map(|i| if i < n { 1.0 } else { -1.0 }).collect();
    let p: Vec<f64> = (0..2 * n)
        .map(|i| if i < n { eps - y[i] } else { eps + y[i - n] })
        .collect();
    let grad = |a: &[f64]| -> Vec<f64> {
        let beta: Vec<f64> = (0..n).map(|i| a[i] - a[n + i]).collect();
        let kb: Vec<f64> = (0..n).map(|i| (0..n).map(|j| k[(i, j)] * beta[j]).sum()).collect();
        (0..2 * n)
            .map(|i| if i < n { kb[i] + p[i] } else { -kb[i - n] + p[i] })
            .collect()
    };
    let project = |v: &[f64]| -> Vec<f64> {
        let at = |nu: f64| -> (Vec<f64>, f64) {
            let a: Vec<f64> = v.iter().zip(&z).map(|(vi, zi)| (vi - nu * zi).clamp(0.0, c)).collect();
            let s = a.iter().zip(&z).map(|(ai, zi)| ai * zi).sum();
            (a, s)
        };
        let (mut lo, mut hi) = (-1e6, 1e6);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if at(mid).1 > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        at(0.5 * (lo + hi)).0
    };
    // Lipschitz constant of the stacked quadratic: 2·λmax(K), bounded by the
    // largest absolute row sum.
    let lmax = (0..n)
        .map(|i| k.row(i).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let step = 1.0 / (2.0 * lmax);
    let mut a = vec![0.0; 2 * n];
    let mut yk = a.clone();
    let mut t = 1.0f64;
    for _ in 0..iters {
        let g = grad(&yk);
        let next = project(&yk.iter().zip(&g).map(|(v, gi)| v - step * gi).collect::<Vec<_>>());
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        yk = next
            .iter()
            .zip(&a)
            .map(|(n1, a0)| n1 + (t - 1.0) / t_next * (n1 - a0))
            .collect();
        a = next;
        t = t_next;
    }
    (0..n).map(|i| a[i] - a[n + i]).collect()
}

/// `−½βᵀKβ − ε‖β‖₁ + yᵀβ`, written out independently of the library.
pub fn svr_dual_value(k: &Matrix, y: &[f64], eps: f64, beta: &[f64]) -> f64 {
    let n = y.len();
    let mut q = 0.0;
    for i in 0..n {
        for j in 0..n {
            q += beta[i] * k[(i, j)] * beta[j];
        }
    }
    -0.5 * q - eps * beta.iter().map(|b| b.abs()).sum::<f64>() + y.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>()
}

pub fn rbf(a: &[f64], b: &[f64], lengthscale: f64, variance: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    variance * (-d2 / (2.0 * lengthscale * lengthscale)).exp()
}

/// Largest elementwise relative error between an analytic gradient and
/// central differences of `f`; entries where both are below `floor` count
/// as absolute error over `floor`.
pub fn max_fd_rel_error(params: &[f64], analytic: &[f64], step: f64, floor: f64, f: impl Fn(&[f64]) -> f64) -> f64 {
    let mut p = params.to_vec();
    let mut worst = 0.0f64;
    for i in 0..p.len() {
        let orig = p[i];
        p[i] = orig + step;
        let up = f(&p);
        p[i] = orig - step;
        let down = f(&p);
        p[i] = orig;
        let num = (up - down) / (2.0 * step);
        let scale = analytic[i].abs().max(num.abs()).max(floor);
        worst = worst.max((analytic[i] - num).abs() / scale);
    }
    worst
}

/// Scalar bisection on `[lo, hi]` assuming a sign change.
pub fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let flo = f(lo);
    assert!(flo * f(hi) <= 0.0, "no sign change on [{}, {}]", lo, hi);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if (f(mid) < 0.0) == (flo < 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
