//! Oracle checks shared by the `oracles` tests and the acceptance run.

use super::*;
use tendon_core::dataset::{generate_grid, GridSpec};
use tendon_core::distill::{distill_analytical, eval_tf, probe_grid, PolyBasis};
use tendon_core::models::ensemble::{best_split, fit_tree};
use tendon_core::models::kernel::{fit_gpr, fit_svr, RbfKernel, SvrOptions};
use tendon_core::models::linear::{fit_lasso, fit_ridge};
use tendon_core::models::neural::dense::glorot_init;
use tendon_core::models::neural::rnn::{rnn_loss_and_grad, RnnDims, Sequence};
use tendon_core::models::neural::{bnn_loss_and_grad, loss_and_grad_with, param_count};
use tendon_core::numerics::{cholesky_solve, least_squares, Matrix, RngStream};
use tendon_core::plant::{analytical_forward, invert_plant, plant_forward, PlantPreset, PoseAngles};

pub fn cholesky_matches_elimination_on_random_spd() {
    let mut rng = RngStream::derive(7, "test", 0);
    let g = random_matrix(8, 8, &mut rng);
    let mut a = g.t_matmul(&g).unwrap();
    for i in 0..8 {
        a[(i, i)] += 1.0;
    }
    let b: Vec<f64> = (0..8).map(|_| rng.next_gaussian()).collect();
    let x = cholesky_solve(&a, &Matrix::column_vector(&b).unwrap()).unwrap();
    let oracle = gauss_solve(&a, &b);
    for i in 0..8 {
        assert!((x[(i, 0)] - oracle[i]).abs() < 1e-9, "{} vs {}", x[(i, 0)], oracle[i]);
    }
}

pub fn least_squares_recovers_planted_weights() {
    let mut rng = RngStream::derive(11, "test", 0);
    let x = random_matrix(50, 6, &mut rng);
    let w_star = random_matrix(6, 3, &mut rng);
    let y = x.matmul(&w_star).unwrap();
    let w = least_squares(&x, &y).unwrap();
    for (a, b) in w.as_slice().iter().zip(w_star.as_slice()) {
        assert!((a - b).abs() < 1e-8);
    }
}

fn ridge_objective(x: &Matrix, y: &[f64], lambda: f64, w: &[f64]) -> f64 {
    let n = y.len();
    let xm: Vec<f64> = (0..x.cols())
        .map(|j| x.column(j).iter().sum::<f64>() / n as f64)
        .collect();
    let ym = y.iter().sum::<f64>() / n as f64;
    let mut obj = 0.0;
    for i in 0..n {
        let fit: f64 = (0..x.cols()).map(|j| (x[(i, j)] - xm[j]) * w[j]).sum();
        obj += (y[i] - ym - fit).powi(2);
    }
    obj + lambda * w.iter().map(|v| v * v).sum::<f64>()
}

pub fn ridge_matches_brute_force_objective_minimum() {
    let mut rng = RngStream::derive(5, "test", 0);
    let x = random_matrix(50, 2, &mut rng);
    let y: Vec<f64> = (0..50)
        .map(|i| 1.5 * x[(i, 0)] - 0.7 * x[(i, 1)] + 0.3 * rng.next_gaussian() + 2.0)
        .collect();
    let model = fit_ridge(&x, &Matrix::column_vector(&y).unwrap(), 1.0).unwrap();

    let f = |w: &[f64]| ridge_objective(&x, &y, 1.0, w);
    let mut best = [0.0, 0.0];
    let mut best_v = f(&best);
    for a in -300..=300 {
        for b in -300..=300 {
            let w = [a as f64 * 0.01, b as f64 * 0.01];
            let v = f(&w);
            if v < best_v {
                best_v = v;
                best = w;
            }
        }
    }
    // compass-search polish
    let mut step = 0.01;
    while step > 1e-10 {
        let mut moved = false;
        for (d0, d1) in [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)] {
            let w = [best[0] + d0 * step, best[1] + d1 * step];
            let v = f(&w);
            if v < best_v {
                best_v = v;
                best = w;
                moved = true;
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    assert!(
        (model.coef(0, 0) - best[0]).abs() < 1e-6,
        "{} vs {}",
        model.coef(0, 0),
        best[0]
    );
    assert!((model.coef(0, 1) - best[1]).abs() < 1e-6);
}

pub fn lasso_at_zero_penalty_matches_ols() {
    let mut rng = RngStream::derive(3, "test", 0);
    let x = random_matrix(80, 2, &mut rng);
    let y: Vec<f64> = (0..80)
        .map(|i| 0.5 - 2.0 * x[(i, 0)] + x[(i, 1)] + 0.1 * rng.next_gaussian())
        .collect();
    let model = fit_lasso(&x, &Matrix::column_vector(&y).unwrap(), 0.0, 1e-12, 100_000).unwrap();
    let oracle = ols_with_intercept(&x, &y);
    assert!((model.intercept(0) - oracle[0]).abs() < 1e-5);
    for j in 0..2 {
        assert!((model.coef(0, j) - oracle[j + 1]).abs() < 1e-5);
    }
}

pub fn tree_root_split_matches_exhaustive_search() {
    let mut rng = RngStream::derive(200, "test", 0);
    let x = random_matrix(200, 2, &mut rng);
    let mut y = Matrix::zeros(200, 3);
    for i in 0..200 {
        let a = (2.0 * x[(i, 0)]).sin() + 0.5 * x[(i, 1)] + 0.1 * rng.next_gaussian();
        let b = x[(i, 1)].powi(2) + 0.1 * rng.next_gaussian();
        y.row_mut(i).copy_from_slice(&[a, b, -a - b]);
    }
    for min_leaf in [1, 5] {
        let (f, t, red) = exhaustive_root_split(&x, &y, min_leaf).unwrap();
        let idx: Vec<usize> = (0..200).collect();
        let got = best_split(&x, &y, &idx, min_leaf).unwrap();
        assert_eq!(got.feature, f);
        assert!((got.threshold - t).abs() < 1e-12);
        assert!((got.reduction - red).abs() < 1e-9 * red.max(1.0));
        let tree = fit_tree(&x, &y, 3, min_leaf).unwrap();
        let root = tree.root_split().unwrap();
        assert_eq!((root.feature, root.threshold), (f, got.threshold));
    }
}

pub fn svr_dual_matches_projected_gradient_oracle() {
    let mut rng = RngStream::derive(30, "test", 0);
    let xs: Vec<f64> = (0..30).map(|i| -3.0 + 6.0 * i as f64 / 29.0).collect();
    let y: Vec<f64> = xs.iter().map(|v| v.sin() + 0.1 * rng.next_gaussian()).collect();
    let x = Matrix::column_vector(&xs).unwrap();
    let (c, eps, ell) = (10.0, 0.1, 1.0);
    let (model, report) = fit_svr(
        &x,
        &y,
        c,
        eps,
        RbfKernel::new(ell, 1.0).unwrap(),
        SvrOptions {
            tol: 1e-6,
            ..SvrOptions::default()
        },
    )
    .unwrap();
    let k = Matrix::from_rows(
        &xs.iter()
            .map(|a| xs.iter().map(|b| rbf(&[*a], &[*b], ell, 1.0)).collect::<Vec<_>>())
            .collect::<Vec<_>>(),
    )
    .unwrap();
    let oracle_beta = svr_dual_projected_gradient(&k, &y, c, eps, 50_000);
    let oracle = svr_dual_value(&k, &y, eps, &oracle_beta);
    let ours = svr_dual_value(&k, &y, eps, &model.coef);
    assert!((ours - oracle).abs() < 1e-3, "smo {} vs oracle {}", ours, oracle);
    assert!((report.dual_objective - ours).abs() < 1e-9);
    assert!(model.coef.iter().all(|b| b.abs() <= c + 1e-9));
    assert!(model.coef.iter().sum::<f64>().abs() < 1e-9);
}

pub fn gpr_mean_matches_dense_inverse() {
    let mut rng = RngStream::derive(40, "test", 0);
    let x = random_matrix(40, 2, &mut rng);
    let y: Vec<f64> = (0..40)
        .map(|i| x[(i, 0)].sin() * x[(i, 1)] + 0.05 * rng.next_gaussian())
        .collect();
    let (ell, jitter) = (1.0, 1e-6);
    let gp = fit_gpr(&x, &y, RbfKernel::new(ell, 1.0).unwrap(), jitter).unwrap();
    assert_eq!(gp.jitter, jitter);
    let mut kmat = Matrix::zeros(40, 40);
    for i in 0..40 {
        for j in 0..40 {
            kmat[(i, j)] = rbf(x.row(i), x.row(j), ell, 1.0) + if i == j { jitter } else { 0.0 };
        }
    }
    let kinv = gauss_inverse(&kmat);
    let alpha: Vec<f64> = (0..40).map(|i| (0..40).map(|j| kinv[(i, j)] * y[j]).sum()).collect();
    let test = random_matrix(25, 2, &mut rng);
    let means = gp.predict_mean(&test);
    for t in 0..25 {
        let oracle: f64 = (0..40).map(|i| rbf(x.row(i), test.row(t), ell, 1.0) * alpha[i]).sum();
        assert!((means[t] - oracle).abs() < 1e-9, "{} vs {}", means[t], oracle);
    }
}

pub fn gpr_variance_nonnegative_on_dense_probe() {
    let mut rng = RngStream::derive(41, "test", 0);
    let x = random_matrix(30, 2, &mut rng);
    let y: Vec<f64> = (0..30).map(|i| x[(i, 0)] + x[(i, 1)]).collect();
    let gp = fit_gpr(&x, &y, RbfKernel::new(0.7, 1.0).unwrap(), 1e-8).unwrap();
    let probe: Vec<Vec<f64>> = (0..100)
        .flat_map(|i| (0..100).map(move |j| vec![-3.0 + 0.06 * i as f64, -3.0 + 0.06 * j as f64]))
        .collect();
    let (_, stds) = gp.predict_with_std(&Matrix::from_rows(&probe).unwrap());
    assert!(stds.iter().all(|s| *s >= 0.0 && s.is_finite()));
}

pub fn dense_gradient_matches_central_differences() {
    let sizes = [2, 4, 3];
    let mut rng = RngStream::derive(1, "test", 0);
    let params = glorot_init(&sizes, &mut rng);
    let x = random_matrix(5, 2, &mut rng);
    let y = random_matrix(5, 3, &mut rng);
    let (_, g) = loss_and_grad_with(&sizes, &params, &x, &y).unwrap();
    let err = max_fd_rel_error(&params, &g, 1e-5, 1e-6, |p| {
        loss_and_grad_with(&sizes, p, &x, &y).unwrap().0
    });
    assert!(err < 1e-4, "max rel err {}", err);
}

pub fn dense_gradient_invariant_to_batch_order() {
    let sizes = [2, 4, 3];
    let mut rng = RngStream::derive(2, "test", 0);
    let params = glorot_init(&sizes, &mut rng);
    let x = random_matrix(9, 2, &mut rng);
    let y = random_matrix(9, 3, &mut rng);
    let mut order: Vec<usize> = (0..9).collect();
    rng.shuffle(&mut order);
    let xp = Matrix::from_rows(&order.iter().map(|&i| x.row(i).to_vec()).collect::<Vec<_>>()).unwrap();
    let yp = Matrix::from_rows(&order.iter().map(|&i| y.row(i).to_vec()).collect::<Vec<_>>()).unwrap();
    let (_, g1) = loss_and_grad_with(&sizes, &params, &x, &y).unwrap();
    let (_, g2) = loss_and_grad_with(&sizes, &params, &xp, &yp).unwrap();
    for (a, b) in g1.iter().zip(&g2) {
        assert!((a - b).abs() < 1e-12);
    }
}

pub fn bnn_gradients_match_central_differences() {
    let sizes = [2, 4, 3];
    let n = param_count(&sizes);
    let mut rng = RngStream::derive(3, "test", 0);
    let mu = glorot_init(&sizes, &mut rng);
    let rho: Vec<f64> = (0..n).map(|_| -2.0 + 0.3 * rng.next_gaussian()).collect();
    let eps: Vec<f64> = (0..n).map(|_| rng.next_gaussian()).collect();
    let x = random_matrix(6, 2, &mut rng);
    let y = random_matrix(6, 3, &mut rng);
    let (kl_w, prior) = (0.05, 1.0);
    let (_, g_mu, g_rho) = bnn_loss_and_grad(&sizes, &mu, &rho, &eps, &x, &y, kl_w, prior).unwrap();
    let e_mu = max_fd_rel_error(&mu, &g_mu, 1e-5, 1e-6, |m| {
        bnn_loss_and_grad(&sizes, m, &rho, &eps, &x, &y, kl_w, prior).unwrap().0
    });
    let e_rho = max_fd_rel_error(&rho, &g_rho, 1e-5, 1e-6, |r| {
        bnn_loss_and_grad(&sizes, &mu, r, &eps, &x, &y, kl_w, prior).unwrap().0
    });
    assert!(e_mu < 1e-4 && e_rho < 1e-4, "mu {} rho {}", e_mu, e_rho);
}

pub fn bptt_gradient_matches_central_differences() {
    let dims = RnnDims {
        input: 2,
        hidden: 4,
        output: 3,
    };
    let mut rng = RngStream::derive(4, "test", 0);
    let params: Vec<f64> = (0..dims.param_count()).map(|_| 0.5 * rng.next_gaussian()).collect();
    let seqs = [
        Sequence {
            xs: random_matrix(3, 2, &mut rng),
            ys: random_matrix(3, 3, &mut rng),
        },
        Sequence {
            xs: random_matrix(3, 2, &mut rng),
            ys: random_matrix(3, 3, &mut rng),
        },
    ];
    let refs: Vec<&Sequence> = seqs.iter().collect();
    let (_, g) = rnn_loss_and_grad(dims, &params, &refs, 3).unwrap();
    let err = max_fd_rel_error(&params, &g, 1e-5, 1e-6, |p| {
        rnn_loss_and_grad(dims, p, &refs, 3).unwrap().0
    });
    assert!(err < 1e-4, "max rel err {}", err);
}

pub fn plant_inverse_at_origin_matches_bisection() {
    let params = PlantPreset::Default.params();
    let cmd = invert_plant(PoseAngles::new(0.0, 0.0), &params).unwrap();
    assert!(cmd.l1.abs() < 1e-9);
    let b = analytical_forward(cmd).beta;
    let (ks, g) = (params.kappa_sat, params.g_sag);
    let oracle = bisect(
        |b| b * (1.0 - ks * (b / 90.0).powi(2)) - g * (b.to_radians()).cos(),
        0.0,
        10.0,
        1e-13,
    );
    assert!((b - oracle).abs() < 1e-9, "{} vs {}", b, oracle);
    assert!((oracle - 3.0).abs() < 0.1);
}

pub fn plant_inverse_round_trips_inside_margin() {
    let params = PlantPreset::Default.params();
    for t in generate_grid(&GridSpec::paper_sweep()).unwrap() {
        if t.alpha.abs() > 80.0 || t.beta.abs() > 80.0 {
            continue;
        }
        let cmd = invert_plant(t, &params).unwrap();
        let got = plant_forward(cmd, &params, None);
        assert!(
            (got.alpha - t.alpha).abs() < 1e-6 && (got.beta - t.beta).abs() < 1e-6,
            "{:?} -> {:?}",
            t,
            got
        );
    }
}

pub fn analytical_distillation_is_exact() {
    let tf = distill_analytical(PolyBasis::Quadratic, &probe_grid()).unwrap();
    let expect = [
        [0.0, 1.0 / 1.5, 0.0, 0.0, 0.0, 0.0],
        [0.0, -1.0 / 3.0, 1.0 / 1.732, 0.0, 0.0, 0.0],
        [0.0, -1.0 / 3.0, -1.0 / 1.732, 0.0, 0.0, 0.0],
    ];
    for (k, row) in expect.iter().enumerate() {
        for (j, w) in row.iter().enumerate() {
            assert!((tf.coefficients(k)[j] - w).abs() < 1e-9);
        }
    }
    assert!((expect[1][2] - 0.577367).abs() < 1e-6);
    assert!(tf.residual_rms < 1e-9);
    let at = eval_tf(&tf, PoseAngles::new(90.0, 0.0));
    assert!((at.l1 - 60.0).abs() < 1e-6 && (at.l2 + 30.0).abs() < 1e-6 && (at.l3 + 30.0).abs() < 1e-6);
}
