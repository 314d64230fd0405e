use super::adam::cosine_lr;
use super::dense::{forward_with, glorot_init, loss_and_grad_with, param_count};
use super::{destandardized_mae, select_rows, Adam, CurvePoint, TrainingCurve};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngStream};

#[derive(Clone, Debug, PartialEq)]
pub struct BnnConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub lr: f64,
    /// Learning rate reached at the last epoch under cosine decay.
    pub lr_final: f64,
    pub batch: usize,
    /// `None` means 1/N_train.
    pub kl_weight: Option<f64>,
    /// Likelihood noise std in standardized target units.
    pub noise_std: f64,
    pub prior_std: f64,
    /// Initial ρ for every weight (σ = exp ρ).
    pub init_log_std: f64,
    pub mc_predict_samples: usize,
}

impl Default for BnnConfig {
    fn default() -> Self {
        BnnConfig {
            hidden: vec![32, 32],
            epochs: 100,
            lr: 1e-2,
            lr_final: 1e-4,
            batch: 32,
            kl_weight: None,
            noise_std: 0.01,
            prior_std: 1.0,
            init_log_std: -8.0,
            mc_predict_samples: 30,
        }
    }
}

/// Mean-field Gaussian posterior over the weights of a [`super::DenseNet`].
#[derive(Clone, Debug)]
pub struct BnnModel {
    sizes: Vec<usize>,
    mu: Vec<f64>,
    rho: Vec<f64>,
    prior_std: f64,
    kl_weight: f64,
    /// Fixed weight draws used for every prediction.
    draws: Vec<Vec<f64>>,
}

/// `KL(N(μ, σ²) ‖ N(0, σ_p²))` for one weight.
pub fn kl_gaussian(mu: f64, sigma: f64, prior_std: f64) -> f64 {
    (prior_std / sigma).ln() + (sigma * sigma + mu * mu) / (2.0 * prior_std * prior_std) - 0.5
}

/// Loss `(1/B)·Σ ½‖y − f(x; μ + e^ρ·ε)‖² + kl_weight·KL(q ‖ p)` for a fixed
/// noise draw `eps`, with gradients w.r.t. μ and ρ.
#[allow(clippy::too_many_arguments)]
pub fn bnn_loss_and_grad(
    sizes: &[usize],
    mu: &[f64],
    rho: &[f64],
    eps: &[f64],
    x: &Matrix,
    y: &Matrix,
    kl_weight: f64,
    prior_std: f64,
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let n = param_count(sizes);
    if mu.len() != n || rho.len() != n || eps.len() != n {
        return Err(Error::DimensionMismatch(format!("bnn expects {} parameters", n)));
    }
    let w: Vec<f64> = (0..n).map(|i| mu[i] + rho[i].exp() * eps[i]).collect();
    let (data, gw) = loss_and_grad_with(sizes, &w, x, y)?;
    let p2 = prior_std * prior_std;
    let mut kl = 0.0;
    let mut g_mu = vec![0.0; n];
    let mut g_rho = vec![0.0; n];
    for i in 0..n {
        let s = rho[i].exp();
        kl += kl_gaussian(mu[i], s, prior_std);
        g_mu[i] = gw[i] + kl_weight * mu[i] / p2;
        g_rho[i] = gw[i] * eps[i] * s + kl_weight * (s * s / p2 - 1.0);
    }
    let loss = data + kl_weight * kl;
    if !loss.is_finite() {
        return Err(Error::FitDiverged(format!("bnn loss {}", loss)));
    }
    Ok((loss, g_mu, g_rho))
}

fn draw_weights(mu: &[f64], rho: &[f64], count: usize, rng: &mut RngStream) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| {
            mu.iter()
                .zip(rho)
                .map(|(m, r)| m + r.exp() * rng.next_gaussian())
                .collect()
        })
        .collect()
}

fn mc_mean(sizes: &[usize], draws: &[Vec<f64>], x: &Matrix) -> Matrix {
    let out_dim = *sizes.last().unwrap();
    let mut mean = Matrix::zeros(x.rows(), out_dim);
    for w in draws {
        let p = forward_with(sizes, w, x);
        for i in 0..x.rows() {
            mean.row_mut(i).iter_mut().zip(p.row(i)).for_each(|(m, v)| *m += v);
        }
    }
    let c = draws.len() as f64;
    for i in 0..x.rows() {
        mean.row_mut(i).iter_mut().for_each(|m| *m /= c);
    }
    mean
}

impl BnnModel {
    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn sigma(&self) -> Vec<f64> {
        self.rho.iter().map(|r| r.exp()).collect()
    }

    pub fn prior_std(&self) -> f64 {
        self.prior_std
    }

    pub fn kl_weight(&self) -> f64 {
        self.kl_weight
    }

    pub fn kl(&self) -> f64 {
        self.mu
            .iter()
            .zip(&self.rho)
            .map(|(m, r)| kl_gaussian(*m, r.exp(), self.prior_std))
            .sum()
    }

    pub fn predict(&self, x: &Matrix) -> Matrix {
        mc_mean(&self.sizes, &self.draws, x)
    }

    /// Monte-Carlo mean and per-output standard deviation over the fixed draws.
    pub fn predict_with_std(&self, x: &Matrix) -> (Matrix, Matrix) {
        let out_dim = *self.sizes.last().unwrap();
        let preds: Vec<Matrix> = self.draws.iter().map(|w| forward_with(&self.sizes, w, x)).collect();
        let c = preds.len() as f64;
        let mut mean = Matrix::zeros(x.rows(), out_dim);
        let mut std = Matrix::zeros(x.rows(), out_dim);
        for i in 0..x.rows() {
            for k in 0..out_dim {
                let m = preds.iter().map(|p| p[(i, k)]).sum::<f64>() / c;
                let v = preds.iter().map(|p| (p[(i, k)] - m).powi(2)).sum::<f64>() / c;
                mean[(i, k)] = m;
                std[(i, k)] = v.sqrt().max(f64::MIN_POSITIVE);
            }
        }
        (mean, std)
    }
}

/// Trains the variational posterior with one reparameterized sample per
/// minibatch step. Inputs and targets are expected standardized; `out_std`
/// converts curve MAEs back to original units.
pub fn fit_bnn(
    x: &Matrix,
    y: &Matrix,
    val: Option<(&Matrix, &Matrix)>,
    out_std: &[f64],
    cfg: &BnnConfig,
    seed: u64,
) -> Result<(BnnModel, TrainingCurve)> {
    if x.rows() == 0 {
        return Err(Error::EmptyInput("bnn needs training rows".into()));
    }
    if x.rows() != y.rows() {
        return Err(Error::LengthMismatch {
            left: x.rows(),
            right: y.rows(),
        });
    }
    if cfg.batch == 0
        || cfg.mc_predict_samples == 0
        || !(cfg.lr > 0.0)
        || !(cfg.prior_std > 0.0)
        || !(cfg.noise_std > 0.0)
    {
        return Err(Error::InvalidParameter(
            "bnn batch, samples, lr, prior_std and noise_std must be positive".into(),
        ));
    }
    let mut sizes = vec![x.cols()];
    sizes.extend(&cfg.hidden);
    sizes.push(y.cols());
    let n_params = param_count(&sizes);
    // Dividing the data term by noise_std² is the same optimum as scaling the KL term by it.
    let kl_weight = cfg.kl_weight.unwrap_or(1.0 / x.rows() as f64) * cfg.noise_std * cfg.noise_std;

    let mut mu = glorot_init(&sizes, &mut RngStream::derive(seed, "bnn.init", 0));
    let mut rho = vec![cfg.init_log_std; n_params];
    let mut opt_mu = Adam::new(n_params, cfg.lr);
    let mut opt_rho = Adam::new(n_params, cfg.lr);
    let mut shuffle_rng = RngStream::derive(seed, "bnn.shuffle", 0);
    let mut noise_rng = RngStream::derive(seed, "bnn.noise", 0);
    let mut order: Vec<usize> = (0..x.rows()).collect();
    let mut eps = vec![0.0; n_params];
    let mut curve = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        let lr = cosine_lr(cfg.lr, cfg.lr_final, epoch, cfg.epochs);
        opt_mu.set_lr(lr);
        opt_rho.set_lr(lr);
        shuffle_rng.shuffle(&mut order);
        for chunk in order.chunks(cfg.batch) {
            let xb = select_rows(x, chunk);
            let yb = select_rows(y, chunk);
            eps.iter_mut().for_each(|e| *e = noise_rng.next_gaussian());
            let (_, g_mu, g_rho) = bnn_loss_and_grad(&sizes, &mu, &rho, &eps, &xb, &yb, kl_weight, cfg.prior_std)?;
            opt_mu.step(&mut mu, &g_mu);
            opt_rho.step(&mut rho, &g_rho);
        }
        let draws = draw_weights(
            &mu,
            &rho,
            cfg.mc_predict_samples,
            &mut RngStream::derive(seed, "bnn.predict", 0),
        );
        let train_mae = destandardized_mae(&mc_mean(&sizes, &draws, x), y, out_std);
        let val_mae = match val {
            Some((vx, vy)) if vx.rows() > 0 => destandardized_mae(&mc_mean(&sizes, &draws, vx), vy, out_std),
            _ => f64::NAN,
        };
        if !train_mae.is_finite() {
            return Err(Error::FitDiverged(format!(
                "bnn train MAE {} at epoch {}",
                train_mae, epoch
            )));
        }
        curve.push(CurvePoint {
            epoch,
            train_mae,
            val_mae,
        });
    }

    let draws = draw_weights(
        &mu,
        &rho,
        cfg.mc_predict_samples,
        &mut RngStream::derive(seed, "bnn.predict", 0),
    );
    Ok((
        BnnModel {
            sizes,
            mu,
            rho,
            prior_std: cfg.prior_std,
            kl_weight,
            draws,
        },
        curve,
    ))
}
