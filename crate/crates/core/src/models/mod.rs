//! Uniform regressor contract over the eight model families.

pub mod ensemble;
pub mod kernel;
pub mod linear;
pub mod neural;

use std::collections::BTreeMap;
use std::fmt;
use std::time::Instant;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Scaler};
use crate::plant::{PoseAngles, TendonDelta};

use ensemble::{fit_boosted, fit_forest, BoostedModel, ForestModel, Resample};
use kernel::{fit_gpr, fit_svr, median_pairwise_distance, GprModel, RbfKernel, SvrModel, SvrOptions};
use linear::{fit_lasso, fit_ridge, LinearModel};
use neural::{fit_bnn, fit_rnn, BnnConfig, BnnModel, RnnConfig, RnnModel, TrainingCurve};

/// Penalty grid searched by `--tune` for ridge and lasso.
pub const LAMBDA_GRID: [f64; 5] = [1e-3, 1e-2, 1e-1, 1.0, 10.0];
/// Lengthscale multipliers searched for GPR.
pub const LENGTHSCALE_GRID: [f64; 3] = [0.5, 1.0, 2.0];

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Family {
    RandomForest,
    GradientBoosting,
    Ridge,
    Lasso,
    Svr,
    Gpr,
    Bnn,
    Rnn,
}

impl Family {
    pub const ALL: [Family; 8] = [
        Family::RandomForest,
        Family::GradientBoosting,
        Family::Ridge,
        Family::Lasso,
        Family::Svr,
        Family::Gpr,
        Family::Bnn,
        Family::Rnn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::RandomForest => "random_forest",
            Family::GradientBoosting => "gradient_boosting",
            Family::Ridge => "ridge",
            Family::Lasso => "lasso",
            Family::Svr => "svr",
            Family::Gpr => "gpr",
            Family::Bnn => "bnn",
            Family::Rnn => "rnn",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == name)
            .ok_or_else(|| Error::UnknownFamily(name.to_string()))
    }

    /// Families trained epoch by epoch, which record a learning curve.
    pub fn is_epoch_based(self) -> bool {
        matches!(self, Family::Bnn | Family::Rnn)
    }

    /// Families whose prediction is not an explicit function of the pose alone
    /// in closed form (sampled weights, recurrent context).
    pub fn is_implicit(self) -> bool {
        matches!(self, Family::Bnn | Family::Rnn)
    }

    pub fn default_hyperparams(self) -> &'static [(&'static str, f64)] {
        match self {
            Family::RandomForest => &[("n_trees", 100.0), ("max_depth", 10.0), ("min_samples_leaf", 2.0)],
            Family::GradientBoosting => &[
                ("n_stages", 200.0),
                ("learning_rate", 0.05),
                ("max_depth", 3.0),
                ("min_samples_leaf", 1.0),
            ],
            Family::Ridge => &[("lambda", 1.0)],
            Family::Lasso => &[("lambda", 0.01), ("tol", 1e-6), ("max_iter", 10000.0)],
            Family::Svr => &[
                ("c", 10.0),
                ("epsilon", 0.01),
                ("tol", 1e-3),
                ("max_iter", 100000.0),
                ("lengthscale", 0.0),
            ],
            Family::Gpr => &[("jitter", 1e-8), ("lengthscale", 0.0), ("tune_lengthscale", 0.0)],
            Family::Bnn => &[
                ("epochs", 100.0),
                ("lr", 1e-2),
                ("lr_final", 1e-4),
                ("batch", 32.0),
                ("hidden", 32.0),
                ("kl_weight", 0.0),
                ("noise_std", 0.01),
                ("prior_std", 1.0),
                ("init_log_std", -8.0),
                ("mc_predict_samples", 30.0),
            ],
            Family::Rnn => &[
                ("epochs", 100.0),
                ("lr", 1e-2),
                ("lr_final", 1e-4),
                ("bptt_len", 19.0),
                ("hidden", 32.0),
                ("batch_sequences", 1.0),
                ("sum_zero_readout", 1.0),
            ],
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Numeric hyperparameters keyed by name; only the family's own keys exist.
#[derive(Clone, Debug, PartialEq)]
pub struct Hyperparams {
    family: Family,
    values: BTreeMap<&'static str, f64>,
}

impl Hyperparams {
    pub fn defaults(family: Family) -> Self {
        Hyperparams {
            family,
            values: family.default_hyperparams().iter().copied().collect(),
        }
    }

    pub fn set(&mut self, key: &str, value: f64) -> Result<()> {
        let slot = self
            .values
            .iter_mut()
            .find(|(k, _)| **k == key)
            .map(|(_, v)| v)
            .ok_or_else(|| Error::UnknownHyperparameter {
                family: self.family.name().to_string(),
                key: key.to_string(),
            })?;
        if !value.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "{}.{} = {} is not finite",
                self.family, key, value
            )));
        }
        *slot = value;
        Ok(())
    }

    pub fn get(&self, key: &str) -> f64 {
        self.values[key]
    }

    pub fn get_usize(&self, key: &str) -> Result<usize> {
        let v = self.get(key);
        if v < 0.0 || v.fract() != 0.0 {
            return Err(Error::InvalidParameter(format!(
                "{}.{} = {} must be a non-negative integer",
                self.family, key, v
            )));
        }
        Ok(v as usize)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&'static str, f64)> + '_ {
        self.values.iter().map(|(k, v)| (*k, *v))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegressorSpec {
    pub family: Family,
    hyperparams: Hyperparams,
    pub seed: u64,
    /// Select ridge/lasso λ (and GPR lengthscale) on validation MAE.
    pub tune: bool,
}

impl RegressorSpec {
    pub fn new(family: Family, seed: u64) -> Self {
        RegressorSpec {
            family,
            hyperparams: Hyperparams::defaults(family),
            seed,
            tune: false,
        }
    }

    pub fn with(mut self, key: &str, value: f64) -> Result<Self> {
        self.hyperparams.set(key, value)?;
        Ok(self)
    }

    pub fn set(&mut self, key: &str, value: f64) -> Result<()> {
        self.hyperparams.set(key, value)
    }

    pub fn hyperparams(&self) -> &Hyperparams {
        &self.hyperparams
    }
}

/// Fitted state per family. Ridge, lasso, SVR and GPR hold one predictor per
/// tendon; the others predict all three outputs jointly.
#[derive(Clone, Debug)]
pub enum FittedState {
    Forest(ForestModel),
    Boosted(BoostedModel),
    Linear(LinearModel),
    Svr(Vec<SvrModel>),
    Gpr(Vec<GprModel>),
    Bnn(BnnModel),
    /// The flag projects predictions onto the sum-zero plane.
    Rnn(RnnModel, bool),
}

#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub spec: RegressorSpec,
    state: FittedState,
    in_scaler: Scaler,
    out_scaler: Scaler,
    pub fit_seconds: f64,
    pub training_curve: Option<TrainingCurve>,
    pub warnings: Vec<String>,
}

fn pose_matrix(poses: &[PoseAngles]) -> Matrix {
    let mut m = Matrix::zeros(poses.len(), 2);
    for (i, p) in poses.iter().enumerate() {
        m.row_mut(i).copy_from_slice(&p.as_array());
    }
    m
}

fn cmd_matrix(cmds: &[TendonDelta]) -> Matrix {
    let mut m = Matrix::zeros(cmds.len(), 3);
    for (i, c) in cmds.iter().enumerate() {
        m.row_mut(i).copy_from_slice(&c.as_array());
    }
    m
}

fn columns_to_matrix(cols: &[Vec<f64>], rows: usize) -> Matrix {
    let mut m = Matrix::zeros(rows, cols.len());
    for (k, c) in cols.iter().enumerate() {
        for (i, v) in c.iter().enumerate() {
            m[(i, k)] = *v;
        }
    }
    m
}

fn mae(a: &Matrix, b: &Matrix) -> f64 {
    let n = a.as_slice().len().max(1) as f64;
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).abs())
        .sum::<f64>()
        / n
}

struct Prepared<'a> {
    spec: &'a RegressorSpec,
    train: &'a Dataset,
    val: &'a Dataset,
    in_scaler: Scaler,
    out_scaler: Scaler,
    x: Matrix,
    y: Matrix,
    vx: Matrix,
    vy: Matrix,
}

impl Prepared<'_> {
    fn hp(&self) -> &Hyperparams {
        &self.spec.hyperparams
    }

    /// Validation MAE in standardized units for a candidate's predictions.
    fn val_score(&self, pred: &Matrix) -> f64 {
        mae(pred, &self.vy)
    }
}

fn fit_linear(p: &Prepared, lambda: f64) -> Result<LinearModel> {
    match p.spec.family {
        Family::Ridge => fit_ridge(&p.x, &p.y, lambda),
        _ => fit_lasso(&p.x, &p.y, lambda, p.hp().get("tol"), p.hp().get_usize("max_iter")?),
    }
}

fn fit_gpr_columns(p: &Prepared, lengthscale: f64) -> Result<Vec<GprModel>> {
    // Standardized targets have unit variance, so σ_f² = 1 for every output.
    let kernel = RbfKernel::new(lengthscale, 1.0)?;
    (0..p.y.cols())
        .map(|k| fit_gpr(&p.x, &p.y.column(k), kernel, p.hp().get("jitter")))
        .collect()
}

fn gpr_predict(models: &[GprModel], x: &Matrix) -> Matrix {
    let cols: Vec<Vec<f64>> = models.iter().map(|m| m.predict_mean(x)).collect();
    columns_to_matrix(&cols, x.rows())
}

fn fit_state(p: &Prepared, warnings: &mut Vec<String>) -> Result<(FittedState, Option<TrainingCurve>)> {
    let hp = p.hp();
    let seed = p.spec.seed;
    let can_tune = p.spec.tune && !p.val.is_empty();
    if p.spec.tune && p.val.is_empty() {
        warnings.push("tuning skipped: empty validation set".into());
    }
    Ok(match p.spec.family {
        Family::RandomForest => (
            FittedState::Forest(fit_forest(
                &p.x,
                &p.y,
                hp.get_usize("n_trees")?,
                hp.get_usize("max_depth")?,
                hp.get_usize("min_samples_leaf")?,
                seed,
                Resample::Bootstrap,
            )?),
            None,
        ),
        Family::GradientBoosting => (
            FittedState::Boosted(fit_boosted(
                &p.x,
                &p.y,
                hp.get_usize("n_stages")?,
                hp.get("learning_rate"),
                hp.get_usize("max_depth")?,
                hp.get_usize("min_samples_leaf")?,
            )?),
            None,
        ),
        Family::Ridge | Family::Lasso => {
            let model = if can_tune {
                let mut best: Option<(f64, LinearModel)> = None;
                for &lambda in &LAMBDA_GRID {
                    let m = fit_linear(p, lambda)?;
                    let score = p.val_score(&m.predict(&p.vx));
                    if best.as_ref().map_or(true, |(s, _)| score < *s) {
                        best = Some((score, m));
                    }
                }
                best.unwrap().1
            } else {
                fit_linear(p, hp.get("lambda"))?
            };
            warnings.extend(model.warnings.iter().cloned());
            (FittedState::Linear(model), None)
        }
        Family::Svr => {
            let ls = match hp.get("lengthscale") {
                l if l > 0.0 => l,
                _ => median_pairwise_distance(&p.x),
            };
            let kernel = RbfKernel::new(ls, 1.0)?;
            let opts = SvrOptions {
                tol: hp.get("tol"),
                max_iter: hp.get_usize("max_iter")?,
                trace: false,
            };
            let mut models = Vec::with_capacity(p.y.cols());
            for k in 0..p.y.cols() {
                let (m, report) = fit_svr(&p.x, &p.y.column(k), hp.get("c"), hp.get("epsilon"), kernel, opts)?;
                if !report.converged {
                    warnings.push(format!(
                        "svr output {} stopped at max_iter={} (violation {:.3e})",
                        k, opts.max_iter, report.final_violation
                    ));
                }
                models.push(m);
            }
            (FittedState::Svr(models), None)
        }
        Family::Gpr => {
            let base = match hp.get("lengthscale") {
                l if l > 0.0 => l,
                _ => median_pairwise_distance(&p.x),
            };
            let tune = (can_tune || hp.get("tune_lengthscale") != 0.0) && !p.val.is_empty();
            let models = if tune {
                let mut best: Option<(f64, Vec<GprModel>)> = None;
                for &mult in &LENGTHSCALE_GRID {
                    let ms = fit_gpr_columns(p, base * mult)?;
                    let score = p.val_score(&gpr_predict(&ms, &p.vx));
                    if best.as_ref().map_or(true, |(s, _)| score < *s) {
                        best = Some((score, ms));
                    }
                }
                best.unwrap().1
            } else {
                fit_gpr_columns(p, base)?
            };
            (FittedState::Gpr(models), None)
        }
        Family::Bnn => {
            let hidden = hp.get_usize("hidden")?;
            let kl = hp.get("kl_weight");
            let cfg = BnnConfig {
                hidden: vec![hidden, hidden],
                epochs: hp.get_usize("epochs")?,
                lr: hp.get("lr"),
                lr_final: hp.get("lr_final"),
                batch: hp.get_usize("batch")?,
                kl_weight: (kl > 0.0).then_some(kl),
                noise_std: hp.get("noise_std"),
                prior_std: hp.get("prior_std"),
                init_log_std: hp.get("init_log_std"),
                mc_predict_samples: hp.get_usize("mc_predict_samples")?,
            };
            let val = (!p.val.is_empty()).then_some((&p.vx, &p.vy));
            let (m, curve) = fit_bnn(&p.x, &p.y, val, p.out_scaler.stds(), &cfg, seed)?;
            (FittedState::Bnn(m), Some(curve))
        }
        Family::Rnn => {
            let cfg = RnnConfig {
                hidden: hp.get_usize("hidden")?,
                epochs: hp.get_usize("epochs")?,
                lr: hp.get("lr"),
                lr_final: hp.get("lr_final"),
                bptt_len: hp.get_usize("bptt_len")?,
                batch_sequences: hp.get_usize("batch_sequences")?,
            };
            let (m, curve) = fit_rnn(p.train, p.val, &p.in_scaler, &p.out_scaler, &cfg, seed)?;
            (FittedState::Rnn(m, hp.get("sum_zero_readout") != 0.0), Some(curve))
        }
    })
}

/// Standardizes inputs and targets on `train`, fits the family, and times the
/// optimization. `val` may be empty.
pub fn fit(spec: &RegressorSpec, train: &Dataset, val: &Dataset) -> Result<TrainedModel> {
    if train.is_empty() {
        return Err(Error::EmptyInput("training set is empty".into()));
    }
    if spec.family == Family::Rnn && train.meta.grid.is_none() {
        return Err(Error::MissingOrderingMetadata);
    }
    let x_raw = pose_matrix(&train.poses());
    let y_raw = cmd_matrix(&train.cmds());
    let in_scaler = Scaler::fit(&x_raw)?;
    let out_scaler = Scaler::fit(&y_raw)?;
    let x = in_scaler.transform(&x_raw)?;
    let y = out_scaler.transform(&y_raw)?;
    let vx = in_scaler.transform(&pose_matrix(&val.poses()))?;
    let vy = out_scaler.transform(&cmd_matrix(&val.cmds()))?;
    let prepared = Prepared {
        spec,
        train,
        val,
        in_scaler,
        out_scaler,
        x,
        y,
        vx,
        vy,
    };
    let mut warnings = Vec::new();
    let start = Instant::now();
    let (state, training_curve) = fit_state(&prepared, &mut warnings)?;
    let fit_seconds = start.elapsed().as_secs_f64().max(1e-9);
    Ok(TrainedModel {
        spec: spec.clone(),
        state,
        in_scaler: prepared.in_scaler,
        out_scaler: prepared.out_scaler,
        fit_seconds,
        training_curve,
        warnings,
    })
}

impl TrainedModel {
    pub fn family(&self) -> Family {
        self.spec.family
    }

    pub fn state(&self) -> &FittedState {
        &self.state
    }

    pub fn input_scaler(&self) -> &Scaler {
        &self.in_scaler
    }

    pub fn output_scaler(&self) -> &Scaler {
        &self.out_scaler
    }

    fn check(poses: &[PoseAngles]) -> Result<()> {
        match poses.iter().position(|p| !p.is_finite()) {
            Some(i) => Err(Error::NonFiniteInput(format!("pose {} is {:?}", i, poses[i]))),
            None => Ok(()),
        }
    }

    fn predict_standardized(&self, poses: &[PoseAngles]) -> Result<Matrix> {
        let x = self.in_scaler.transform(&pose_matrix(poses))?;
        Ok(match &self.state {
            FittedState::Forest(m) => m.predict(&x),
            FittedState::Boosted(m) => m.predict(&x),
            FittedState::Linear(m) => m.predict(&x),
            FittedState::Svr(ms) => {
                let cols: Vec<Vec<f64>> = ms.iter().map(|m| m.predict(&x)).collect();
                columns_to_matrix(&cols, x.rows())
            }
            FittedState::Gpr(ms) => gpr_predict(ms, &x),
            FittedState::Bnn(m) => m.predict(&x),
            FittedState::Rnn(m, _) => m.predict(poses),
        })
    }

    /// Predictions in original units as an `n × 3` matrix.
    pub fn predict_matrix(&self, poses: &[PoseAngles]) -> Result<Matrix> {
        Self::check(poses)?;
        if poses.is_empty() {
            return Ok(Matrix::zeros(0, 3));
        }
        let mut out = self.out_scaler.inverse(&self.predict_standardized(poses)?)?;
        if let FittedState::Rnn(_, true) = self.state {
            for i in 0..out.rows() {
                let row = out.row_mut(i);
                let mean = row.iter().sum::<f64>() / 3.0;
                row.iter_mut().for_each(|v| *v -= mean);
            }
        }
        Ok(out)
    }

    pub fn predict(&self, poses: &[PoseAngles]) -> Result<Vec<TendonDelta>> {
        let m = self.predict_matrix(poses)?;
        Ok((0..m.rows())
            .map(|i| TendonDelta::new(m[(i, 0)], m[(i, 1)], m[(i, 2)]))
            .collect())
    }

    /// Per-output predictive standard deviation in original units, for the
    /// families that provide one (GPR and BNN).
    pub fn predict_std(&self, poses: &[PoseAngles]) -> Result<Option<Matrix>> {
        Self::check(poses)?;
        let x = self.in_scaler.transform(&pose_matrix(poses))?;
        let mut std = match &self.state {
            FittedState::Gpr(ms) => {
                let cols: Vec<Vec<f64>> = ms.iter().map(|m| m.predict_with_std(&x).1).collect();
                columns_to_matrix(&cols, x.rows())
            }
            FittedState::Bnn(m) => m.predict_with_std(&x).1,
            _ => return Ok(None),
        };
        for i in 0..std.rows() {
            std.row_mut(i)
                .iter_mut()
                .zip(self.out_scaler.stds())
                .for_each(|(v, s)| *v *= s);
        }
        Ok(Some(std))
    }
}
