//! Error metrics, the benchmark table, learning-curve export and closed-loop
//! validation of controllers on the plant.

mod svg;

use std::fs;
use std::path::{Path, PathBuf};

use crate::dataset::{alternating_sweep, generate_grid, Dataset, DatasetMeta, GridSpec};
use crate::distill::TransferFunction;
use crate::error::{Error, Result};
use crate::models::neural::TrainingCurve;
use crate::models::{fit, RegressorSpec, TrainedModel};
use crate::plant::{analytical_inverse, plant_forward, PlantParams, PoseAngles, TendonDelta};

pub use svg::{curve_svg, overlay_svg, pred_vs_actual_svg};

pub const REPORT_HEADER: &str = "model,mse,mae,fit_seconds,mse_l1,mse_l2,mse_l3,mae_l1,mae_l2,mae_l3";
pub const DEVIATION_HEADER: &str = "target_alpha,target_beta,achieved_alpha,achieved_beta,dev_alpha,dev_beta";
pub const CURVE_HEADER: &str = "epoch,train_mae,val_mae";
/// Fits faster than this are repeated and the median time reported.
pub const TIMING_REPEAT_THRESHOLD: f64 = 0.1;

fn check_pair(pred: &[TendonDelta], actual: &[TendonDelta]) -> Result<()> {
    if pred.len() != actual.len() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: actual.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::EmptyInput("no predictions to score".into()));
    }
    Ok(())
}

/// Squared and absolute errors, overall and per tendon.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorSummary {
    pub mse: f64,
    pub mae: f64,
    pub mse_per_output: [f64; 3],
    pub mae_per_output: [f64; 3],
}

pub fn error_summary(pred: &[TendonDelta], actual: &[TendonDelta]) -> Result<ErrorSummary> {
    check_pair(pred, actual)?;
    let mut sq = [0.0; 3];
    let mut ab = [0.0; 3];
    for (p, a) in pred.iter().zip(actual) {
        let (p, a) = (p.as_array(), a.as_array());
        for k in 0..3 {
            let e = p[k] - a[k];
            sq[k] += e * e;
            ab[k] += e.abs();
        }
    }
    let n = pred.len() as f64;
    Ok(ErrorSummary {
        mse: sq.iter().sum::<f64>() / (3.0 * n),
        mae: ab.iter().sum::<f64>() / (3.0 * n),
        mse_per_output: sq.map(|v| v / n),
        mae_per_output: ab.map(|v| v / n),
    })
}

pub fn mse(pred: &[TendonDelta], actual: &[TendonDelta]) -> Result<f64> {
    Ok(error_summary(pred, actual)?.mse)
}

pub fn mae(pred: &[TendonDelta], actual: &[TendonDelta]) -> Result<f64> {
    Ok(error_summary(pred, actual)?.mae)
}

/// MAE on `val` of the predictor that always returns the training mean.
pub fn constant_mean_mae(train: &Dataset, val: &Dataset) -> Result<f64> {
    if train.is_empty() {
        return Err(Error::EmptyInput("training set is empty".into()));
    }
    let mut mean = [0.0; 3];
    for c in train.cmds() {
        for (m, v) in mean.iter_mut().zip(c.as_array()) {
            *m += v / train.len() as f64;
        }
    }
    let pred = vec![TendonDelta::from_array(mean); val.len()];
    mae(&pred, &val.cmds())
}

#[derive(Clone, Debug)]
pub struct ModelRow {
    pub model: String,
    /// `None` when the fit or evaluation failed.
    pub metrics: Option<ErrorSummary>,
    pub fit_seconds: f64,
    pub error: Option<String>,
}

#[derive(Clone, Debug)]
pub struct EvalReport {
    pub rows: Vec<ModelRow>,
    pub dataset: DatasetMeta,
}

impl EvalReport {
    /// Row with the lowest validation MAE; ties go to the faster fit.
    pub fn best_index(&self) -> Option<usize> {
        let mut best: Option<(usize, f64, f64)> = None;
        for (i, r) in self.rows.iter().enumerate() {
            let Some(m) = r.metrics else { continue };
            if !m.mae.is_finite() {
                continue;
            }
            let better = match best {
                None => true,
                Some((_, mae, secs)) => m.mae < mae || (m.mae == mae && r.fit_seconds < secs),
            };
            if better {
                best = Some((i, m.mae, r.fit_seconds));
            }
        }
        best.map(|(i, _, _)| i)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(REPORT_HEADER);
        out.push('\n');
        for r in &self.rows {
            match r.metrics {
                Some(m) => out.push_str(&format!(
                    "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
                    r.model,
                    m.mse,
                    m.mae,
                    r.fit_seconds,
                    m.mse_per_output[0],
                    m.mse_per_output[1],
                    m.mse_per_output[2],
                    m.mae_per_output[0],
                    m.mae_per_output[1],
                    m.mae_per_output[2]
                )),
                None => out.push_str(&format!("{},,,,,,,,,\n", r.model)),
            }
        }
        out
    }
}

pub struct BenchmarkOutcome {
    pub report: EvalReport,
    /// Fitted models in spec order; `None` where the row failed.
    pub models: Vec<Option<TrainedModel>>,
}

fn fit_and_score(spec: &RegressorSpec, train: &Dataset, val: &Dataset) -> Result<(TrainedModel, ErrorSummary, f64)> {
    let model = fit(spec, train, val)?;
    let mut secs = model.fit_seconds;
    if secs < TIMING_REPEAT_THRESHOLD {
        let mut times = vec![secs];
        for _ in 0..2 {
            times.push(fit(spec, train, val)?.fit_seconds);
        }
        times.sort_by(f64::total_cmp);
        secs = times[1];
    }
    let pred = model.predict(&val.poses())?;
    let summary = error_summary(&pred, &val.cmds())?;
    Ok((model, summary, secs))
}

/// Fits every spec on `train` and scores it on `val`. A failing spec becomes
/// an error row; the others still run.
pub fn run_benchmark(specs: &[RegressorSpec], train: &Dataset, val: &Dataset) -> Result<BenchmarkOutcome> {
    if specs.is_empty() {
        return Err(Error::EmptyInput("no models to benchmark".into()));
    }
    if val.is_empty() {
        return Err(Error::EmptyInput("benchmark needs a validation set".into()));
    }
    let mut rows = Vec::with_capacity(specs.len());
    let mut models = Vec::with_capacity(specs.len());
    for spec in specs {
        let name = spec.family.name().to_string();
        match fit_and_score(spec, train, val) {
            Ok((model, summary, secs)) => {
                rows.push(ModelRow {
                    model: name,
                    metrics: Some(summary),
                    fit_seconds: secs,
                    error: None,
                });
                models.push(Some(model));
            }
            Err(e) => {
                rows.push(ModelRow {
                    model: name,
                    metrics: None,
                    fit_seconds: f64::NAN,
                    error: Some(e.to_string()),
                });
                models.push(None);
            }
        }
    }
    Ok(BenchmarkOutcome {
        report: EvalReport {
            rows,
            dataset: train.meta.clone(),
        },
        models,
    })
}

/// Feedforward controller mapping a target pose to a tendon command.
#[derive(Clone, Debug)]
pub enum Controller {
    Analytical,
    Transfer(TransferFunction),
}

impl Controller {
    pub fn name(&self) -> &str {
        match self {
            Controller::Analytical => "analytical",
            Controller::Transfer(tf) => &tf.source,
        }
    }

    pub fn command(&self, target: PoseAngles) -> Result<TendonDelta> {
        match self {
            Controller::Analytical => analytical_inverse(target),
            Controller::Transfer(tf) => Ok(tf.eval(target)),
        }
    }
}

/// Target sequence for closed-loop validation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepProtocol {
    /// α sweep at β = 0, then β sweep at α = 0.
    Alternating,
    /// Full Cartesian grid.
    Grid,
}

impl SweepProtocol {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "alternating" => Ok(SweepProtocol::Alternating),
            "grid" => Ok(SweepProtocol::Grid),
            other => Err(Error::InvalidParameter(format!(
                "unknown sweep protocol `{}` (alternating|grid)",
                other
            ))),
        }
    }

    pub fn targets(self, spec: &GridSpec) -> Result<Vec<PoseAngles>> {
        match self {
            SweepProtocol::Alternating => alternating_sweep(spec),
            SweepProtocol::Grid => generate_grid(spec),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeviationRow {
    pub target: PoseAngles,
    pub achieved: PoseAngles,
    /// Achieved minus target, `[α, β]`.
    pub deviation: [f64; 2],
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeviationReport {
    pub controller: String,
    pub rows: Vec<DeviationRow>,
    pub mean_abs: [f64; 2],
    pub max_abs: [f64; 2],
}

impl DeviationReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(DEVIATION_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
                r.target.alpha, r.target.beta, r.achieved.alpha, r.achieved.beta, r.deviation[0], r.deviation[1]
            ));
        }
        out
    }
}

/// Drives the noise-free plant with `controller(target)` for every target.
pub fn validate_controller(
    controller: &Controller,
    params: &PlantParams,
    targets: &[PoseAngles],
) -> Result<DeviationReport> {
    if targets.is_empty() {
        return Err(Error::EmptyInput("no validation targets".into()));
    }
    let plant = params.noise_free();
    let mut rows = Vec::with_capacity(targets.len());
    let mut mean_abs = [0.0; 2];
    let mut max_abs = [0.0f64; 2];
    for &target in targets {
        let cmd = controller.command(target)?;
        let achieved = plant_forward(cmd, &plant, None);
        let deviation = [achieved.alpha - target.alpha, achieved.beta - target.beta];
        if !deviation.iter().all(|d| d.is_finite()) {
            return Err(Error::NonFiniteInput(format!("deviation at target {:?}", target)));
        }
        for k in 0..2 {
            mean_abs[k] += deviation[k].abs() / targets.len() as f64;
            max_abs[k] = max_abs[k].max(deviation[k].abs());
        }
        rows.push(DeviationRow {
            target,
            achieved,
            deviation,
        });
    }
    Ok(DeviationReport {
        controller: controller.name().to_string(),
        rows,
        mean_abs,
        max_abs,
    })
}

fn fmt_opt(v: f64) -> String {
    if v.is_finite() {
        format!("{:.6}", v)
    } else {
        String::new()
    }
}

pub fn curve_csv(curve: &TrainingCurve) -> String {
    let mut out = String::from(CURVE_HEADER);
    out.push('\n');
    for p in curve {
        out.push_str(&format!(
            "{},{},{}\n",
            p.epoch,
            fmt_opt(p.train_mae),
            fmt_opt(p.val_mae)
        ));
    }
    out
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes `<model>_curve.csv` and `<model>_curve.svg` into `dir` for each
/// named curve and returns the paths written.
pub fn export_curves(curves: &[(String, TrainingCurve)], dir: &Path) -> Result<Vec<PathBuf>> {
    if curves.is_empty() || curves.iter().any(|(_, c)| c.is_empty()) {
        return Err(Error::EmptyInput("no training curves to export".into()));
    }
    let mut written = Vec::with_capacity(2 * curves.len());
    for (name, curve) in curves {
        let csv = dir.join(format!("{}_curve.csv", name));
        write_file(&csv, &curve_csv(curve))?;
        let svg = dir.join(format!("{}_curve.svg", name));
        write_file(&svg, &curve_svg(name, curve))?;
        written.push(csv);
        written.push(svg);
    }
    Ok(written)
}

pub fn write_text(path: &Path, contents: &str) -> Result<()> {
    write_file(path, contents)
}
