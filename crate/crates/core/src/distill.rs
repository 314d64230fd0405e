//! Polynomial transfer functions fitted to a model's predictions.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{generate_grid, GridSpec};
use crate::error::{Error, Result};
use crate::models::TrainedModel;
use crate::numerics::{least_squares, Matrix};
use crate::plant::{analytical_inverse, PoseAngles, TendonDelta};

pub const OUTPUT_NAMES: [&str; 3] = ["L1", "L2", "L3"];
pub const ANALYTICAL_SOURCE: &str = "analytical";

/// Monomials in α and β. Degree 2 uses the order `[1, α, β, α², αβ, β²]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PolyBasis {
    Linear,
    Quadratic,
}

impl PolyBasis {
    pub fn from_degree(degree: u32) -> Result<Self> {
        match degree {
            1 => Ok(PolyBasis::Linear),
            2 => Ok(PolyBasis::Quadratic),
            d => Err(Error::InvalidParameter(format!(
                "polynomial degree {} not in {{1, 2}}",
                d
            ))),
        }
    }

    pub fn degree(self) -> u32 {
        match self {
            PolyBasis::Linear => 1,
            PolyBasis::Quadratic => 2,
        }
    }

    pub fn n_features(self) -> usize {
        match self {
            PolyBasis::Linear => 3,
            PolyBasis::Quadratic => 6,
        }
    }

    /// Term suffixes as they appear in rendered equations.
    pub fn term_names(self) -> &'static [&'static str] {
        &["", "a", "b", "a^2", "a*b", "b^2"][..self.n_features()]
    }
}

pub fn poly_features(pose: PoseAngles, basis: PolyBasis) -> Vec<f64> {
    let (a, b) = (pose.alpha, pose.beta);
    match basis {
        PolyBasis::Linear => vec![1.0, a, b],
        PolyBasis::Quadratic => vec![1.0, a, b, a * a, a * b, b * b],
    }
}

fn design(poses: &[PoseAngles], basis: PolyBasis) -> Matrix {
    let mut phi = Matrix::zeros(poses.len(), basis.n_features());
    for (i, p) in poses.iter().enumerate() {
        phi.row_mut(i).copy_from_slice(&poly_features(*p, basis));
    }
    phi
}

/// Explicit map `T_i(α, β) = Σ_j w_ij·φ_j(α, β)` for the three tendons.
#[derive(Clone, Debug, PartialEq)]
pub struct TransferFunction {
    /// `3 × n_features`, raw angle units.
    weights: Matrix,
    basis: PolyBasis,
    pub source: String,
    pub residual_rms: f64,
    /// Set when the source model's prediction depends on sampled weights or
    /// recurrent context, so the polynomial is a surrogate of that behaviour.
    pub surrogate_of_implicit_model: bool,
}

impl TransferFunction {
    pub fn new(weights: Matrix, basis: PolyBasis, source: impl Into<String>) -> Result<Self> {
        if weights.rows() != 3 || weights.cols() != basis.n_features() {
            return Err(Error::DimensionMismatch(format!(
                "transfer function needs 3×{} coefficients, got {}×{}",
                basis.n_features(),
                weights.rows(),
                weights.cols()
            )));
        }
        if weights.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("transfer function coefficient".into()));
        }
        Ok(TransferFunction {
            weights,
            basis,
            source: source.into(),
            residual_rms: 0.0,
            surrogate_of_implicit_model: false,
        })
    }

    /// Coefficients published for gradient boosting (degree 2).
    pub fn reference_gradient_boosting() -> Self {
        let w = Matrix::from_rows(&[
            [1.0197, 0.1833, -0.0700, -0.0001, 0.0002, -0.0001],
            [-0.4349, -0.0089, 0.2548, 0.0002, -0.0004, -0.0003],
            [-0.5848, -0.1744, -0.1848, -0.0001, 0.0003, 0.0004],
        ])
        .expect("static coefficients");
        TransferFunction::new(w, PolyBasis::Quadratic, "gradient_boosting").expect("static coefficients")
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn basis(&self) -> PolyBasis {
        self.basis
    }

    pub fn coefficients(&self, output: usize) -> &[f64] {
        self.weights.row(output)
    }

    /// `Σ_i w_ij` for every feature `j`.
    pub fn column_sums(&self) -> Vec<f64> {
        (0..self.weights.cols())
            .map(|j| (0..3).map(|i| self.weights[(i, j)]).sum())
            .collect()
    }

    pub fn eval(&self, pose: PoseAngles) -> TendonDelta {
        let phi = poly_features(pose, self.basis);
        let t = |i: usize| self.weights.row(i).iter().zip(&phi).map(|(w, f)| w * f).sum::<f64>();
        TendonDelta::new(t(0), t(1), t(2))
    }
}

pub fn eval_tf(tf: &TransferFunction, pose: PoseAngles) -> TendonDelta {
    tf.eval(pose)
}

/// Default probe grid: −90..90 in steps of 5 on both axes (1369 poses).
pub fn probe_grid() -> Vec<PoseAngles> {
    generate_grid(&GridSpec::new(-90.0, 90.0, 5.0)).expect("static grid")
}

/// Least-squares fit of the basis to `(pose, prediction)` pairs.
pub fn distill_predictions(
    poses: &[PoseAngles],
    predictions: &[TendonDelta],
    basis: PolyBasis,
    source: impl Into<String>,
) -> Result<TransferFunction> {
    if poses.len() != predictions.len() {
        return Err(Error::LengthMismatch {
            left: poses.len(),
            right: predictions.len(),
        });
    }
    if poses.is_empty() {
        return Err(Error::EmptyInput("no probe poses".into()));
    }
    let phi = design(poses, basis);
    let mut y = Matrix::zeros(predictions.len(), 3);
    for (i, p) in predictions.iter().enumerate() {
        y.row_mut(i).copy_from_slice(&p.as_array());
    }
    let w = least_squares(&phi, &y)?.transpose();
    let mut tf = TransferFunction::new(w, basis, source)?;
    let fitted = phi.matmul(&tf.weights.transpose())?;
    let sq: f64 = fitted
        .as_slice()
        .iter()
        .zip(y.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    tf.residual_rms = (sq / y.as_slice().len() as f64).sqrt();
    Ok(tf)
}

pub fn distill_model(model: &TrainedModel, basis: PolyBasis, probe: &[PoseAngles]) -> Result<TransferFunction> {
    let preds = model.predict(probe)?;
    let mut tf = distill_predictions(probe, &preds, basis, model.family().name())?;
    tf.surrogate_of_implicit_model = model.family().is_implicit();
    Ok(tf)
}

pub fn distill_analytical(basis: PolyBasis, probe: &[PoseAngles]) -> Result<TransferFunction> {
    let preds = probe
        .iter()
        .map(|p| analytical_inverse(*p))
        .collect::<Result<Vec<_>>>()?;
    distill_predictions(probe, &preds, basis, ANALYTICAL_SOURCE)
}

fn fmt4(v: f64) -> String {
    let r = (v * 1e4).round() / 1e4;
    // avoid printing "-0.0000"
    let r = if r == 0.0 { 0.0 } else { r };
    format!("{:.4}", r)
}

/// One line per tendon: `L1 = w0 + (w1) a + (w2) b + (w3) a^2 + (w4) a*b + (w5) b^2`.
pub fn render_equations(tf: &TransferFunction) -> String {
    let names = tf.basis.term_names();
    let mut out = String::new();
    for (i, name) in OUTPUT_NAMES.iter().enumerate() {
        let w = tf.coefficients(i);
        out.push_str(name);
        out.push_str(" = ");
        out.push_str(&fmt4(w[0]));
        for (j, term) in names.iter().enumerate().skip(1) {
            out.push_str(&format!(" + ({}) {}", fmt4(w[j]), term));
        }
        out.push('\n');
    }
    out
}

/// Reads back the coefficients of [`render_equations`] output.
pub fn parse_equations(text: &str) -> Result<Matrix> {
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    if lines.len() != 3 {
        return Err(Error::SchemaMismatch(format!(
            "expected 3 equations, got {}",
            lines.len()
        )));
    }
    let mut rows = Vec::with_capacity(3);
    for (line, name) in lines.iter().zip(OUTPUT_NAMES) {
        let rhs = line
            .strip_prefix(name)
            .and_then(|r| r.trim_start().strip_prefix('='))
            .ok_or_else(|| Error::SchemaMismatch(format!("equation should start with `{} =`: {}", name, line)))?;
        let mut parts = rhs.split(" + ");
        let bad = |s: &str| Error::SchemaMismatch(format!("bad coefficient `{}`", s));
        let first = parts.next().unwrap_or("").trim();
        let mut coef = vec![first.parse::<f64>().map_err(|_| bad(first))?];
        for term in parts {
            let inner = term
                .trim()
                .strip_prefix('(')
                .and_then(|t| t.split_once(')'))
                .map(|(v, _)| v)
                .ok_or_else(|| bad(term))?;
            coef.push(inner.parse::<f64>().map_err(|_| bad(inner))?);
        }
        rows.push(coef);
    }
    if rows.iter().any(|r| r.len() != rows[0].len()) || !matches!(rows[0].len(), 3 | 6) {
        return Err(Error::SchemaMismatch("inconsistent term count".into()));
    }
    Matrix::from_rows(&rows)
}

#[derive(Serialize, Deserialize)]
struct OutputJson {
    name: String,
    coefficients: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct TransferJson {
    source: String,
    degree: u32,
    outputs: Vec<OutputJson>,
    residual_rms: f64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    surrogate_of_implicit_model: bool,
}

pub fn to_json(tf: &TransferFunction) -> Result<String> {
    let doc = TransferJson {
        source: tf.source.clone(),
        degree: tf.basis.degree(),
        outputs: OUTPUT_NAMES
            .iter()
            .enumerate()
            .map(|(i, n)| OutputJson {
                name: n.to_string(),
                coefficients: tf.coefficients(i).to_vec(),
            })
            .collect(),
        residual_rms: tf.residual_rms,
        surrogate_of_implicit_model: tf.surrogate_of_implicit_model,
    };
    Ok(serde_json::to_string_pretty(&doc)? + "\n")
}

pub fn from_json(text: &str) -> Result<TransferFunction> {
    let doc: TransferJson = serde_json::from_str(text)?;
    let basis = PolyBasis::from_degree(doc.degree)?;
    if doc.outputs.len() != 3 {
        return Err(Error::SchemaMismatch(format!(
            "expected 3 outputs, got {}",
            doc.outputs.len()
        )));
    }
    let rows: Vec<Vec<f64>> = doc.outputs.into_iter().map(|o| o.coefficients).collect();
    if rows.iter().any(|r| r.len() != basis.n_features()) {
        return Err(Error::SchemaMismatch(format!(
            "degree {} needs {} coefficients per output",
            basis.degree(),
            basis.n_features()
        )));
    }
    let mut tf = TransferFunction::new(Matrix::from_rows(&rows)?, basis, doc.source)?;
    tf.residual_rms = doc.residual_rms;
    tf.surrogate_of_implicit_model = doc.surrogate_of_implicit_model;
    Ok(tf)
}

/// Writes `<stem>.json` and the rendered `<stem>.txt`.
pub fn write_transfer_function(tf: &TransferFunction, json_path: &Path) -> Result<()> {
    if let Some(dir) = json_path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(json_path, to_json(tf)?).map_err(|e| Error::io(json_path, e))?;
    let txt = json_path.with_extension("txt");
    fs::write(&txt, render_equations(tf)).map_err(|e| Error::io(&txt, e))?;
    Ok(())
}

pub fn read_transfer_function(path: &Path) -> Result<TransferFunction> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_json(&text)
}
