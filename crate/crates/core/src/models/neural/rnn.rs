use std::collections::BTreeMap;

use super::adam::cosine_lr;
use super::dense::glorot_init;
use super::{destandardized_mae, Adam, CurvePoint, TrainingCurve};
use crate::dataset::{Dataset, GridSpec};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngStream, Scaler};
use crate::plant::PoseAngles;

#[derive(Clone, Debug, PartialEq)]
pub struct RnnConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub lr: f64,
    /// Learning rate reached at the last epoch under cosine decay.
    pub lr_final: f64,
    pub bptt_len: usize,
    /// Sequences per optimizer step.
    pub batch_sequences: usize,
}

impl Default for RnnConfig {
    fn default() -> Self {
        RnnConfig {
            hidden: 32,
            epochs: 100,
            lr: 1e-2,
            lr_final: 1e-4,
            bptt_len: 19,
            batch_sequences: 1,
        }
    }
}

/// One β-ascending run at fixed α; rows are time steps.
#[derive(Clone, Debug, PartialEq)]
pub struct Sequence {
    pub xs: Matrix,
    pub ys: Matrix,
}

/// Layer sizes of an Elman cell: input, hidden, output.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RnnDims {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
}

impl RnnDims {
    pub fn param_count(&self) -> usize {
        let (i, h, o) = (self.input, self.hidden, self.output);
        h * i + h * h + h + o * h + o
    }

    // Offsets of Wx, Wh, bh, Wo, bo in the flat parameter vector.
    fn offsets(&self) -> [usize; 5] {
        let (i, h, o) = (self.input, self.hidden, self.output);
        let wx = 0;
        let wh = wx + h * i;
        let bh = wh + h * h;
        let wo = bh + h;
        let bo = wo + o * h;
        debug_assert_eq!(bo + o, self.param_count());
        [wx, wh, bh, wo, bo]
    }
}

/// Hidden states (`T + 1` rows, row 0 is the zero start state) and outputs.
pub fn forward_sequence(dims: RnnDims, params: &[f64], xs: &Matrix) -> (Matrix, Matrix) {
    let (ni, nh, no) = (dims.input, dims.hidden, dims.output);
    let [wx, wh, bh, wo, bo] = dims.offsets();
    let t_len = xs.rows();
    let mut hs = Matrix::zeros(t_len + 1, nh);
    let mut out = Matrix::zeros(t_len, no);
    let mut z = vec![0.0; nh];
    for t in 0..t_len {
        let x = xs.row(t);
        let prev = hs.row(t).to_vec();
        for j in 0..nh {
            let mut acc = params[bh + j];
            let rx = &params[wx + j * ni..wx + (j + 1) * ni];
            acc += rx.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            let rh = &params[wh + j * nh..wh + (j + 1) * nh];
            acc += rh.iter().zip(&prev).map(|(a, b)| a * b).sum::<f64>();
            z[j] = acc.tanh();
        }
        hs.row_mut(t + 1).copy_from_slice(&z);
        for k in 0..no {
            let ro = &params[wo + k * nh..wo + (k + 1) * nh];
            out[(t, k)] = params[bo + k] + ro.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    (hs, out)
}

/// Mean over sequences of `(1/T)·Σ_t ½‖ŷ_t − y_t‖²` and its gradient by
/// backpropagation through time. Gradients do not cross chunk boundaries
/// of `bptt_len` steps; the hidden state value does.
pub fn rnn_loss_and_grad(
    dims: RnnDims,
    params: &[f64],
    seqs: &[&Sequence],
    bptt_len: usize,
) -> Result<(f64, Vec<f64>)> {
    if seqs.is_empty() {
        return Err(Error::EmptyInput("no sequences".into()));
    }
    if bptt_len == 0 {
        return Err(Error::InvalidParameter("bptt_len must be >= 1".into()));
    }
    let (ni, nh, no) = (dims.input, dims.hidden, dims.output);
    let [wx, wh, bh, wo, bo] = dims.offsets();
    let mut grad = vec![0.0; params.len()];
    let mut loss = 0.0;
    let n_seq = seqs.len() as f64;
    let mut dh = vec![0.0; nh];
    let mut dz = vec![0.0; nh];
    let mut dh_next = vec![0.0; nh];
    for seq in seqs {
        let t_len = seq.xs.rows();
        if t_len == 0 {
            continue;
        }
        let (hs, out) = forward_sequence(dims, params, &seq.xs);
        let scale = 1.0 / (t_len as f64 * n_seq);
        for t in 0..t_len {
            loss += out
                .row(t)
                .iter()
                .zip(seq.ys.row(t))
                .map(|(p, y)| 0.5 * (p - y) * (p - y))
                .sum::<f64>()
                * scale;
        }
        let starts: Vec<usize> = (0..t_len).step_by(bptt_len).collect();
        for &start in starts.iter().rev() {
            let end = (start + bptt_len).min(t_len);
            dh_next.iter_mut().for_each(|v| *v = 0.0);
            for t in (start..end).rev() {
                let h = hs.row(t + 1);
                let h_prev = hs.row(t);
                dh.copy_from_slice(&dh_next);
                for k in 0..no {
                    let dy = (out[(t, k)] - seq.ys[(t, k)]) * scale;
                    grad[bo + k] += dy;
                    for j in 0..nh {
                        grad[wo + k * nh + j] += dy * h[j];
                        dh[j] += params[wo + k * nh + j] * dy;
                    }
                }
                for j in 0..nh {
                    dz[j] = dh[j] * (1.0 - h[j] * h[j]);
                    grad[bh + j] += dz[j];
                    let x = seq.xs.row(t);
                    for i in 0..ni {
                        grad[wx + j * ni + i] += dz[j] * x[i];
                    }
                    for i in 0..nh {
                        grad[wh + j * nh + i] += dz[j] * h_prev[i];
                    }
                }
                for i in 0..nh {
                    dh_next[i] = (0..nh).map(|j| params[wh + j * nh + i] * dz[j]).sum();
                }
            }
        }
    }
    if !loss.is_finite() {
        return Err(Error::FitDiverged(format!("rnn loss {}", loss)));
    }
    Ok((loss, grad))
}

/// Groups rows into constant-α sequences (one per grid α and replicate),
/// ordered by β, with standardized inputs and targets.
pub fn build_sequences(ds: &Dataset, in_scaler: &Scaler, out_scaler: &Scaler) -> Result<Vec<Sequence>> {
    let grid = ds.meta.grid.ok_or(Error::MissingOrderingMetadata)?;
    let mut groups: BTreeMap<(usize, u32), Vec<usize>> = BTreeMap::new();
    for (i, s) in ds.samples.iter().enumerate() {
        groups
            .entry((grid.nearest_index(s.pose.alpha), s.replicate))
            .or_default()
            .push(i);
    }
    let mut seqs = Vec::with_capacity(groups.len());
    for (_, mut rows) in groups {
        rows.sort_by(|&a, &b| {
            ds.samples[a]
                .pose
                .beta
                .total_cmp(&ds.samples[b].pose.beta)
                .then(a.cmp(&b))
        });
        let mut xs = Matrix::zeros(rows.len(), 2);
        let mut ys = Matrix::zeros(rows.len(), 3);
        for (t, &r) in rows.iter().enumerate() {
            let s = &ds.samples[r];
            xs.row_mut(t).copy_from_slice(&s.pose.as_array());
            in_scaler.transform_row(xs.row_mut(t));
            ys.row_mut(t).copy_from_slice(&s.cmd.as_array());
            out_scaler.transform_row(ys.row_mut(t));
        }
        seqs.push(Sequence { xs, ys });
    }
    Ok(seqs)
}

#[derive(Clone, Debug)]
pub struct RnnModel {
    dims: RnnDims,
    params: Vec<f64>,
    in_scaler: Scaler,
    grid: GridSpec,
}

impl RnnModel {
    pub fn from_parts(dims: RnnDims, params: Vec<f64>, in_scaler: Scaler, grid: GridSpec) -> Result<Self> {
        if params.len() != dims.param_count() {
            return Err(Error::DimensionMismatch(format!(
                "rnn needs {} parameters, got {}",
                dims.param_count(),
                params.len()
            )));
        }
        Ok(RnnModel {
            dims,
            params,
            in_scaler,
            grid,
        })
    }

    pub fn dims(&self) -> RnnDims {
        self.dims
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    /// The input sequence fed for `pose`: the grid β values below `pose.beta`
    /// at the same α, ascending, followed by the pose itself.
    pub fn context(&self, pose: PoseAngles) -> Vec<PoseAngles> {
        let mut steps: Vec<PoseAngles> = self
            .grid
            .axis_values()
            .unwrap_or_default()
            .into_iter()
            .filter(|b| *b < pose.beta - 1e-9)
            .map(|b| PoseAngles::new(pose.alpha, b))
            .collect();
        steps.push(pose);
        steps
    }

    /// Standardized outputs of the last step of each pose's context.
    pub fn predict(&self, poses: &[PoseAngles]) -> Matrix {
        let mut out = Matrix::zeros(poses.len(), self.dims.output);
        for (r, &p) in poses.iter().enumerate() {
            let ctx = self.context(p);
            let mut xs = Matrix::zeros(ctx.len(), 2);
            for (t, c) in ctx.iter().enumerate() {
                xs.row_mut(t).copy_from_slice(&c.as_array());
                self.in_scaler.transform_row(xs.row_mut(t));
            }
            let (_, ys) = forward_sequence(self.dims, &self.params, &xs);
            out.row_mut(r).copy_from_slice(ys.row(ctx.len() - 1));
        }
        out
    }
}

fn standardized_targets(ds: &Dataset, out_scaler: &Scaler) -> Matrix {
    let mut y = Matrix::zeros(ds.len(), 3);
    for (i, s) in ds.samples.iter().enumerate() {
        y.row_mut(i).copy_from_slice(&s.cmd.as_array());
        out_scaler.transform_row(y.row_mut(i));
    }
    y
}

pub fn fit_rnn(
    train: &Dataset,
    val: &Dataset,
    in_scaler: &Scaler,
    out_scaler: &Scaler,
    cfg: &RnnConfig,
    seed: u64,
) -> Result<(RnnModel, TrainingCurve)> {
    if train.is_empty() {
        return Err(Error::EmptyInput("rnn needs training rows".into()));
    }
    if cfg.hidden == 0 || cfg.batch_sequences == 0 || cfg.bptt_len == 0 || !(cfg.lr > 0.0) {
        return Err(Error::InvalidParameter(
            "rnn hidden, batch_sequences, bptt_len and lr must be positive".into(),
        ));
    }
    let grid = train.meta.grid.ok_or(Error::MissingOrderingMetadata)?;
    let seqs = build_sequences(train, in_scaler, out_scaler)?;
    let dims = RnnDims {
        input: 2,
        hidden: cfg.hidden,
        output: 3,
    };
    let [_, wh, bh, _, _] = dims.offsets();

    let mut init_rng = RngStream::derive(seed, "rnn.init", 0);
    let input_part = glorot_init(&[dims.input, dims.hidden], &mut init_rng);
    let recurrent = glorot_init(&[dims.hidden, dims.hidden], &mut init_rng);
    let output_part = glorot_init(&[dims.hidden, dims.output], &mut init_rng);
    let mut params = Vec::with_capacity(dims.param_count());
    params.extend_from_slice(&input_part[..wh]);
    params.extend(recurrent[..dims.hidden * dims.hidden].iter().map(|v| 0.5 * v));
    params.extend(std::iter::repeat(0.0).take(dims.hidden));
    params.extend_from_slice(&output_part);
    debug_assert_eq!(params.len(), dims.param_count());
    debug_assert_eq!(params[bh], 0.0);

    let mut model = RnnModel::from_parts(dims, params, in_scaler.clone(), grid)?;
    let train_poses = train.poses();
    let val_poses = val.poses();
    let train_y = standardized_targets(train, out_scaler);
    let val_y = standardized_targets(val, out_scaler);
    let mut opt = Adam::new(dims.param_count(), cfg.lr);
    let mut shuffle_rng = RngStream::derive(seed, "rnn.shuffle", 0);
    let mut order: Vec<usize> = (0..seqs.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        opt.set_lr(cosine_lr(cfg.lr, cfg.lr_final, epoch, cfg.epochs));
        shuffle_rng.shuffle(&mut order);
        for chunk in order.chunks(cfg.batch_sequences) {
            let batch: Vec<&Sequence> = chunk.iter().map(|&i| &seqs[i]).collect();
            let (_, grad) = rnn_loss_and_grad(dims, &model.params, &batch, cfg.bptt_len)?;
            opt.step(&mut model.params, &grad);
        }
        let train_mae = destandardized_mae(&model.predict(&train_poses), &train_y, out_scaler.stds());
        let val_mae = if val.is_empty() {
            f64::NAN
        } else {
            destandardized_mae(&model.predict(&val_poses), &val_y, out_scaler.stds())
        };
        if !train_mae.is_finite() {
            return Err(Error::FitDiverged(format!(
                "rnn train MAE {} at epoch {}",
                train_mae, epoch
            )));
        }
        curve.push(CurvePoint {
            epoch,
            train_mae,
            val_mae,
        });
    }
    Ok((model, curve))
}
