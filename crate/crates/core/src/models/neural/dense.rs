use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngStream};

/// Fully connected net with tanh hidden layers and a linear output layer.
///
/// Parameters live in one flat vector: for each layer the `out × in`
/// weight block (row-major) followed by the `out` biases.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseNet {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

pub fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

/// Glorot-uniform weights, zero biases.
pub fn glorot_init(sizes: &[usize], rng: &mut RngStream) -> Vec<f64> {
    let mut p = Vec::with_capacity(param_count(sizes));
    for w in sizes.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        p.extend((0..fan_in * fan_out).map(|_| limit * (2.0 * rng.next_uniform() - 1.0)));
        p.extend(std::iter::repeat(0.0).take(fan_out));
    }
    p
}

impl DenseNet {
    pub fn new(sizes: &[usize], rng: &mut RngStream) -> Self {
        DenseNet {
            sizes: sizes.to_vec(),
            params: glorot_init(sizes, rng),
        }
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        DenseNet {
            sizes: sizes.to_vec(),
            params: vec![0.0; param_count(sizes)],
        }
    }

    pub fn from_params(sizes: &[usize], params: Vec<f64>) -> Result<Self> {
        if params.len() != param_count(sizes) {
            return Err(Error::DimensionMismatch(format!(
                "net {:?} needs {} parameters, got {}",
                sizes,
                param_count(sizes),
                params.len()
            )));
        }
        Ok(DenseNet {
            sizes: sizes.to_vec(),
            params,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn forward(&self, x: &Matrix) -> Matrix {
        forward_with(&self.sizes, &self.params, x)
    }

    pub fn loss_and_grad(&self, x: &Matrix, y: &Matrix) -> Result<(f64, Vec<f64>)> {
        loss_and_grad_with(&self.sizes, &self.params, x, y)
    }
}

fn affine(sizes_in: usize, sizes_out: usize, params: &[f64], input: &[f64], out: &mut [f64]) {
    let (w, b) = params.split_at(sizes_in * sizes_out);
    for o in 0..sizes_out {
        let row = &w[o * sizes_in..(o + 1) * sizes_in];
        out[o] = b[o] + row.iter().zip(input).map(|(a, c)| a * c).sum::<f64>();
    }
}

/// Activations of every layer for one input row; index 0 is the input.
fn forward_row(sizes: &[usize], params: &[f64], x: &[f64]) -> Vec<Vec<f64>> {
    let mut acts = Vec::with_capacity(sizes.len());
    acts.push(x.to_vec());
    let mut offset = 0;
    let last = sizes.len() - 2;
    for (l, w) in sizes.windows(2).enumerate() {
        let n = w[0] * w[1] + w[1];
        let mut out = vec![0.0; w[1]];
        affine(w[0], w[1], &params[offset..offset + n], &acts[l], &mut out);
        if l < last {
            out.iter_mut().for_each(|v| *v = v.tanh());
        }
        acts.push(out);
        offset += n;
    }
    acts
}

pub fn forward_with(sizes: &[usize], params: &[f64], x: &Matrix) -> Matrix {
    let out_dim = *sizes.last().unwrap();
    let mut out = Matrix::zeros(x.rows(), out_dim);
    for i in 0..x.rows() {
        let acts = forward_row(sizes, params, x.row(i));
        out.row_mut(i).copy_from_slice(acts.last().unwrap());
    }
    out
}

/// Loss `(1/B)·Σ_b ½‖f(x_b) − y_b‖²` and its gradient w.r.t. every parameter.
pub fn loss_and_grad_with(sizes: &[usize], params: &[f64], x: &Matrix, y: &Matrix) -> Result<(f64, Vec<f64>)> {
    if x.rows() != y.rows() {
        return Err(Error::LengthMismatch {
            left: x.rows(),
            right: y.rows(),
        });
    }
    if x.rows() == 0 {
        return Err(Error::EmptyInput("empty batch".into()));
    }
    let b = x.rows() as f64;
    let mut grad = vec![0.0; params.len()];
    let mut loss = 0.0;
    let layers = sizes.len() - 1;
    let offsets: Vec<usize> = sizes
        .windows(2)
        .scan(0, |acc, w| {
            let o = *acc;
            *acc += w[0] * w[1] + w[1];
            Some(o)
        })
        .collect();

    for r in 0..x.rows() {
        let acts = forward_row(sizes, params, x.row(r));
        let out = &acts[layers];
        let mut delta: Vec<f64> = out.iter().zip(y.row(r)).map(|(p, t)| (p - t) / b).collect();
        loss += out
            .iter()
            .zip(y.row(r))
            .map(|(p, t)| 0.5 * (p - t) * (p - t))
            .sum::<f64>()
            / b;
        for l in (0..layers).rev() {
            let (n_in, n_out) = (sizes[l], sizes[l + 1]);
            let off = offsets[l];
            let input = &acts[l];
            for o in 0..n_out {
                let d = delta[o];
                let gw = &mut grad[off + o * n_in..off + (o + 1) * n_in];
                gw.iter_mut().zip(input).for_each(|(g, a)| *g += d * a);
                grad[off + n_in * n_out + o] += d;
            }
            if l > 0 {
                let w = &params[off..off + n_in * n_out];
                let mut prev = vec![0.0; n_in];
                for o in 0..n_out {
                    let d = delta[o];
                    prev.iter_mut()
                        .zip(&w[o * n_in..(o + 1) * n_in])
                        .for_each(|(p, wv)| *p += d * wv);
                }
                prev.iter_mut().zip(input).for_each(|(p, a)| *p *= 1.0 - a * a);
                delta = prev;
            }
        }
    }
    if !loss.is_finite() {
        return Err(Error::FitDiverged(format!("non-finite loss {}", loss)));
    }
    Ok((loss, grad))
}
