//! CART regression trees with vector leaves, bootstrap forests and
//! squared-loss gradient boosting.
//!
//! All trees split on the total variance reduction summed over the output
//! columns, so one tree serves every tendon. Leaf values are plain target
//! means, which keeps predictions on sum-zero targets sum-zero.

use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngStream};

#[derive(Clone, Debug, PartialEq)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: Vec<f64>,
        samples: usize,
    },
}

#[derive(Clone, Debug)]
pub struct RegressionTree {
    nodes: Vec<Node>,
    max_depth: usize,
    min_samples_leaf: usize,
    outputs: usize,
}

/// A chosen split: feature, threshold and the SSE it removes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitChoice {
    pub feature: usize,
    pub threshold: f64,
    pub reduction: f64,
}

impl RegressionTree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    pub fn min_samples_leaf(&self) -> usize {
        self.min_samples_leaf
    }

    pub fn root_split(&self) -> Option<SplitChoice> {
        match self.nodes.first()? {
            Node::Split { feature, threshold, .. } => Some(SplitChoice {
                feature: *feature,
                threshold: *threshold,
                reduction: f64::NAN,
            }),
            Node::Leaf { .. } => None,
        }
    }

    /// Index of the leaf that `x` falls into.
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
                Node::Leaf { .. } => return i,
            }
        }
    }

    pub fn predict_row(&self, x: &[f64]) -> &[f64] {
        match &self.nodes[self.leaf_index(x)] {
            Node::Leaf { value, .. } => value,
            Node::Split { .. } => unreachable!("leaf_index returns leaves"),
        }
    }

    pub fn predict(&self, x: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(x.rows(), self.outputs);
        for i in 0..x.rows() {
            out.row_mut(i).copy_from_slice(self.predict_row(x.row(i)));
        }
        out
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

struct TreeBuilder<'a> {
    x: &'a Matrix,
    y: &'a Matrix,
    max_depth: usize,
    min_leaf: usize,
    nodes: Vec<Node>,
}

fn mean_rows(y: &Matrix, idx: &[usize]) -> Vec<f64> {
    let mut m = vec![0.0; y.cols()];
    for &i in idx {
        m.iter_mut().zip(y.row(i)).for_each(|(a, b)| *a += b);
    }
    let n = idx.len() as f64;
    m.iter_mut().for_each(|v| *v /= n);
    m
}

fn constant_targets(y: &Matrix, idx: &[usize]) -> bool {
    let first = y.row(idx[0]);
    idx.iter().all(|&i| y.row(i) == first)
}

/// Best split of the rows `idx` by total SSE reduction. Candidates are
/// midpoints of consecutive distinct feature values; ties keep the lower
/// feature index, then the lower threshold.
pub fn best_split(x: &Matrix, y: &Matrix, idx: &[usize], min_leaf: usize) -> Option<SplitChoice> {
    let n = idx.len();
    let k = y.cols();
    if n < 2 * min_leaf.max(1) {
        return None;
    }
    let mut total_sum = vec![0.0; k];
    let mut total_sq = 0.0;
    for &i in idx {
        for (s, v) in total_sum.iter_mut().zip(y.row(i)) {
            *s += v;
        }
        total_sq += y.row(i).iter().map(|v| v * v).sum::<f64>();
    }
    let parent_sse = total_sq - total_sum.iter().map(|s| s * s).sum::<f64>() / n as f64;

    let mut best: Option<SplitChoice> = None;
    let mut order = idx.to_vec();
    let mut left_sum = vec![0.0; k];
    for f in 0..x.cols() {
        order.sort_by(|&a, &b| x[(a, f)].total_cmp(&x[(b, f)]).then(a.cmp(&b)));
        left_sum.iter_mut().for_each(|v| *v = 0.0);
        for pos in 0..n - 1 {
            let row = order[pos];
            for (s, v) in left_sum.iter_mut().zip(y.row(row)) {
                *s += v;
            }
            let nl = pos + 1;
            let nr = n - nl;
            let (lo, hi) = (x[(row, f)], x[(order[pos + 1], f)]);
            if lo == hi || nl < min_leaf || nr < min_leaf {
                continue;
            }
            let mut sl = 0.0;
            let mut sr = 0.0;
            for (l, t) in left_sum.iter().zip(&total_sum) {
                sl += l * l;
                sr += (t - l) * (t - l);
            }
            let child_sse = total_sq - sl / nl as f64 - sr / nr as f64;
            let reduction = parent_sse - child_sse;
            if best.map_or(true, |b| reduction > b.reduction) {
                best = Some(SplitChoice {
                    feature: f,
                    threshold: 0.5 * (lo + hi),
                    reduction,
                });
            }
        }
    }
    best.filter(|b| b.reduction > 0.0)
}

impl TreeBuilder<'_> {
    fn grow(&mut self, idx: &mut Vec<usize>, depth: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf {
            value: Vec::new(),
            samples: 0,
        });
        let split = if depth >= self.max_depth || constant_targets(self.y, idx) {
            None
        } else {
            best_split(self.x, self.y, idx, self.min_leaf)
        };
        match split {
            None => {
                self.nodes[id] = Node::Leaf {
                    value: mean_rows(self.y, idx),
                    samples: idx.len(),
                };
            }
            Some(s) => {
                let (mut l, mut r): (Vec<usize>, Vec<usize>) =
                    idx.iter().partition(|&&i| self.x[(i, s.feature)] <= s.threshold);
                let left = self.grow(&mut l, depth + 1);
                let right = self.grow(&mut r, depth + 1);
                self.nodes[id] = Node::Split {
                    feature: s.feature,
                    threshold: s.threshold,
                    left,
                    right,
                };
            }
        }
        id
    }
}

/// Fits a tree on the rows listed in `idx` (duplicates allowed).
pub fn fit_tree_on(
    x: &Matrix,
    y: &Matrix,
    idx: &[usize],
    max_depth: usize,
    min_samples_leaf: usize,
) -> Result<RegressionTree> {
    if idx.is_empty() {
        return Err(Error::EmptyInput("tree needs at least one sample".into()));
    }
    if x.rows() != y.rows() {
        return Err(Error::LengthMismatch {
            left: x.rows(),
            right: y.rows(),
        });
    }
    let mut b = TreeBuilder {
        x,
        y,
        max_depth,
        min_leaf: min_samples_leaf.max(1),
        nodes: Vec::new(),
    };
    let mut idx = idx.to_vec();
    b.grow(&mut idx, 0);
    Ok(RegressionTree {
        nodes: b.nodes,
        max_depth,
        min_samples_leaf: min_samples_leaf.max(1),
        outputs: y.cols(),
    })
}

pub fn fit_tree(x: &Matrix, y: &Matrix, max_depth: usize, min_samples_leaf: usize) -> Result<RegressionTree> {
    let idx: Vec<usize> = (0..x.rows()).collect();
    fit_tree_on(x, y, &idx, max_depth, min_samples_leaf)
}

#[derive(Clone, Debug)]
pub struct ForestModel {
    trees: Vec<RegressionTree>,
    /// Stream id used for each tree's bootstrap draw.
    pub bootstrap_streams: Vec<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Resample {
    Bootstrap,
    /// Every tree sees the training set as-is.
    Identity,
}

impl ForestModel {
    pub fn trees(&self) -> &[RegressionTree] {
        &self.trees
    }

    pub fn predict(&self, x: &Matrix) -> Matrix {
        let k = self.trees[0].outputs;
        let mut out = Matrix::zeros(x.rows(), k);
        for i in 0..x.rows() {
            let row = out.row_mut(i);
            for t in &self.trees {
                row.iter_mut().zip(t.predict_row(x.row(i))).for_each(|(a, b)| *a += b);
            }
            let m = self.trees.len() as f64;
            row.iter_mut().for_each(|v| *v /= m);
        }
        out
    }
}

pub fn fit_forest(
    x: &Matrix,
    y: &Matrix,
    n_trees: usize,
    max_depth: usize,
    min_samples_leaf: usize,
    seed: u64,
    resample: Resample,
) -> Result<ForestModel> {
    if n_trees == 0 {
        return Err(Error::InvalidParameter("n_trees must be >= 1".into()));
    }
    let n = x.rows();
    let mut trees = Vec::with_capacity(n_trees);
    let mut streams = Vec::with_capacity(n_trees);
    for t in 0..n_trees {
        let mut rng = RngStream::derive(seed, "forest.bootstrap", t as u64);
        streams.push(rng.stream_id());
        let idx: Vec<usize> = match resample {
            Resample::Bootstrap => (0..n).map(|_| rng.next_index(n)).collect(),
            Resample::Identity => (0..n).collect(),
        };
        trees.push(fit_tree_on(x, y, &idx, max_depth, min_samples_leaf)?);
    }
    Ok(ForestModel {
        trees,
        bootstrap_streams: streams,
    })
}

#[derive(Clone, Debug)]
pub struct BoostedModel {
    init: Vec<f64>,
    stages: Vec<RegressionTree>,
    learning_rate: f64,
    /// Training MSE before any stage, then after each stage.
    pub train_mse: Vec<f64>,
}

impl BoostedModel {
    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn n_stages(&self) -> usize {
        self.stages.len()
    }

    pub fn init(&self) -> &[f64] {
        &self.init
    }

    pub fn predict(&self, x: &Matrix) -> Matrix {
        let k = self.init.len();
        let mut out = Matrix::zeros(x.rows(), k);
        for i in 0..x.rows() {
            let row = out.row_mut(i);
            row.copy_from_slice(&self.init);
            for t in &self.stages {
                row.iter_mut()
                    .zip(t.predict_row(x.row(i)))
                    .for_each(|(a, b)| *a += self.learning_rate * b);
            }
        }
        out
    }
}

fn mse(a: &Matrix, b: &Matrix) -> f64 {
    let n = a.as_slice().len() as f64;
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(p, q)| (p - q).powi(2))
        .sum::<f64>()
        / n
}

/// Squared-loss boosting: start from the column means, then each stage fits
/// a tree to the current residuals and adds `learning_rate·tree`.
pub fn fit_boosted(
    x: &Matrix,
    y: &Matrix,
    n_stages: usize,
    learning_rate: f64,
    max_depth: usize,
    min_samples_leaf: usize,
) -> Result<BoostedModel> {
    if n_stages == 0 {
        return Err(Error::InvalidParameter("n_stages must be >= 1".into()));
    }
    if !(0.0..=1.0).contains(&learning_rate) {
        return Err(Error::InvalidParameter(format!(
            "learning_rate {} outside [0, 1]",
            learning_rate
        )));
    }
    if x.rows() == 0 {
        return Err(Error::EmptyInput("boosting needs at least one sample".into()));
    }
    let n = x.rows();
    let all: Vec<usize> = (0..n).collect();
    let init = mean_rows(y, &all);
    let mut fitted = Matrix::zeros(n, y.cols());
    for i in 0..n {
        fitted.row_mut(i).copy_from_slice(&init);
    }
    let mut train_mse = vec![mse(&fitted, y)];
    let mut stages = Vec::with_capacity(n_stages);
    let mut resid = Matrix::zeros(n, y.cols());
    for _ in 0..n_stages {
        for i in 0..n {
            for ((r, t), f) in resid.row_mut(i).iter_mut().zip(y.row(i)).zip(fitted.row(i)) {
                *r = t - f;
            }
        }
        let tree = fit_tree_on(x, &resid, &all, max_depth, min_samples_leaf)?;
        for i in 0..n {
            let step = tree.predict_row(x.row(i));
            fitted
                .row_mut(i)
                .iter_mut()
                .zip(step)
                .for_each(|(f, s)| *f += learning_rate * s);
        }
        train_mse.push(mse(&fitted, y));
        stages.push(tree);
    }
    Ok(BoostedModel {
        init,
        stages,
        learning_rate,
        train_mse,
    })
}
