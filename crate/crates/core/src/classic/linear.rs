use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::SectionLabel;
use crate::error::{Error, Result};
use crate::features::{FeatureSpace, SparseVector};

const L: usize = SectionLabel::COUNT;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinearKind {
    Lr,
    Svm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRegConfig {
    /// Penalty is `l2 / (2n)·‖W‖²` on top of the mean cross-entropy.
    pub l2: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        LogRegConfig {
            l2: 0.1,
            learning_rate: 0.1,
            epochs: 50,
            batch_size: 32,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    /// Hinge-loss weight; the per-example regularizer is `1 / (C·n)`.
    pub c: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            c: 10.0,
            epochs: 20,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LinearTrainConfig {
    Lr(LogRegConfig),
    Svm(SvmConfig),
}

/// One weight row of length `dims + 1` per label; the last column is
/// the bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub kind: LinearKind,
    pub dims: usize,
    pub weights: Vec<f64>,
    pub config: LinearTrainConfig,
}

impl LinearModel {
    fn zeros(kind: LinearKind, dims: usize, config: LinearTrainConfig) -> Self {
        LinearModel {
            kind,
            dims,
            weights: vec![0.0; L * (dims + 1)],
            config,
        }
    }

    pub fn row(&self, label: usize) -> &[f64] {
        let w = self.dims + 1;
        &self.weights[label * w..(label + 1) * w]
    }

    /// Euclidean norm of the feature weights, biases excluded.
    pub fn weight_norm(&self) -> f64 {
        (0..L)
            .flat_map(|l| self.row(l)[..self.dims].iter())
            .map(|w| w * w)
            .sum::<f64>()
            .sqrt()
    }

    /// Raw per-label scores `W·[x; 1]`.
    pub fn scores(&self, x: &SparseVector) -> Result<[f64; L]> {
        if let Some(d) = x.max_dim() {
            if d >= self.dims {
                return Err(Error::Shape {
                    op: "predict_linear",
                    left: vec![d + 1],
                    right: vec![self.dims],
                });
            }
        }
        Ok(raw_scores(&self.weights, self.dims, x))
    }

    /// `label<TAB>feature<TAB>weight` for nonzero weights.
    pub fn dump(&self, space: &FeatureSpace) -> String {
        let mut out = String::new();
        for l in 0..L {
            for (d, &w) in self.row(l).iter().enumerate() {
                if w != 0.0 {
                    let name = if d == self.dims { "<bias>" } else { space.name(d) };
                    out.push_str(&format!("{}\t{}\t{}\n", SectionLabel::ALL[l], name, w));
                }
            }
        }
        out
    }
}

fn raw_scores(weights: &[f64], dims: usize, x: &SparseVector) -> [f64; L] {
    let w = dims + 1;
    let mut s = [0.0; L];
    for (l, out) in s.iter_mut().enumerate() {
        let row = &weights[l * w..(l + 1) * w];
        *out = row[dims] + x.iter().map(|(d, v)| row[d] * v).sum::<f64>();
    }
    s
}

/// Index of the largest score, earliest label on ties.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

pub fn predict_linear(model: &LinearModel, x: &SparseVector) -> Result<(SectionLabel, [f64; L])> {
    let s = model.scores(x)?;
    Ok((SectionLabel::ALL[argmax(&s)], s))
}

fn check_training_set(xs: &[&SparseVector], ys: &[SectionLabel], dims: usize) -> Result<()> {
    if dims == 0 {
        return Err(Error::data("cannot train on an empty feature space"));
    }
    if xs.is_empty() {
        return Err(Error::data("empty training set"));
    }
    if xs.len() != ys.len() {
        return Err(Error::data(format!("{} vectors but {} labels", xs.len(), ys.len())));
    }
    for x in xs {
        if x.max_dim().is_some_and(|d| d >= dims) {
            return Err(Error::data(format!("vector dimension exceeds feature space of {dims}")));
        }
    }
    Ok(())
}

/// Multinomial logistic regression by mini-batch gradient descent with
/// per-coordinate (AdaGrad) step sizes.
pub fn train_logreg(
    xs: &[&SparseVector],
    ys: &[SectionLabel],
    dims: usize,
    config: &LogRegConfig,
) -> Result<LinearModel> {
    check_training_set(xs, ys, dims)?;
    if config.batch_size == 0 || !(config.learning_rate > 0.0) || !(config.l2 >= 0.0) {
        return Err(Error::config("logistic regression needs batch_size > 0, learning_rate > 0, l2 ≥ 0"));
    }
    let mut model = LinearModel::zeros(LinearKind::Lr, dims, LinearTrainConfig::Lr(*config));
    let n = xs.len();
    let w = dims + 1;
    let reg = config.l2 / n as f64;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut grad = vec![0.0; L * w];
    let mut hist = vec![0.0; L * w];
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let p = softmax(&raw_scores(&model.weights, dims, xs[i]));
                for l in 0..L {
                    let delta = (p[l] - if ys[i].index() == l { 1.0 } else { 0.0 }) * scale;
                    let row = &mut grad[l * w..(l + 1) * w];
                    for (d, v) in xs[i].iter() {
                        row[d] += delta * v;
                    }
                    row[dims] += delta;
                }
            }
            for l in 0..L {
                for d in 0..dims {
                    grad[l * w + d] += reg * model.weights[l * w + d];
                }
            }
            for (k, g) in grad.iter().enumerate() {
                if *g != 0.0 {
                    hist[k] += g * g;
                    model.weights[k] -= config.learning_rate * g / (hist[k].sqrt() + 1e-8);
                }
            }
        }
    }
    Ok(model)
}

/// One-vs-rest Pegasos. The bias is an extra constant feature and is
/// regularized with the rest.
pub fn train_svm(xs: &[&SparseVector], ys: &[SectionLabel], dims: usize, config: &SvmConfig) -> Result<LinearModel> {
    check_training_set(xs, ys, dims)?;
    if !(config.c > 0.0) {
        return Err(Error::config("SVM C must be positive"));
    }
    let mut model = LinearModel::zeros(LinearKind::Svm, dims, LinearTrainConfig::Svm(*config));
    let n = xs.len();
    let w = dims + 1;
    let lambda = 1.0 / (config.c * n as f64);
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    // weights = scale · v; rescaling is O(1) per step.
    let mut v = vec![0.0; L * w];
    let mut scale = 1.0;
    let mut t = 0u64;
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            let x = xs[i];
            let mut margins = [0.0; L];
            for (l, m) in margins.iter_mut().enumerate() {
                let row = &v[l * w..(l + 1) * w];
                let y = if ys[i].index() == l { 1.0 } else { -1.0 };
                *m = y * scale * (row[dims] + x.iter().map(|(d, val)| row[d] * val).sum::<f64>());
            }
            let shrink = 1.0 - eta * lambda;
            if shrink <= 0.0 {
                // First step: the old iterate is wiped out entirely.
                v.iter_mut().for_each(|a| *a = 0.0);
                scale = 1.0;
            } else {
                scale *= shrink;
            }
            for (l, &m) in margins.iter().enumerate() {
                if m < 1.0 {
                    let y = if ys[i].index() == l { 1.0 } else { -1.0 };
                    let step = eta * y / scale;
                    let row = &mut v[l * w..(l + 1) * w];
                    for (d, val) in x.iter() {
                        row[d] += step * val;
                    }
                    row[dims] += step;
                }
            }
            if scale < 1e-9 {
                v.iter_mut().for_each(|a| *a *= scale);
                scale = 1.0;
            }
        }
    }
    for (out, a) in model.weights.iter_mut().zip(&v) {
        *out = a * scale;
    }
    Ok(model)
}

/// Mean one-vs-rest hinge loss over a data set.
pub fn hinge_loss(model: &LinearModel, xs: &[&SparseVector], ys: &[SectionLabel]) -> Result<f64> {
    let mut total = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        let s = model.scores(x)?;
        for (l, &score) in s.iter().enumerate() {
            let sign = if y.index() == l { 1.0 } else { -1.0 };
            total += (1.0 - sign * score).max(0.0);
        }
    }
    Ok(total / xs.len().max(1) as f64)
}
