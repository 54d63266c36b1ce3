use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::SectionLabel;
use crate::error::{Error, Result};
use crate::features::{FeatureSpace, SparseVector};
use crate::optim::{lbfgs, LbfgsConfig};

/// Sentence offsets whose features feed each position's state score.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrfTemplate {
    offsets: Vec<isize>,
}

impl Default for CrfTemplate {
    fn default() -> Self {
        CrfTemplate::window(2)
    }
}

impl CrfTemplate {
    pub fn new(mut offsets: Vec<isize>) -> Result<Self> {
        offsets.sort_unstable();
        offsets.dedup();
        if !offsets.contains(&0) {
            return Err(Error::config("CRF template offsets must include 0"));
        }
        Ok(CrfTemplate { offsets })
    }

    /// Offsets `-w..=w`.
    pub fn window(w: usize) -> Self {
        let w = w as isize;
        CrfTemplate {
            offsets: (-w..=w).collect(),
        }
    }

    pub fn offsets(&self) -> &[isize] {
        &self.offsets
    }
}

/// Linear-chain CRF over `labels` states. Parameters are one flat
/// vector: state weights laid out as `[offset][label][dim]`, then the
/// `labels × labels` transition matrix (`from`-major).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrfModel {
    pub labels: usize,
    pub dims: usize,
    pub template: CrfTemplate,
    pub params: Vec<f64>,
}

impl CrfModel {
    pub fn zeros(labels: usize, dims: usize, template: CrfTemplate) -> Self {
        let n = template.offsets.len() * labels * dims + labels * labels;
        CrfModel {
            labels,
            dims,
            template,
            params: vec![0.0; n],
        }
    }

    fn state_index(&self, offset_slot: usize, label: usize, dim: usize) -> usize {
        (offset_slot * self.labels + label) * self.dims + dim
    }

    pub fn state_weight(&self, label: usize, offset: isize, dim: usize) -> f64 {
        let slot = self.template.offsets.iter().position(|&o| o == offset).expect("offset in template");
        self.params[self.state_index(slot, label, dim)]
    }

    pub fn set_state_weight(&mut self, label: usize, offset: isize, dim: usize, w: f64) {
        let slot = self.template.offsets.iter().position(|&o| o == offset).expect("offset in template");
        let i = self.state_index(slot, label, dim);
        self.params[i] = w;
    }

    fn transition_base(&self) -> usize {
        self.template.offsets.len() * self.labels * self.dims
    }

    pub fn transitions(&self) -> &[f64] {
        &self.params[self.transition_base()..]
    }

    pub fn transitions_mut(&mut self) -> &mut [f64] {
        let b = self.transition_base();
        &mut self.params[b..]
    }

    /// `label<TAB>offset<TAB>feature<TAB>weight` for nonzero state
    /// weights, then `from->to` transition rows.
    pub fn dump(&self, space: &FeatureSpace) -> String {
        let name = |l: usize| {
            SectionLabel::from_index(l).map_or_else(|| l.to_string(), |s| s.as_str().to_string())
        };
        let mut out = String::new();
        for (slot, &o) in self.template.offsets.iter().enumerate() {
            for l in 0..self.labels {
                for d in 0..self.dims {
                    let w = self.params[self.state_index(slot, l, d)];
                    if w != 0.0 {
                        out.push_str(&format!("{}\t{}\t{}\t{}\n", name(l), o, space.name(d), w));
                    }
                }
            }
        }
        let t = self.transitions();
        for a in 0..self.labels {
            for b in 0..self.labels {
                let w = t[a * self.labels + b];
                if w != 0.0 {
                    out.push_str(&format!("{}\t->\t{}\t{}\n", name(a), name(b), w));
                }
            }
        }
        out
    }
}

/// Per-position state scores (`T × L`, row-major) and the transition
/// matrix (`L × L`, `from`-major).
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub labels: usize,
    pub state: Vec<f64>,
    pub transition: Vec<f64>,
}

impl ScoreTable {
    pub fn len(&self) -> usize {
        self.state.len() / self.labels
    }

    pub fn is_empty(&self) -> bool {
        self.state.is_empty()
    }

    pub fn state(&self, t: usize, y: usize) -> f64 {
        self.state[t * self.labels + y]
    }

    pub fn trans(&self, from: usize, to: usize) -> f64 {
        self.transition[from * self.labels + to]
    }

    /// Score of one complete label path.
    pub fn path_score(&self, path: &[usize]) -> f64 {
        let mut s = 0.0;
        for (t, &y) in path.iter().enumerate() {
            s += self.state(t, y);
            if t > 0 {
                s += self.trans(path[t - 1], y);
            }
        }
        s
    }
}

pub fn crf_score_table(model: &CrfModel, doc: &[SparseVector]) -> ScoreTable {
    let n = doc.len();
    let l = model.labels;
    let mut state = vec![0.0; n * l];
    for t in 0..n {
        for (slot, &o) in model.template.offsets.iter().enumerate() {
            let s = t as isize + o;
            if s < 0 || s as usize >= n {
                continue;
            }
            for (d, v) in doc[s as usize].iter() {
                if d >= model.dims {
                    continue;
                }
                for y in 0..l {
                    state[t * l + y] += model.params[model.state_index(slot, y, d)] * v;
                }
            }
        }
    }
    ScoreTable {
        labels: l,
        state,
        transition: model.transitions().to_vec(),
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn forward(table: &ScoreTable) -> Vec<f64> {
    let (n, l) = (table.len(), table.labels);
    let mut alpha = vec![0.0; n * l];
    alpha[..l].copy_from_slice(&table.state[..l]);
    let mut buf = vec![0.0; l];
    for t in 1..n {
        for y in 0..l {
            for (p, b) in buf.iter_mut().enumerate() {
                *b = alpha[(t - 1) * l + p] + table.trans(p, y);
            }
            alpha[t * l + y] = table.state(t, y) + log_sum_exp(&buf);
        }
    }
    alpha
}

fn backward(table: &ScoreTable) -> Vec<f64> {
    let (n, l) = (table.len(), table.labels);
    let mut beta = vec![0.0; n * l];
    let mut buf = vec![0.0; l];
    for t in (0..n.saturating_sub(1)).rev() {
        for y in 0..l {
            for (q, b) in buf.iter_mut().enumerate() {
                *b = table.trans(y, q) + table.state(t + 1, q) + beta[(t + 1) * l + q];
            }
            beta[t * l + y] = log_sum_exp(&buf);
        }
    }
    beta
}

/// `log Z` by the forward recursion. Zero for an empty table.
pub fn crf_log_partition(table: &ScoreTable) -> f64 {
    let n = table.len();
    if n == 0 {
        return 0.0;
    }
    let alpha = forward(table);
    log_sum_exp(&alpha[(n - 1) * table.labels..])
}

/// Best path under a score table and its score. Ties prefer the lower
/// label.
pub fn viterbi(table: &ScoreTable) -> (Vec<usize>, f64) {
    let (n, l) = (table.len(), table.labels);
    if n == 0 {
        return (Vec::new(), 0.0);
    }
    let mut delta = table.state[..l].to_vec();
    let mut back = vec![0usize; n * l];
    for t in 1..n {
        let mut next = vec![0.0; l];
        for y in 0..l {
            let mut best = 0;
            let mut best_s = delta[0] + table.trans(0, y);
            for p in 1..l {
                let s = delta[p] + table.trans(p, y);
                if s > best_s {
                    best_s = s;
                    best = p;
                }
            }
            next[y] = best_s + table.state(t, y);
            back[t * l + y] = best;
        }
        delta = next;
    }
    let mut last = 0;
    for y in 1..l {
        if delta[y] > delta[last] {
            last = y;
        }
    }
    let score = delta[last];
    let mut path = vec![0; n];
    path[n - 1] = last;
    for t in (1..n).rev() {
        path[t - 1] = back[t * l + path[t]];
    }
    (path, score)
}

pub fn crf_viterbi(model: &CrfModel, doc: &[SparseVector]) -> (Vec<usize>, f64) {
    viterbi(&crf_score_table(model, doc))
}

/// Section labels for a six-label model.
pub fn crf_predict(model: &CrfModel, doc: &[SparseVector]) -> Vec<SectionLabel> {
    crf_viterbi(model, doc)
        .0
        .into_iter()
        .map(|y| SectionLabel::from_index(y).unwrap_or(SectionLabel::Other))
        .collect()
}

/// Adds this document's NLL gradient into `grad`; returns the NLL.
fn accumulate(model: &CrfModel, doc: &[SparseVector], gold: &[usize], grad: &mut [f64]) -> f64 {
    let n = doc.len();
    if n == 0 {
        return 0.0;
    }
    let l = model.labels;
    let table = crf_score_table(model, doc);
    let alpha = forward(&table);
    let beta = backward(&table);
    let log_z = log_sum_exp(&alpha[(n - 1) * l..]);
    let nll = log_z - table.path_score(gold);

    // Node marginals minus gold indicators, per position.
    let mut node = vec![0.0; n * l];
    for t in 0..n {
        for y in 0..l {
            node[t * l + y] = (alpha[t * l + y] + beta[t * l + y] - log_z).exp();
        }
        node[t * l + gold[t]] -= 1.0;
    }
    for t in 0..n {
        for (slot, &o) in model.template.offsets.iter().enumerate() {
            let s = t as isize + o;
            if s < 0 || s as usize >= n {
                continue;
            }
            for (d, v) in doc[s as usize].iter() {
                if d >= model.dims {
                    continue;
                }
                for y in 0..l {
                    grad[model.state_index(slot, y, d)] += node[t * l + y] * v;
                }
            }
        }
    }
    let tb = model.transition_base();
    for t in 1..n {
        for a in 0..l {
            for b in 0..l {
                let xi = (alpha[(t - 1) * l + a] + table.trans(a, b) + table.state(t, b) + beta[t * l + b] - log_z).exp();
                grad[tb + a * l + b] += xi;
            }
        }
        grad[tb + gold[t - 1] * l + gold[t]] -= 1.0;
    }
    nll
}

/// NLL of one document plus `l2/2·‖w‖²`, with its gradient.
pub fn crf_gradient(model: &CrfModel, doc: &[SparseVector], gold: &[usize], l2: f64) -> Result<(f64, Vec<f64>)> {
    if doc.len() != gold.len() {
        return Err(Error::data(format!("{} sentences but {} labels", doc.len(), gold.len())));
    }
    if let Some(&bad) = gold.iter().find(|&&y| y >= model.labels) {
        return Err(Error::data(format!("label {bad} out of range for {} labels", model.labels)));
    }
    let mut grad = vec![0.0; model.params.len()];
    let nll = accumulate(model, doc, gold, &mut grad);
    let mut reg = 0.0;
    for (g, w) in grad.iter_mut().zip(&model.params) {
        *g += l2 * w;
        reg += w * w;
    }
    Ok((nll + 0.5 * l2 * reg, grad))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum CrfOptimizer {
    Lbfgs(LbfgsConfig),
    Sgd { epochs: usize, batch_size: usize, learning_rate: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrfConfig {
    pub window: usize,
    pub l2: f64,
    pub optimizer: CrfOptimizer,
    pub seed: u64,
}

impl Default for CrfConfig {
    fn default() -> Self {
        CrfConfig {
            window: 2,
            l2: 1.0,
            optimizer: CrfOptimizer::Lbfgs(LbfgsConfig::default()),
            seed: 0,
        }
    }
}

/// A labeled training sequence.
pub struct CrfExample<'a> {
    pub vectors: &'a [SparseVector],
    pub labels: &'a [usize],
}

// Fixed chunking keeps the summation order independent of thread count.
const CHUNKS: usize = 16;

fn batch_objective(model: &CrfModel, docs: &[CrfExample<'_>], grad: &mut [f64]) -> f64 {
    let chunk = docs.len().div_ceil(CHUNKS).max(1);
    let parts: Vec<(f64, Vec<f64>)> = docs
        .par_chunks(chunk)
        .map(|part| {
            let mut g = vec![0.0; model.params.len()];
            let nll: f64 = part.iter().map(|ex| accumulate(model, ex.vectors, ex.labels, &mut g)).sum();
            (nll, g)
        })
        .collect();
    grad.iter_mut().for_each(|g| *g = 0.0);
    let mut total = 0.0;
    for (nll, g) in parts {
        total += nll;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    total
}

/// Minimizes Σ NLL + `l2/2·‖w‖²` over the training documents.
pub fn crf_train(docs: &[CrfExample<'_>], labels: usize, dims: usize, config: &CrfConfig) -> Result<CrfModel> {
    if docs.is_empty() {
        return Err(Error::data("empty CRF training corpus"));
    }
    if dims == 0 {
        return Err(Error::data("cannot train on an empty feature space"));
    }
    for ex in docs {
        if ex.vectors.len() != ex.labels.len() {
            return Err(Error::data("CRF example with misaligned labels"));
        }
        if ex.labels.iter().any(|&y| y >= labels) {
            return Err(Error::data("CRF label out of range"));
        }
    }
    let mut model = CrfModel::zeros(labels, dims, CrfTemplate::window(config.window));
    let l2 = config.l2;
    match config.optimizer {
        CrfOptimizer::Lbfgs(cfg) => {
            let mut params = std::mem::take(&mut model.params);
            let mut scratch = model.clone();
            lbfgs(&mut params, &cfg, |w, g| {
                scratch.params.clear();
                scratch.params.extend_from_slice(w);
                let nll = batch_objective(&scratch, docs, g);
                let mut reg = 0.0;
                for (gi, wi) in g.iter_mut().zip(w) {
                    *gi += l2 * wi;
                    reg += wi * wi;
                }
                nll + 0.5 * l2 * reg
            })?;
            model.params = params;
        }
        CrfOptimizer::Sgd {
            epochs,
            batch_size,
            learning_rate,
        } => {
            if batch_size == 0 {
                return Err(Error::config("CRF SGD batch_size must be positive"));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            let mut order: Vec<usize> = (0..docs.len()).collect();
            let mut grad = vec![0.0; model.params.len()];
            let share = 1.0 / docs.len() as f64;
            let mut step = 0usize;
            for _ in 0..epochs {
                order.shuffle(&mut rng);
                for batch in order.chunks(batch_size) {
                    step += 1;
                    let eta = learning_rate / (1.0 + step as f64 * 1e-3);
                    grad.iter_mut().for_each(|g| *g = 0.0);
                    for &i in batch {
                        accumulate(&model, docs[i].vectors, docs[i].labels, &mut grad);
                    }
                    let reg = l2 * share * batch.len() as f64;
                    for (w, g) in model.params.iter_mut().zip(&grad) {
                        *w -= eta * (g + reg * *w) / batch.len() as f64;
                    }
                }
            }
        }
    }
    if model.params.iter().any(|w| !w.is_finite()) {
        return Err(Error::Numerical("CRF training produced non-finite weights".into()));
    }
    Ok(model)
}
