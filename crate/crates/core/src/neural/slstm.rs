//! The windowed sentence classifier: a shared BLSTM encodes the target
//! sentence and its neighbours, an optional CNN encodes the governing
//! heading, and a dense softmax layer reads the concatenation.

use std::collections::HashMap;
use std::ops::Range;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::conv::{conv_backward, conv_forward, ConvCache, ConvGrad, ConvView};
use super::embed::{EmbeddingTable, PAD, PAD_ID, UNK, UNK_ID};
use super::linalg::{gemm_nn, gemm_nt, gemm_tn};
use super::lstm::{blstm_batch, blstm_batch_backward, LstmGrad, LstmView};
use super::tensor::softmax_in_place;
use crate::annotate::AnnotatedDocument;
use crate::classic::argmax;
use crate::corpus::SectionLabel;
use crate::error::{Error, Result};
use crate::eval::precision_recall_f1;
use crate::features::{build_vocabulary, Vocabulary};
use crate::optim::{adam_step, AdamConfig, AdamState};

const L: usize = SectionLabel::COUNT;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlstmConfig {
    /// Neighbours on each side of the target sentence.
    pub window: usize,
    pub hidden: usize,
    /// Shared by word and heading embeddings.
    pub embed_dim: usize,
    pub heading_filters: usize,
    pub kernel: usize,
    pub sent_len: usize,
    pub head_len: usize,
    pub dropout: f64,
    pub lr: f64,
    pub batch: usize,
    pub heading_branch: bool,
    pub mean_pool: bool,
    pub freeze_embeddings: bool,
    pub epochs: usize,
    pub patience: usize,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for SlstmConfig {
    fn default() -> Self {
        SlstmConfig {
            window: 3,
            hidden: 200,
            embed_dim: 200,
            heading_filters: 200,
            kernel: 3,
            sent_len: 100,
            head_len: 5,
            dropout: 0.2,
            lr: 0.001,
            batch: 128,
            heading_branch: true,
            mean_pool: false,
            freeze_embeddings: false,
            epochs: 50,
            patience: 5,
            validation_fraction: 0.1,
            seed: 0,
        }
    }
}

impl SlstmConfig {
    /// Window without the heading branch.
    pub fn clstm() -> Self {
        SlstmConfig {
            heading_branch: false,
            ..Default::default()
        }
    }

    /// The target sentence alone.
    pub fn blstm() -> Self {
        SlstmConfig {
            window: 0,
            heading_branch: false,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("hidden", self.hidden),
            ("embed_dim", self.embed_dim),
            ("sent_len", self.sent_len),
            ("batch", self.batch),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::config(format!("{name} must be positive")));
            }
        }
        if self.heading_branch && (self.kernel == 0 || self.kernel > self.head_len || self.heading_filters == 0) {
            return Err(Error::config("heading branch needs 0 < kernel ≤ head_len and filters > 0"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config("dropout must be in [0, 1)"));
        }
        if !(self.lr > 0.0) {
            return Err(Error::config("learning rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::config("validation_fraction must be in [0, 1)"));
        }
        Ok(())
    }

    /// Width of the concatenated representation.
    pub fn input_dim(&self) -> usize {
        2 * self.hidden * (2 * self.window + 1) + if self.heading_branch { self.heading_filters } else { 0 }
    }
}

#[derive(Debug, Clone)]
struct Layout {
    word_emb: Range<usize>,
    head_emb: Range<usize>,
    fwd: [Range<usize>; 3],
    bwd: [Range<usize>; 3],
    conv_w: Range<usize>,
    conv_b: Range<usize>,
    dense_w: Range<usize>,
    dense_b: Range<usize>,
}

impl Layout {
    fn new(c: &SlstmConfig, words: usize, heads: usize) -> Self {
        let mut at = 0;
        let mut take = |n: usize| {
            let r = at..at + n;
            at += n;
            r
        };
        let (e, h) = (c.embed_dim, c.hidden);
        let word_emb = take(words * e);
        let head_emb = take(if c.heading_branch { heads * e } else { 0 });
        let fwd = [take(4 * h * e), take(4 * h * h), take(4 * h)];
        let bwd = [take(4 * h * e), take(4 * h * h), take(4 * h)];
        let (cw, cb) = if c.heading_branch {
            (take(c.heading_filters * c.kernel * e), take(c.heading_filters))
        } else {
            (take(0), take(0))
        };
        let dense_w = take(L * c.input_dim());
        let dense_b = take(L);
        Layout {
            word_emb,
            head_emb,
            fwd,
            bwd,
            conv_w: cw,
            conv_b: cb,
            dense_w,
            dense_b,
        }
    }

    fn total(&self) -> usize {
        self.dense_b.end
    }

    /// Block boundaries in storage order.
    fn blocks(&self) -> Vec<Range<usize>> {
        let mut v = vec![self.word_emb.clone(), self.head_emb.clone()];
        v.extend(self.fwd.iter().cloned());
        v.extend(self.bwd.iter().cloned());
        v.extend([self.conv_w.clone(), self.conv_b.clone(), self.dense_w.clone(), self.dense_b.clone()]);
        v
    }
}

/// Mutable per-block views into a flat gradient buffer.
struct GradParts<'a> {
    word_emb: &'a mut [f64],
    head_emb: &'a mut [f64],
    fwd: LstmGrad<'a>,
    bwd: LstmGrad<'a>,
    conv: ConvGrad<'a>,
    dense_w: &'a mut [f64],
    dense_b: &'a mut [f64],
}

fn split_grad<'a>(buf: &'a mut [f64], layout: &Layout) -> GradParts<'a> {
    let mut rest = buf;
    let mut parts: Vec<&'a mut [f64]> = Vec::new();
    for r in layout.blocks() {
        let (a, b) = std::mem::take(&mut rest).split_at_mut(r.len());
        parts.push(a);
        rest = b;
    }
    let mut it = parts.into_iter();
    let mut next = || it.next().expect("layout block");
    GradParts {
        word_emb: next(),
        head_emb: next(),
        fwd: LstmGrad { w: next(), u: next(), b: next() },
        bwd: LstmGrad { w: next(), u: next(), b: next() },
        conv: ConvGrad { w: next(), b: next() },
        dense_w: next(),
        dense_b: next(),
    }
}

/// A document mapped to vocabulary ids.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedDoc {
    pub sentences: Vec<Vec<u32>>,
    pub heading_of: Vec<Option<usize>>,
    /// Padded heading ids, indexed by sentence (empty for non-headings).
    pub heading_ids: Vec<Vec<u32>>,
    pub gold: Option<Vec<usize>>,
}

impl EncodedDoc {
    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlstmModel {
    pub config: SlstmConfig,
    pub words: Vocabulary,
    pub heads: Vocabulary,
    pub params: Vec<f64>,
}

fn with_reserved(words: &[String]) -> Vocabulary {
    let mut all = vec![PAD.to_string(), UNK.to_string()];
    all.extend(words.iter().filter(|w| *w != PAD && *w != UNK).cloned());
    Vocabulary::from(all)
}

impl SlstmModel {
    /// Random initialization. `words` / `heads` exclude the reserved
    /// padding and unknown entries, which are added here.
    pub fn new(config: SlstmConfig, words: &[String], heads: &[String], seed: u64) -> Result<Self> {
        config.validate()?;
        let words = with_reserved(words);
        let heads = if config.heading_branch { with_reserved(heads) } else { Vocabulary::default() };
        let layout = Layout::new(&config, words.len(), heads.len());
        let mut params = vec![0.0; layout.total()];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |r: Range<usize>, scale: f64, p: &mut [f64]| {
            for v in &mut p[r] {
                *v = rng.gen_range(-scale..scale);
            }
        };
        let e = config.embed_dim;
        let h = config.hidden;
        fill(layout.word_emb.start + 2 * e..layout.word_emb.end, 0.1, &mut params);
        if config.heading_branch {
            fill(layout.head_emb.start + 2 * e..layout.head_emb.end, 0.1, &mut params);
            fill(layout.conv_w.clone(), 1.0 / ((config.kernel * e) as f64).sqrt(), &mut params);
        }
        let s = 1.0 / (h as f64).sqrt();
        for block in [&layout.fwd, &layout.bwd] {
            fill(block[0].clone(), s, &mut params);
            fill(block[1].clone(), s, &mut params);
            // Forget-gate bias starts at 1.
            for v in &mut params[block[2].start + h..block[2].start + 2 * h] {
                *v = 1.0;
            }
        }
        fill(layout.dense_w.clone(), 1.0 / (config.input_dim() as f64).sqrt(), &mut params);
        // Row 1 of the word table starts as a small random vector like any other word.
        fill(layout.word_emb.start + e..layout.word_emb.start + 2 * e, 0.1, &mut params);
        Ok(SlstmModel {
            config,
            words,
            heads,
            params,
        })
    }

    /// Copies pretrained vectors into the word table for shared words.
    pub fn load_embeddings(&mut self, table: &EmbeddingTable) -> Result<()> {
        let e = self.config.embed_dim;
        if table.dim != e {
            return Err(Error::config(format!(
                "embedding dimension {} does not match model dimension {e}",
                table.dim
            )));
        }
        let base = self.layout().word_emb.start;
        for (i, w) in self.words.words().iter().enumerate().skip(2) {
            if let Some(j) = table.vocab.get(w) {
                self.params[base + i * e..base + (i + 1) * e].copy_from_slice(table.row(j));
            }
        }
        Ok(())
    }

    fn layout(&self) -> Layout {
        Layout::new(&self.config, self.words.len(), self.heads.len())
    }

    /// Checks the parameter vector against the layout the config and
    /// vocabularies imply.
    pub fn check_shape(&self) -> Result<()> {
        self.config.validate()?;
        let need = self.layout().total();
        if need != self.params.len() {
            return Err(Error::Format(format!(
                "network has {} parameters, layout needs {need}",
                self.params.len()
            )));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Word-table rows as an [`EmbeddingTable`].
    pub fn word_embeddings(&self) -> EmbeddingTable {
        let r = self.layout().word_emb;
        EmbeddingTable {
            vocab: self.words.clone(),
            dim: self.config.embed_dim,
            vectors: self.params[r].to_vec(),
            trainable: !self.config.freeze_embeddings,
        }
    }

    /// Mutable dense-layer weights (`6 × D`, then the bias).
    pub fn dense_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        let l = self.layout();
        let (w, b) = self.params[l.dense_w.start..l.dense_b.end].split_at_mut(l.dense_w.len());
        (w, b)
    }

    fn lstm_views<'a>(&'a self, l: &Layout) -> (LstmView<'a>, LstmView<'a>) {
        let mk = |r: &[Range<usize>; 3]| LstmView {
            input: self.config.embed_dim,
            hidden: self.config.hidden,
            w: &self.params[r[0].clone()],
            u: &self.params[r[1].clone()],
            b: &self.params[r[2].clone()],
        };
        (mk(&l.fwd), mk(&l.bwd))
    }

    fn conv_view<'a>(&'a self, l: &Layout) -> ConvView<'a> {
        ConvView {
            input: self.config.embed_dim,
            kernel: self.config.kernel,
            filters: self.config.heading_filters,
            w: &self.params[l.conv_w.clone()],
            b: &self.params[l.conv_b.clone()],
        }
    }

    pub fn encode(&self, doc: &AnnotatedDocument) -> EncodedDoc {
        let c = &self.config;
        let id = |v: &Vocabulary, w: &str| v.get(w).map_or(UNK_ID, |i| i as u32);
        let sentences = doc
            .tokens
            .iter()
            .map(|s| s.iter().take(c.sent_len).map(|t| id(&self.words, &t.surface)).collect())
            .collect();
        let heading_of: Vec<Option<usize>> = (0..doc.len()).map(|i| doc.heading_index(i)).collect();
        let mut heading_ids = vec![Vec::new(); doc.len()];
        if c.heading_branch {
            for h in heading_of.iter().flatten() {
                if heading_ids[*h].is_empty() {
                    let mut ids: Vec<u32> = doc.tokens[*h].iter().take(c.head_len).map(|t| id(&self.heads, &t.surface)).collect();
                    ids.resize(c.head_len, PAD_ID);
                    heading_ids[*h] = ids;
                }
            }
        }
        let gold = doc
            .document
            .gold_labels()
            .ok()
            .map(|g| g.into_iter().map(SectionLabel::index).collect());
        EncodedDoc {
            sentences,
            heading_of,
            heading_ids,
            gold,
        }
    }

    /// Forward (and optionally backward) pass over `targets`, given as
    /// `(document, sentence)` pairs. Returns the mean cross-entropy (0 if
    /// gold labels are missing) and per-target probabilities.
    fn run_batch(
        &self,
        docs: &[EncodedDoc],
        targets: &[(usize, usize)],
        dropout_seed: Option<u64>,
        grad: Option<&mut [f64]>,
    ) -> Result<(f64, Vec<[f64; L]>)> {
        let c = &self.config;
        let l = self.layout();
        let (e, h2) = (c.embed_dim, 2 * c.hidden);
        let w = c.window as isize;
        let d_in = c.input_dim();
        let bsz = targets.len();

        // Distinct sentences needed by the batch, in first-use order.
        let mut slot_of: HashMap<(usize, usize), usize> = HashMap::new();
        let mut seqs: Vec<&[u32]> = Vec::new();
        for &(d, t) in targets {
            let doc = docs.get(d).ok_or_else(|| Error::data(format!("document {d} out of range")))?;
            if t >= doc.len() {
                return Err(Error::data(format!("sentence {t} out of range for a {}-sentence document", doc.len())));
            }
            for o in -w..=w {
                let s = t as isize + o;
                if s >= 0 && (s as usize) < doc.len() {
                    slot_of.entry((d, s as usize)).or_insert_with(|| {
                        seqs.push(&doc.sentences[s as usize]);
                        seqs.len() - 1
                    });
                }
            }
        }
        let word_emb = &self.params[l.word_emb.clone()];
        let (fv, bv) = self.lstm_views(&l);
        let (enc, cache) = blstm_batch(&seqs, word_emb, &fv, &bv, c.mean_pool);

        let head_emb = &self.params[l.head_emb.clone()];
        let cv = self.conv_view(&l);
        let mut head_slot: HashMap<Option<(usize, usize)>, usize> = HashMap::new();
        let mut head_out: Vec<(Vec<f64>, ConvCache)> = Vec::new();
        let empty_heading = vec![PAD_ID; c.head_len];
        if c.heading_branch {
            for &(d, t) in targets {
                let key = docs[d].heading_of[t].map(|hi| (d, hi));
                if let std::collections::hash_map::Entry::Vacant(v) = head_slot.entry(key) {
                    let ids = key.map_or(&empty_heading, |(d, hi)| &docs[d].heading_ids[hi]);
                    head_out.push(conv_forward(ids, head_emb, &cv)?);
                    v.insert(head_out.len() - 1);
                }
            }
        }

        let mut x = vec![0.0; bsz * d_in];
        let mut masks: Vec<Vec<f64>> = Vec::new();
        for (b, &(d, t)) in targets.iter().enumerate() {
            let row = &mut x[b * d_in..(b + 1) * d_in];
            for (k, o) in (-w..=w).enumerate() {
                let s = t as isize + o;
                if let Some(&slot) = (s >= 0).then(|| slot_of.get(&(d, s as usize))).flatten() {
                    row[k * h2..(k + 1) * h2].copy_from_slice(&enc[slot * h2..(slot + 1) * h2]);
                }
            }
            if c.heading_branch {
                let key = docs[d].heading_of[t].map(|hi| (d, hi));
                let off = (2 * c.window + 1) * h2;
                row[off..].copy_from_slice(&head_out[head_slot[&key]].0);
            }
            if let Some(seed) = dropout_seed {
                if c.dropout > 0.0 {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (b as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
                    let keep = 1.0 / (1.0 - c.dropout);
                    let mask: Vec<f64> = (0..d_in).map(|_| if rng.gen::<f64>() < c.dropout { 0.0 } else { keep }).collect();
                    for (v, m) in row.iter_mut().zip(&mask) {
                        *v *= m;
                    }
                    masks.push(mask);
                }
            }
        }

        let dw = &self.params[l.dense_w.clone()];
        let db = &self.params[l.dense_b.clone()];
        let mut logits = vec![0.0; bsz * L];
        for row in logits.chunks_mut(L) {
            row.copy_from_slice(db);
        }
        gemm_nt(bsz, L, d_in, &x, dw, &mut logits, 1.0);
        let mut probs = Vec::with_capacity(bsz);
        let mut loss = 0.0;
        let mut dlogits = vec![0.0; bsz * L];
        for (b, &(d, t)) in targets.iter().enumerate() {
            let row = &mut logits[b * L..(b + 1) * L];
            softmax_in_place(row);
            let mut p = [0.0; L];
            p.copy_from_slice(row);
            if let Some(gold) = &docs[d].gold {
                let g = gold[t];
                loss -= p[g].max(f64::MIN_POSITIVE).ln() / bsz as f64;
                for k in 0..L {
                    dlogits[b * L + k] = (p[k] - if k == g { 1.0 } else { 0.0 }) / bsz as f64;
                }
            }
            probs.push(p);
        }

        let Some(grad) = grad else {
            return Ok((loss, probs));
        };
        if docs.iter().any(|d| d.gold.is_none()) && targets.iter().any(|&(d, _)| docs[d].gold.is_none()) {
            return Err(Error::data("gradient requested for unlabeled sentences"));
        }
        let g = split_grad(grad, &l);
        gemm_tn(L, d_in, bsz, &dlogits, &x, g.dense_w, 1.0);
        for row in dlogits.chunks(L) {
            for (a, v) in g.dense_b.iter_mut().zip(row) {
                *a += v;
            }
        }
        let mut dx = vec![0.0; bsz * d_in];
        gemm_nn(bsz, d_in, L, &dlogits, dw, &mut dx, 0.0);
        if !masks.is_empty() {
            for (row, mask) in dx.chunks_mut(d_in).zip(&masks) {
                for (v, m) in row.iter_mut().zip(mask) {
                    *v *= m;
                }
            }
        }
        let mut d_enc = vec![0.0; seqs.len() * h2];
        let mut d_head = vec![vec![0.0; c.heading_filters]; head_out.len()];
        for (b, &(d, t)) in targets.iter().enumerate() {
            let row = &dx[b * d_in..(b + 1) * d_in];
            for (k, o) in (-w..=w).enumerate() {
                let s = t as isize + o;
                if let Some(&slot) = (s >= 0).then(|| slot_of.get(&(d, s as usize))).flatten() {
                    for (a, v) in d_enc[slot * h2..(slot + 1) * h2].iter_mut().zip(&row[k * h2..(k + 1) * h2]) {
                        *a += v;
                    }
                }
            }
            if c.heading_branch {
                let key = docs[d].heading_of[t].map(|hi| (d, hi));
                let off = (2 * c.window + 1) * h2;
                for (a, v) in d_head[head_slot[&key]].iter_mut().zip(&row[off..]) {
                    *a += v;
                }
            }
        }
        let GradParts {
            word_emb: gw,
            head_emb: gh,
            fwd: mut gf,
            bwd: mut gb,
            conv: mut gc,
            ..
        } = g;
        blstm_batch_backward(&cache, &fv, &bv, &d_enc, c.mean_pool, &mut gf, &mut gb, gw);
        for ((_, cc), dh) in head_out.iter().zip(&d_head) {
            conv_backward(cc, &cv, dh, &mut gc, gh);
        }
        gw[..e].iter_mut().for_each(|v| *v = 0.0);
        if c.heading_branch {
            gh[..e].iter_mut().for_each(|v| *v = 0.0);
        }
        if c.freeze_embeddings {
            gw.iter_mut().for_each(|v| *v = 0.0);
        }
        Ok((loss, probs))
    }
}

/// Label probabilities for sentence `t`, dropout off.
pub fn slstm_forward(model: &SlstmModel, doc: &EncodedDoc, t: usize) -> Result<[f64; L]> {
    if t >= doc.len() {
        return Err(Error::data(format!("sentence {t} out of range for a {}-sentence document", doc.len())));
    }
    let (_, p) = model.run_batch(std::slice::from_ref(doc), &[(0, t)], None, None)?;
    Ok(p[0])
}

/// Mean cross-entropy over `batch` and its gradient with respect to
/// [`SlstmModel::params`]. With `dropout_seed`, each example draws its
/// own mask from a generator seeded by the seed and its batch position.
pub fn slstm_loss_grad(
    model: &SlstmModel,
    docs: &[EncodedDoc],
    batch: &[(usize, usize)],
    dropout_seed: Option<u64>,
) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::data("empty batch"));
    }
    if batch.iter().any(|&(d, _)| docs.get(d).is_some_and(|x| x.gold.is_none())) {
        return Err(Error::data("batch contains unlabeled sentences"));
    }
    let mut grad = vec![0.0; model.params.len()];
    let (loss, _) = model.run_batch(docs, batch, dropout_seed, Some(&mut grad))?;
    Ok((loss, grad))
}

const PREDICT_CHUNK: usize = 256;

fn predict_encoded(model: &SlstmModel, doc: &EncodedDoc) -> Result<Vec<[f64; L]>> {
    let targets: Vec<(usize, usize)> = (0..doc.len()).map(|t| (0, t)).collect();
    let mut out = Vec::with_capacity(doc.len());
    for chunk in targets.chunks(PREDICT_CHUNK) {
        out.extend(model.run_batch(std::slice::from_ref(doc), chunk, None, None)?.1);
    }
    Ok(out)
}

/// Per-sentence argmax label and probabilities.
pub fn predict_slstm(model: &SlstmModel, doc: &AnnotatedDocument) -> Result<Vec<(SectionLabel, [f64; L])>> {
    let enc = model.encode(doc);
    Ok(predict_encoded(model, &enc)?
        .into_iter()
        .map(|p| (SectionLabel::ALL[argmax(&p)], p))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub epoch: usize,
    pub split: String,
    pub loss: f64,
    pub macro_f1: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub rows: Vec<LogRow>,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
}

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,split,loss,macro_f1\n");
        for r in &self.rows {
            s.push_str(&format!("{},{},{:.6},{:.6}\n", r.epoch, r.split, r.loss, r.macro_f1));
        }
        s
    }
}

fn macro_f1(pred: &[usize], gold: &[usize]) -> f64 {
    let p: Vec<SectionLabel> = pred.iter().map(|&i| SectionLabel::ALL[i]).collect();
    let g: Vec<SectionLabel> = gold.iter().map(|&i| SectionLabel::ALL[i]).collect();
    precision_recall_f1(&p, &g).map_or(0.0, |r| r.macro_f1())
}

fn evaluate_docs(model: &SlstmModel, docs: &[EncodedDoc]) -> Result<(f64, f64)> {
    let mut pred = Vec::new();
    let mut gold = Vec::new();
    let mut loss = 0.0;
    for d in docs {
        let g = d.gold.as_ref().ok_or_else(|| Error::data("validation document without labels"))?;
        for (p, &y) in predict_encoded(model, d)?.iter().zip(g) {
            loss -= p[y].max(f64::MIN_POSITIVE).ln();
            pred.push(argmax(p));
            gold.push(y);
        }
    }
    Ok((loss / gold.len().max(1) as f64, macro_f1(&pred, &gold)))
}

fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mini-batch Adam with early stopping on a held-out share of the
/// training documents. Returns the best-validation snapshot.
pub fn train_slstm(
    docs: &[AnnotatedDocument],
    config: &SlstmConfig,
    embeddings: Option<&EmbeddingTable>,
) -> Result<(SlstmModel, TrainingLog)> {
    config.validate()?;
    if docs.is_empty() {
        return Err(Error::data("empty training corpus"));
    }
    if docs.iter().any(|d| !d.document.is_labeled()) {
        return Err(Error::data("training corpus must be fully labeled"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..docs.len()).collect();
    order.shuffle(&mut rng);
    let n_val = if docs.len() >= 2 {
        ((docs.len() as f64 * config.validation_fraction).round() as usize).min(docs.len() - 1)
    } else {
        0
    };
    let (val_idx, train_idx) = order.split_at(n_val);
    let train_docs: Vec<&AnnotatedDocument> = train_idx.iter().map(|&i| &docs[i]).collect();

    let words: Vec<String> = match embeddings {
        Some(t) => t.vocab.words().iter().skip(2).cloned().collect(),
        None => build_vocabulary(train_docs.iter().flat_map(|d| d.tokens.iter().flatten()).map(|t| t.surface.as_str()), 1)
            .words()
            .to_vec(),
    };
    let heads = build_vocabulary(
        train_docs.iter().flat_map(|d| {
            d.document
                .sentences
                .iter()
                .filter(|s| s.is_heading)
                .flat_map(move |s| d.tokens[s.index].iter().map(|t| t.surface.as_str()))
        }),
        1,
    );
    let mut model = SlstmModel::new(config.clone(), &words, heads.words(), mix(config.seed, 1))?;
    if let Some(t) = embeddings {
        model.load_embeddings(t)?;
    }
    let train_enc: Vec<EncodedDoc> = train_idx.iter().map(|&i| model.encode(&docs[i])).collect();
    let val_enc: Vec<EncodedDoc> = val_idx.iter().map(|&i| model.encode(&docs[i])).collect();

    let adam = AdamConfig {
        lr: config.lr,
        ..Default::default()
    };
    let mut state = AdamState::new(model.params.len());
    let mut log = TrainingLog::default();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut bad_epochs = 0;
    let mut doc_order: Vec<usize> = (0..train_enc.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(mix(config.seed, 2));
    for epoch in 1..=config.epochs {
        doc_order.shuffle(&mut shuffle_rng);
        let targets: Vec<(usize, usize)> = doc_order
            .iter()
            .flat_map(|&d| (0..train_enc[d].len()).map(move |t| (d, t)))
            .collect();
        let mut loss_sum = 0.0;
        let mut pred = Vec::with_capacity(targets.len());
        let mut gold = Vec::with_capacity(targets.len());
        let mut grad = vec![0.0; model.params.len()];
        for (bi, batch) in targets.chunks(config.batch).enumerate() {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let seed = mix(mix(config.seed, epoch as u64), bi as u64 + 3);
            let (loss, probs) = model.run_batch(&train_enc, batch, Some(seed), Some(&mut grad))?;
            if !loss.is_finite() {
                return Err(Error::Numerical(format!("non-finite loss in epoch {epoch}")));
            }
            adam_step(&mut model.params, &grad, &mut state, &adam)?;
            loss_sum += loss * batch.len() as f64;
            for (&(d, t), p) in batch.iter().zip(&probs) {
                pred.push(argmax(p));
                gold.push(train_enc[d].gold.as_ref().expect("labeled")[t]);
            }
        }
        let train_f1 = macro_f1(&pred, &gold);
        log.rows.push(LogRow {
            epoch,
            split: "train".into(),
            loss: loss_sum / targets.len().max(1) as f64,
            macro_f1: train_f1,
        });
        let score = if val_enc.is_empty() {
            train_f1
        } else {
            let (vl, vf) = evaluate_docs(&model, &val_enc)?;
            log.rows.push(LogRow {
                epoch,
                split: "valid".into(),
                loss: vl,
                macro_f1: vf,
            });
            vf
        };
        if best.as_ref().is_none_or(|(b, _)| score > *b) {
            best = Some((score, model.params.clone()));
            log.best_epoch = epoch;
            bad_epochs = 0;
        } else {
            bad_epochs += 1;
            if bad_epochs >= config.patience {
                break;
            }
        }
    }
    if let Some((_, p)) = best {
        model.params = p;
    }
    Ok((model, log))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> SlstmConfig {
        SlstmConfig {
            window: 1,
            hidden: 3,
            embed_dim: 4,
            heading_filters: 2,
            kernel: 2,
            head_len: 3,
            dropout: 0.2,
            batch: 4,
            ..Default::default()
        }
    }

    fn doc(n: usize, seed: u64, vocab: u32, heads: u32) -> EncodedDoc {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sentences: Vec<Vec<u32>> = (0..n)
            .map(|i| {
                if i == 2 {
                    Vec::new()
                } else {
                    (0..rng.gen_range(1..5)).map(|_| rng.gen_range(1..vocab)).collect()
                }
            })
            .collect();
        let heading_of = (0..n).map(|i| if i >= 1 { Some(1) } else { None }).collect();
        let mut heading_ids = vec![Vec::new(); n];
        heading_ids[1] = vec![rng.gen_range(1..heads), rng.gen_range(1..heads), PAD_ID];
        let gold = Some((0..n).map(|_| rng.gen_range(0..L)).collect());
        EncodedDoc {
            sentences,
            heading_of,
            heading_ids,
            gold,
        }
    }

    fn model(cfg: SlstmConfig, seed: u64) -> SlstmModel {
        let words: Vec<String> = (0..6).map(|i| format!("w{i}")).collect();
        let heads: Vec<String> = (0..3).map(|i| format!("h{i}")).collect();
        let mut m = SlstmModel::new(cfg, &words, &heads, seed).unwrap();
        // Scale up so the gradient check exercises every nonlinearity.
        let l = m.layout();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        for r in [l.fwd[2].clone(), l.bwd[2].clone(), l.conv_b.clone(), l.dense_b.clone()] {
            for v in &mut m.params[r] {
                *v = rng.gen_range(-0.5..0.5);
            }
        }
        m
    }

    #[test]
    fn probabilities_sum_to_one() {
        let m = model(tiny(), 1);
        let d = doc(5, 2, 8, 5);
        for t in 0..5 {
            let p = slstm_forward(&m, &d, t).unwrap();
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(p.iter().all(|&v| v >= 0.0));
        }
        assert!(slstm_forward(&m, &d, 5).is_err());
    }

    #[test]
    fn full_gradient_matches_finite_differences() {
        for seed in 0..3 {
            let mut m = model(tiny(), seed);
            let docs = vec![doc(5, seed + 10, 8, 5), doc(3, seed + 20, 8, 5)];
            let batch = [(0, 0), (0, 3), (1, 1), (0, 2), (1, 2)];
            let (_, g) = slstm_loss_grad(&m, &docs, &batch, Some(42)).unwrap();
            let h = 1e-6;
            let mut fd = vec![0.0; g.len()];
            for k in 0..g.len() {
                let v = m.params[k];
                m.params[k] = v + h;
                let fp = slstm_loss_grad(&m, &docs, &batch, Some(42)).unwrap().0;
                m.params[k] = v - h;
                let fm = slstm_loss_grad(&m, &docs, &batch, Some(42)).unwrap().0;
                m.params[k] = v;
                fd[k] = (fp - fm) / (2.0 * h);
            }
            let diff: f64 = fd.iter().zip(&g).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let norm = fd.iter().map(|a| a * a).sum::<f64>().sqrt().max(g.iter().map(|a| a * a).sum::<f64>().sqrt());
            assert!(diff / norm < 1e-5, "relative error {}", diff / norm);
        }
    }

    #[test]
    fn gradient_reaches_every_window_position() {
        let cfg = SlstmConfig { window: 3, dropout: 0.0, ..tiny() };
        let words: Vec<String> = (0..7).map(|i| format!("w{i}")).collect();
        let m = SlstmModel::new(cfg, &words, &[], 3).unwrap();
        // Sentence i holds only word i (id i + 2).
        let d = EncodedDoc {
            sentences: (0..7).map(|i| vec![i + 2]).collect(),
            heading_of: vec![None; 7],
            heading_ids: vec![Vec::new(); 7],
            gold: Some(vec![1; 7]),
        };
        let (_, g) = slstm_loss_grad(&m, &[d], &[(0, 3)], None).unwrap();
        let e = m.config.embed_dim;
        let base = m.layout().word_emb.start;
        for i in 0..7 {
            let id = i + 2;
            let row = &g[base + id * e..base + (id + 1) * e];
            assert!(row.iter().any(|&v| v != 0.0), "position {i} got no gradient");
        }
        assert!(g[base..base + e].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_dense_layer_predicts_uniform_pre() {
        let mut m = model(tiny(), 4);
        let (w, b) = m.dense_mut();
        w.iter_mut().for_each(|v| *v = 0.0);
        b.iter_mut().for_each(|v| *v = 0.0);
        let d = doc(4, 5, 8, 5);
        for t in 0..4 {
            let p = slstm_forward(&m, &d, t).unwrap();
            assert!(p.iter().all(|&v| (v - 1.0 / 6.0).abs() < 1e-12));
            assert_eq!(argmax(&p), 0);
        }
    }

    #[test]
    fn loss_conventions() {
        let mut m = model(SlstmConfig { dropout: 0.0, ..tiny() }, 5);
        let (w, b) = m.dense_mut();
        w.iter_mut().for_each(|v| *v = 0.0);
        b.iter_mut().for_each(|v| *v = 0.0);
        let d = doc(3, 6, 8, 5);
        let (loss, _) = slstm_loss_grad(&m, std::slice::from_ref(&d), &[(0, 0), (0, 1)], None).unwrap();
        assert!((loss - 6f64.ln()).abs() < 1e-12);
        let gold = d.gold.as_ref().unwrap()[0];
        let (_, b) = m.dense_mut();
        b[gold] = 1e3;
        let (loss, _) = slstm_loss_grad(&m, std::slice::from_ref(&d), &[(0, 0)], None).unwrap();
        assert!(loss < 1e-12);
        assert!(slstm_loss_grad(&m, &[d], &[], None).is_err());
    }

    #[test]
    fn window_zero_ignores_neighbours() {
        let cfg = SlstmConfig { window: 0, heading_branch: false, dropout: 0.0, ..tiny() };
        let m = model(cfg, 7);
        let mut d = doc(4, 8, 8, 5);
        let before = slstm_forward(&m, &d, 1).unwrap();
        d.sentences[0] = vec![5, 5, 5];
        d.sentences[2] = vec![3];
        assert_eq!(slstm_forward(&m, &d, 1).unwrap(), before);
        assert_eq!(m.config.input_dim(), 2 * 3);
    }

    #[test]
    fn config_checks() {
        assert!(SlstmConfig { kernel: 6, ..Default::default() }.validate().is_err());
        assert!(SlstmConfig { dropout: 1.0, ..Default::default() }.validate().is_err());
        let c = SlstmConfig::default();
        assert_eq!(c.input_dim(), 2 * 200 * 7 + 200);
        assert_eq!(SlstmConfig::blstm().input_dim(), 400);
    }
}
