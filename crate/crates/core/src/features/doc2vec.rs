//! Paragraph vectors, distributed bag-of-words variant (PV-DBOW) trained
//! with negative sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{build_vocabulary, Vocabulary};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Doc2VecConfig {
    pub dim: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub infer_steps: usize,
    pub seed: u64,
}

impl Default for Doc2VecConfig {
    fn default() -> Self {
        Doc2VecConfig {
            dim: 40,
            negatives: 5,
            epochs: 20,
            learning_rate: 0.025,
            infer_steps: 50,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocVectorModel {
    pub dim: usize,
    pub vocab: Vocabulary,
    /// Output-side word vectors, vocabulary × dim, row-major.
    pub word_vectors: Vec<f64>,
    pub infer_steps: usize,
    pub learning_rate: f64,
    pub negatives: usize,
    pub seed: u64,
    noise_cdf: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Cumulative unigram^0.75 distribution over the vocabulary.
pub(crate) fn noise_cdf(counts: &[usize]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut cdf: Vec<f64> = counts
        .iter()
        .map(|&c| {
            acc += (c as f64).powf(0.75);
            acc
        })
        .collect();
    if acc > 0.0 {
        cdf.iter_mut().for_each(|x| *x /= acc);
    }
    cdf
}

pub(crate) fn draw(cdf: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.gen();
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

/// Scaled gradient step for one (doc, word, label) pair; the doc
/// vector's share is accumulated into `doc_grad`.
fn step(doc: &[f64], row: &[f64], doc_grad: &mut [f64], label: f64, lr: f64) -> f64 {
    let dot: f64 = doc.iter().zip(row).map(|(a, b)| a * b).sum();
    let g = (label - sigmoid(dot)) * lr;
    for (acc, r) in doc_grad.iter_mut().zip(row) {
        *acc += g * r;
    }
    g
}

pub(crate) fn update(doc: &[f64], doc_grad: &mut [f64], word_vectors: &mut [f64], dim: usize, target: usize, label: f64, lr: f64) {
    let row = &mut word_vectors[target * dim..(target + 1) * dim];
    let g = step(doc, row, doc_grad, label, lr);
    for (r, d) in row.iter_mut().zip(doc) {
        *r += g * d;
    }
}

fn fnv1a(words: &[usize]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &w in words {
        for b in (w as u64).to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    }
    h
}

/// Trains word output vectors jointly with one vector per sentence.
pub fn train_doc2vec<S: AsRef<str>>(sentences: &[Vec<S>], config: &Doc2VecConfig) -> Result<DocVectorModel> {
    if config.dim < 2 {
        return Err(Error::config("doc vector dimension must be at least 2"));
    }
    let vocab = build_vocabulary(sentences.iter().flatten().map(AsRef::as_ref), 1);
    if vocab.is_empty() {
        return Err(Error::data("doc2vec training corpus is empty"));
    }
    let dim = config.dim;
    let docs: Vec<Vec<usize>> = sentences
        .iter()
        .map(|s| s.iter().filter_map(|w| vocab.get(w.as_ref())).collect())
        .collect();
    let mut counts = vec![0usize; vocab.len()];
    for &w in docs.iter().flatten() {
        counts[w] += 1;
    }
    let cdf = noise_cdf(&counts);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut doc_vectors: Vec<f64> = (0..docs.len() * dim)
        .map(|_| (rng.gen::<f64>() - 0.5) / dim as f64)
        .collect();
    let mut word_vectors = vec![0.0; vocab.len() * dim];
    let mut order: Vec<usize> = (0..docs.len()).collect();
    let total = (config.epochs * docs.len()).max(1) as f64;
    let mut seen = 0usize;
    let mut grad = vec![0.0; dim];
    for _ in 0..config.epochs {
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
        for &d in &order {
            let lr = (config.learning_rate * (1.0 - seen as f64 / total)).max(config.learning_rate * 1e-4);
            seen += 1;
            for &w in &docs[d] {
                grad.iter_mut().for_each(|g| *g = 0.0);
                let dv = &doc_vectors[d * dim..(d + 1) * dim];
                update(dv, &mut grad, &mut word_vectors, dim, w, 1.0, lr);
                for _ in 0..config.negatives {
                    let n = draw(&cdf, &mut rng);
                    if n != w {
                        update(dv, &mut grad, &mut word_vectors, dim, n, 0.0, lr);
                    }
                }
                for (x, g) in doc_vectors[d * dim..(d + 1) * dim].iter_mut().zip(&grad) {
                    *x += g;
                }
            }
        }
    }
    Ok(DocVectorModel {
        dim,
        vocab,
        word_vectors,
        infer_steps: config.infer_steps,
        learning_rate: config.learning_rate,
        negatives: config.negatives,
        seed: config.seed,
        noise_cdf: cdf,
    })
}

/// Fits a fresh vector for `tokens` with the word vectors frozen.
///
/// The result depends only on the tokens and the model. A sentence with
/// no known word maps to the zero vector.
pub fn infer_docvec<'a, I>(tokens: I, model: &DocVectorModel) -> Vec<f64>
where
    I: IntoIterator<Item = &'a str>,
{
    let dim = model.dim;
    let words: Vec<usize> = tokens.into_iter().filter_map(|t| model.vocab.get(t)).collect();
    if words.is_empty() {
        return vec![0.0; dim];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(model.seed ^ fnv1a(&words));
    let mut doc: Vec<f64> = (0..dim).map(|_| (rng.gen::<f64>() - 0.5) / dim as f64).collect();
    let mut grad = vec![0.0; dim];
    let row = |w: usize| &model.word_vectors[w * dim..(w + 1) * dim];
    let steps = model.infer_steps.max(1);
    for s in 0..steps {
        let lr = (model.learning_rate * (1.0 - s as f64 / steps as f64)).max(model.learning_rate * 1e-4);
        for &w in &words {
            grad.iter_mut().for_each(|g| *g = 0.0);
            step(&doc, row(w), &mut grad, 1.0, lr);
            for _ in 0..model.negatives {
                let n = draw(&model.noise_cdf, &mut rng);
                if n != w {
                    step(&doc, row(n), &mut grad, 0.0, lr);
                }
            }
            for (x, g) in doc.iter_mut().zip(&grad) {
                *x += g;
            }
        }
    }
    doc
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn families() -> Vec<Vec<String>> {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        (0..80)
            .map(|i| {
                let base = (i % 2) * 12;
                (0..8).map(|_| format!("w{}", base + rng.gen_range(0..12))).collect()
            })
            .collect()
    }

    fn model() -> DocVectorModel {
        let cfg = Doc2VecConfig {
            dim: 16,
            epochs: 30,
            seed: 11,
            ..Doc2VecConfig::default()
        };
        train_doc2vec(&families(), &cfg).unwrap()
    }

    #[test]
    fn inference_is_deterministic() {
        let m = model();
        let s = ["w1", "w2", "w3"];
        let a = infer_docvec(s, &m);
        let b = infer_docvec(s, &m);
        assert_eq!(a, b);
        assert!((cosine(&a, &b) - 1.0).abs() < 1e-12);
        assert!(a.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn families_cluster() {
        let m = model();
        let sents = families();
        let vecs: Vec<Vec<f64>> = sents
            .iter()
            .map(|s| infer_docvec(s.iter().map(String::as_str), &m))
            .collect();
        let (mut within, mut nw, mut cross, mut nc) = (0.0, 0, 0.0, 0);
        for i in 0..vecs.len() {
            for j in i + 1..vecs.len() {
                let c = cosine(&vecs[i], &vecs[j]);
                if i % 2 == j % 2 {
                    within += c;
                    nw += 1;
                } else {
                    cross += c;
                    nc += 1;
                }
            }
        }
        let (within, cross) = (within / nw as f64, cross / nc as f64);
        assert!(within > cross, "within {within} cross {cross}");
    }

    #[test]
    fn empty_sentence_is_zero() {
        let m = model();
        assert_eq!(infer_docvec(["unknown"], &m), vec![0.0; 16]);
        assert_eq!(Doc2VecConfig::default().dim, 40);
    }

    #[test]
    fn tiny_dimension_rejected() {
        let cfg = Doc2VecConfig {
            dim: 1,
            ..Doc2VecConfig::default()
        };
        assert!(train_doc2vec(&families(), &cfg).is_err());
    }
}
