//! Latent Dirichlet allocation by collapsed Gibbs sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{SparseVector, Vocabulary};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaConfig {
    pub topics: usize,
    /// Defaults to 50 / topics when absent.
    pub alpha: Option<f64>,
    pub beta: f64,
    pub iterations: usize,
    pub infer_iterations: usize,
    pub seed: u64,
}

impl Default for LdaConfig {
    fn default() -> Self {
        LdaConfig {
            topics: 40,
            alpha: None,
            beta: 0.01,
            iterations: 500,
            infer_iterations: 50,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicModel {
    pub topics: usize,
    pub alpha: f64,
    pub beta: f64,
    pub vocab: Vocabulary,
    /// Row-major topics × vocabulary counts.
    pub topic_word_counts: Vec<u32>,
    pub topic_totals: Vec<u64>,
    pub infer_iterations: usize,
    pub seed: u64,
}

fn sample(weights: &[f64], rng: &mut impl Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (k, &w) in weights.iter().enumerate() {
        if u < w {
            return k;
        }
        u -= w;
    }
    weights.len() - 1
}

struct Sampler<'a> {
    docs: &'a [Vec<usize>],
    k: usize,
    v: usize,
    alpha: f64,
    beta: f64,
    z: Vec<Vec<usize>>,
    doc_topic: Vec<Vec<u32>>,
    topic_word: Vec<u32>,
    topic_totals: Vec<u64>,
}

impl<'a> Sampler<'a> {
    fn new(docs: &'a [Vec<usize>], k: usize, v: usize, alpha: f64, beta: f64, rng: &mut impl Rng) -> Self {
        let mut s = Sampler {
            docs,
            k,
            v,
            alpha,
            beta,
            z: Vec::with_capacity(docs.len()),
            doc_topic: vec![vec![0; k]; docs.len()],
            topic_word: vec![0; k * v],
            topic_totals: vec![0; k],
        };
        for (d, doc) in docs.iter().enumerate() {
            let zs: Vec<usize> = doc.iter().map(|_| rng.gen_range(0..k)).collect();
            for (&w, &t) in doc.iter().zip(&zs) {
                s.doc_topic[d][t] += 1;
                s.topic_word[t * v + w] += 1;
                s.topic_totals[t] += 1;
            }
            s.z.push(zs);
        }
        s
    }

    fn sweep(&mut self, rng: &mut impl Rng, weights: &mut [f64]) {
        let vbeta = self.v as f64 * self.beta;
        for (d, doc) in self.docs.iter().enumerate() {
            for (i, &w) in doc.iter().enumerate() {
                let old = self.z[d][i];
                self.doc_topic[d][old] -= 1;
                self.topic_word[old * self.v + w] -= 1;
                self.topic_totals[old] -= 1;
                for t in 0..self.k {
                    weights[t] = (self.doc_topic[d][t] as f64 + self.alpha)
                        * (self.topic_word[t * self.v + w] as f64 + self.beta)
                        / (self.topic_totals[t] as f64 + vbeta);
                }
                let new = sample(weights, rng);
                self.z[d][i] = new;
                self.doc_topic[d][new] += 1;
                self.topic_word[new * self.v + w] += 1;
                self.topic_totals[new] += 1;
            }
        }
    }

    fn perplexity(&self) -> f64 {
        let vbeta = self.v as f64 * self.beta;
        let kalpha = self.k as f64 * self.alpha;
        let mut loglik = 0.0;
        let mut n = 0usize;
        for (d, doc) in self.docs.iter().enumerate() {
            let len = doc.len() as f64;
            for &w in doc {
                let p: f64 = (0..self.k)
                    .map(|t| {
                        (self.doc_topic[d][t] as f64 + self.alpha) / (len + kalpha)
                            * (self.topic_word[t * self.v + w] as f64 + self.beta)
                            / (self.topic_totals[t] as f64 + vbeta)
                    })
                    .sum();
                loglik += p.ln();
                n += 1;
            }
        }
        (-loglik / n as f64).exp()
    }
}

fn check(docs: &[Vec<usize>], vocab: &Vocabulary, config: &LdaConfig) -> Result<()> {
    if config.topics < 2 {
        return Err(Error::config("LDA needs at least two topics"));
    }
    if config.iterations == 0 {
        return Err(Error::config("LDA needs at least one iteration"));
    }
    if docs.iter().all(Vec::is_empty) || vocab.is_empty() {
        return Err(Error::data("LDA training corpus is empty"));
    }
    if docs.iter().flatten().any(|&w| w >= vocab.len()) {
        return Err(Error::data("LDA word id outside the vocabulary"));
    }
    Ok(())
}

/// Trains on documents given as vocabulary indices.
pub fn train_lda(docs: &[Vec<usize>], vocab: &Vocabulary, config: &LdaConfig) -> Result<TopicModel> {
    train_lda_traced(docs, vocab, config).map(|(m, _)| m)
}

/// Like [`train_lda`], also returning the held-in perplexity before the
/// first sweep and after each sweep.
pub fn train_lda_traced(
    docs: &[Vec<usize>],
    vocab: &Vocabulary,
    config: &LdaConfig,
) -> Result<(TopicModel, Vec<f64>)> {
    check(docs, vocab, config)?;
    let k = config.topics;
    let alpha = config.alpha.unwrap_or(50.0 / k as f64);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut s = Sampler::new(docs, k, vocab.len(), alpha, config.beta, &mut rng);
    let mut trace = vec![s.perplexity()];
    let mut weights = vec![0.0; k];
    for _ in 0..config.iterations {
        s.sweep(&mut rng, &mut weights);
        trace.push(s.perplexity());
    }
    let model = TopicModel {
        topics: k,
        alpha,
        beta: config.beta,
        vocab: vocab.clone(),
        topic_word_counts: s.topic_word,
        topic_totals: s.topic_totals,
        infer_iterations: config.infer_iterations,
        seed: config.seed,
    };
    Ok((model, trace))
}

fn fnv1a(ids: &[usize]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &id in ids {
        for b in (id as u64).to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    }
    h
}

impl TopicModel {
    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    /// Topic distribution of a token list under frozen topic-word counts.
    ///
    /// θ is averaged over the second half of the sweeps. Sentences with no
    /// in-vocabulary token get the uniform distribution.
    pub fn infer(&self, words: &[usize], iterations: usize, seed: u64) -> Vec<f64> {
        let k = self.topics;
        if words.is_empty() {
            return vec![1.0 / k as f64; k];
        }
        let v = self.vocab_size();
        let vbeta = v as f64 * self.beta;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(words));
        let mut z: Vec<usize> = words.iter().map(|_| rng.gen_range(0..k)).collect();
        let mut counts = vec![0u32; k];
        for &t in &z {
            counts[t] += 1;
        }
        let mut weights = vec![0.0; k];
        let iterations = iterations.max(1);
        let burn = iterations / 2;
        let mut acc = vec![0.0; k];
        let mut kept = 0usize;
        for it in 0..iterations {
            for (i, &w) in words.iter().enumerate() {
                counts[z[i]] -= 1;
                for t in 0..k {
                    weights[t] = (counts[t] as f64 + self.alpha)
                        * (self.topic_word_counts[t * v + w] as f64 + self.beta)
                        / (self.topic_totals[t] as f64 + vbeta);
                }
                z[i] = sample(&weights, &mut rng);
                counts[z[i]] += 1;
            }
            if it >= burn {
                for t in 0..k {
                    acc[t] += counts[t] as f64;
                }
                kept += 1;
            }
        }
        let denom = kept as f64 * (words.len() as f64 + k as f64 * self.alpha);
        let mut theta: Vec<f64> = acc
            .iter()
            .map(|&c| (c + kept as f64 * self.alpha) / denom)
            .collect();
        let sum: f64 = theta.iter().sum();
        theta.iter_mut().for_each(|x| *x /= sum);
        theta
    }

    pub fn word_ids<'a, I: IntoIterator<Item = &'a str>>(&self, tokens: I) -> Vec<usize> {
        tokens.into_iter().filter_map(|t| self.vocab.get(t)).collect()
    }
}

/// The sentence's inferred topic distribution as a K-dimensional vector.
pub fn lda_features<'a, I>(tokens: I, model: &TopicModel, infer_iters: usize, seed: u64) -> SparseVector
where
    I: IntoIterator<Item = &'a str>,
{
    let ids = model.word_ids(tokens);
    SparseVector::from_dense(&model.infer(&ids, infer_iters, seed))
}
