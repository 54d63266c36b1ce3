//! Skip-gram word embeddings and the plain-text embedding format.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{build_vocabulary, draw_noise, noise_cdf, sgns_update, Vocabulary};

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";
pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;

/// `V × E` vectors; row 0 is padding and stays zero, row 1 is the
/// unknown-word vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTable {
    pub vocab: Vocabulary,
    pub dim: usize,
    pub vectors: Vec<f64>,
    pub trainable: bool,
}

impl EmbeddingTable {
    /// Table over `words` (pad and unk are prepended) with zero vectors.
    pub fn zeros<S: AsRef<str>>(words: &[S], dim: usize) -> Self {
        let mut all = vec![PAD.to_string(), UNK.to_string()];
        all.extend(words.iter().map(|w| w.as_ref().to_string()));
        let n = all.len();
        EmbeddingTable {
            vocab: Vocabulary::from(all),
            dim,
            vectors: vec![0.0; n * dim],
            trainable: true,
        }
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() <= 2
    }

    pub fn row(&self, id: usize) -> &[f64] {
        &self.vectors[id * self.dim..(id + 1) * self.dim]
    }

    pub fn id(&self, word: &str) -> u32 {
        self.vocab.get(word).map_or(UNK_ID, |i| i as u32)
    }

    /// `V E` header, then `word v1 … vE` per real word.
    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{} {}", self.len() - 2, self.dim)?;
        for (i, w) in self.vocab.words().iter().enumerate().skip(2) {
            write!(out, "{w}")?;
            for v in self.row(i) {
                write!(out, " {v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(f);
        self.write(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            path: origin.to_string(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| err(1, "missing `V E` header".into()))?;
        let nums: Vec<usize> = header
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| err(1, format!("bad header `{header}`")))?;
        let [v, dim] = nums[..] else {
            return Err(err(1, format!("bad header `{header}`")));
        };
        if dim == 0 {
            return Err(err(1, "dimension must be positive".into()));
        }
        let mut words = Vec::with_capacity(v);
        let mut rows = Vec::with_capacity(v * dim);
        for (i, line) in lines {
            let mut parts = line.split_whitespace();
            let word = parts.next().expect("non-blank line");
            let vals: Vec<f64> = parts
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| err(i + 1, "non-numeric vector entry".into()))?;
            if vals.len() != dim {
                return Err(err(i + 1, format!("expected {dim} values, found {}", vals.len())));
            }
            words.push(word.to_string());
            rows.extend(vals);
        }
        if words.len() != v {
            return Err(err(1, format!("header promises {v} words, found {}", words.len())));
        }
        let mut t = EmbeddingTable::zeros(&words, dim);
        let before = t.len();
        t.vectors[2 * dim..].copy_from_slice(&rows);
        if t.vocab.len() != before || t.vocab.len() != v + 2 {
            return Err(err(1, "duplicate or reserved words in embedding file".into()));
        }
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub min_count: usize,
    pub seed: u64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            dim: 200,
            window: 5,
            negatives: 5,
            epochs: 5,
            learning_rate: 0.025,
            min_count: 1,
            seed: 0,
        }
    }
}

/// Skip-gram with negative sampling; the input vectors become the table.
pub fn train_word_embeddings<S: AsRef<str>>(sentences: &[Vec<S>], config: &EmbeddingConfig) -> Result<EmbeddingTable> {
    if config.dim < 2 {
        return Err(Error::config("embedding dimension must be at least 2"));
    }
    let vocab = build_vocabulary(sentences.iter().flatten().map(AsRef::as_ref), config.min_count);
    if vocab.is_empty() {
        return Err(Error::data("cannot train embeddings on an empty corpus"));
    }
    let mut table = EmbeddingTable::zeros(vocab.words(), config.dim);
    let dim = config.dim;
    let ids: Vec<Vec<usize>> = sentences
        .iter()
        .map(|s| s.iter().filter_map(|w| table.vocab.get(w.as_ref())).collect())
        .collect();
    let mut counts = vec![0usize; table.len()];
    for &id in ids.iter().flatten() {
        counts[id] += 1;
    }
    let cdf = noise_cdf(&counts);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for v in table.vectors[2 * dim..].iter_mut() {
        *v = (rng.gen::<f64>() - 0.5) / dim as f64;
    }
    let mut output = vec![0.0; table.len() * dim];
    let total = (config.epochs * ids.iter().map(Vec::len).sum::<usize>()).max(1);
    let mut seen = 0usize;
    let mut grad = vec![0.0; dim];
    for _ in 0..config.epochs {
        for sent in &ids {
            for (pos, &center) in sent.iter().enumerate() {
                let lr = (config.learning_rate * (1.0 - seen as f64 / total as f64)).max(config.learning_rate * 1e-4);
                seen += 1;
                let reach = rng.gen_range(1..=config.window.max(1));
                let lo = pos.saturating_sub(reach);
                let hi = (pos + reach).min(sent.len() - 1);
                for (cpos, &ctx) in sent.iter().enumerate().take(hi + 1).skip(lo) {
                    if cpos == pos {
                        continue;
                    }
                    grad.iter_mut().for_each(|g| *g = 0.0);
                    let input = table.vectors[center * dim..(center + 1) * dim].to_vec();
                    sgns_update(&input, &mut grad, &mut output, dim, ctx, 1.0, lr);
                    for _ in 0..config.negatives {
                        let neg = draw_noise(&cdf, &mut rng);
                        if neg != ctx {
                            sgns_update(&input, &mut grad, &mut output, dim, neg, 0.0, lr);
                        }
                    }
                    for (v, g) in table.vectors[center * dim..(center + 1) * dim].iter_mut().zip(&grad) {
                        *v += g;
                    }
                }
            }
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::cosine;

    #[test]
    fn planted_pair_is_closer_than_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let fillers: Vec<String> = (0..40).map(|i| format!("w{i}")).collect();
        let mut sentences = Vec::new();
        for _ in 0..400 {
            let mut s: Vec<String> = (0..6).map(|_| fillers[rng.gen_range(0..40)].clone()).collect();
            if rng.gen_bool(0.5) {
                let at = rng.gen_range(0..5);
                let mid = if rng.gen_bool(0.5) { "甲" } else { "乙" };
                s.splice(at..at, ["丙", mid, "丁"].map(String::from));
            }
            sentences.push(s);
        }
        let cfg = EmbeddingConfig { dim: 16, epochs: 5, seed: 1, ..Default::default() };
        let t = train_word_embeddings(&sentences, &cfg).unwrap();
        let v = |w: &str| t.row(t.id(w) as usize).to_vec();
        let planted = cosine(&v("甲"), &v("乙"));
        let mut random: Vec<f64> = (0..40)
            .flat_map(|i| (i + 1..40).map(move |j| (i, j)))
            .map(|(i, j)| cosine(&v(&fillers[i]), &v(&fillers[j])))
            .collect();
        random.sort_by(f64::total_cmp);
        assert!(planted > random[random.len() / 2], "{planted}");
        assert!(t.row(0).iter().all(|&x| x == 0.0));
        assert_eq!(t.dim, 16);
    }

    #[test]
    fn text_round_trip() {
        let mut t = EmbeddingTable::zeros(&["哮喘", "大椎"], 2);
        t.vectors[4..].copy_from_slice(&[0.5, -1.25, 3.0, 1e-7]);
        let mut buf = Vec::new();
        t.write(&mut buf).unwrap();
        let back = EmbeddingTable::parse(std::str::from_utf8(&buf).unwrap(), "mem").unwrap();
        assert_eq!(back, t);
        assert!(EmbeddingTable::parse("1 2\nx 1.0\n", "mem").is_err());
    }

    #[test]
    fn degenerate_inputs() {
        let empty: Vec<Vec<&str>> = vec![vec![]];
        assert!(train_word_embeddings(&empty, &EmbeddingConfig::default()).is_err());
        let cfg = EmbeddingConfig { dim: 1, ..Default::default() };
        assert!(train_word_embeddings(&[vec!["a"]], &cfg).is_err());
        assert_eq!(EmbeddingConfig::default().dim, 200);
    }
}
