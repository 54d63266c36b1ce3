//! Seeded synthetic corpora with a Markov label structure.
//!
//! Each label owns a pool of signal words; every sentence mixes a few of
//! them (with probability `signal_prob`) with words from a shared noise
//! pool. Sentences carrying no signal can only be labeled from context,
//! which is what makes the corpus neighbor-dependent.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{link_headings, Corpus, Document, SectionLabel, Sentence};
use crate::error::{Error, Result};
use crate::segmentation::{Lexicon, LexiconEntry, PosInventory};

/// Row-stochastic first-order transition matrix over [`SectionLabel`].
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionTable(pub [[f64; 6]; 6]);

impl TransitionTable {
    pub fn validate(&self) -> Result<()> {
        for (i, row) in self.0.iter().enumerate() {
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(Error::InvalidTransitions(format!(
                    "row {i} has a negative or non-finite entry"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidTransitions(format!("row {i} sums to {sum}")));
            }
        }
        Ok(())
    }

    /// Strict Pre → Subject → Method → Result → After progression.
    pub fn strict_order() -> Self {
        let mut t = [[0.0; 6]; 6];
        t[0][1] = 1.0;
        t[1][2] = 1.0;
        t[2][3] = 1.0;
        t[3][4] = 1.0;
        t[4][4] = 1.0;
        t[5][5] = 1.0;
        TransitionTable(t)
    }

    /// Every row equal to `row`; labels are then i.i.d. after the start.
    pub fn iid(row: [f64; 6]) -> Self {
        TransitionTable([row; 6])
    }

    pub fn next(&self, from: SectionLabel, rng: &mut impl Rng) -> SectionLabel {
        let row = &self.0[from.index()];
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (i, p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return SectionLabel::ALL[i];
            }
        }
        // rounding slack: fall back to the last label with mass
        let last = row.iter().rposition(|&p| p > 0.0).unwrap_or(from.index());
        SectionLabel::ALL[last]
    }
}

impl Default for TransitionTable {
    /// Blocks of Pre, Subject, Method, Result, After in that order.
    fn default() -> Self {
        TransitionTable([
            [0.6, 0.4, 0.0, 0.0, 0.0, 0.0],
            [0.0, 0.7, 0.3, 0.0, 0.0, 0.0],
            [0.0, 0.0, 0.75, 0.25, 0.0, 0.0],
            [0.0, 0.0, 0.0, 0.7, 0.3, 0.0],
            [0.0, 0.0, 0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 0.0, 0.0, 1.0],
        ])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_docs: usize,
    pub transitions: TransitionTable,
    /// Inclusive range of body sentences per document.
    pub sentences_per_doc: (usize, usize),
    pub signal_words_per_label: usize,
    pub noise_words: usize,
    pub heading_words_per_label: usize,
    pub signal_prob: f64,
    pub words_per_sentence: (usize, usize),
    pub signal_words_per_sentence: (usize, usize),
    /// Probability that a document carries section headings.
    pub heading_prob: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            n_docs: 371,
            transitions: TransitionTable::default(),
            sentences_per_doc: (10, 20),
            signal_words_per_label: 10,
            noise_words: 60,
            heading_words_per_label: 4,
            signal_prob: 0.9,
            words_per_sentence: (4, 8),
            signal_words_per_sentence: (1, 2),
            heading_prob: 0.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub corpus: Corpus,
    /// Covers every generated word, so segmentation recovers them exactly.
    pub lexicon: Lexicon,
    pub signal_words: Vec<(String, SectionLabel)>,
    pub heading_words: Vec<(String, SectionLabel)>,
    pub noise_words: Vec<String>,
}

struct WordMint(u32);

impl WordMint {
    // Two-character words whose first character always sits at an even
    // offset; no pair straddling a word boundary is itself a word.
    fn next(&mut self) -> String {
        let base = 0x4E00 + 2 * self.0;
        self.0 += 1;
        [base, base + 1]
            .into_iter()
            .map(|c| char::from_u32(c).expect("CJK range"))
            .collect()
    }
}

const SIGNAL_TAGS: [&str; 5] = ["n", "v", "a", "vn", "d"];
const NOISE_TAGS: [&str; 6] = ["n", "v", "d", "p", "r", "c"];

fn check_range(name: &str, (lo, hi): (usize, usize), min: usize) -> Result<()> {
    if lo < min || lo > hi {
        return Err(Error::config(format!("{name}: bad range {lo}..={hi}")));
    }
    Ok(())
}

/// Generates a labeled corpus deterministically from `config.seed`.
pub fn generate_synthetic_corpus(config: &SynthConfig) -> Result<SyntheticCorpus> {
    config.transitions.validate()?;
    check_range("sentences_per_doc", config.sentences_per_doc, 1)?;
    check_range("words_per_sentence", config.words_per_sentence, 1)?;
    check_range("signal_words_per_sentence", config.signal_words_per_sentence, 0)?;
    if config.noise_words == 0 || config.signal_words_per_label == 0 {
        return Err(Error::config("word pools must be non-empty"));
    }
    if config.heading_words_per_label == 0 && config.heading_prob > 0.0 {
        return Err(Error::config("headings requested without heading words"));
    }
    if !(0.0..=1.0).contains(&config.signal_prob) || !(0.0..=1.0).contains(&config.heading_prob) {
        return Err(Error::config("probabilities must lie in [0, 1]"));
    }

    let mut mint = WordMint(0);
    let signal: Vec<Vec<String>> = SectionLabel::ALL
        .iter()
        .map(|_| (0..config.signal_words_per_label).map(|_| mint.next()).collect())
        .collect();
    let heading: Vec<Vec<String>> = SectionLabel::ALL
        .iter()
        .map(|_| (0..config.heading_words_per_label).map(|_| mint.next()).collect())
        .collect();
    let noise: Vec<String> = (0..config.noise_words).map(|_| mint.next()).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    let mut documents = Vec::with_capacity(config.n_docs);
    let width = config.n_docs.to_string().len().max(4);

    for d in 0..config.n_docs {
        let n = rng.gen_range(config.sentences_per_doc.0..=config.sentences_per_doc.1);
        let mut labels = Vec::with_capacity(n);
        let mut label = SectionLabel::Pre;
        for i in 0..n {
            if i > 0 {
                label = config.transitions.next(label, &mut rng);
            }
            labels.push(label);
        }
        let with_headings = rng.gen_bool(config.heading_prob);

        let mut sentences: Vec<Sentence> = Vec::new();
        let mut paragraph = 0usize;
        for (i, &label) in labels.iter().enumerate() {
            let block_start = i == 0 || labels[i - 1] != label;
            if block_start && i > 0 {
                paragraph += 1;
            } else if i > 0 && rng.gen_bool(0.25) {
                paragraph += 1;
            }
            if block_start && with_headings {
                let pool = &heading[label.index()];
                let a = pool.choose(&mut rng).unwrap();
                let b = pool.choose(&mut rng).unwrap();
                let text = format!("{a}{b}");
                *counts.entry(a.clone()).or_default() += 1;
                *counts.entry(b.clone()).or_default() += 1;
                let mut s = Sentence::new(text, sentences.len(), paragraph);
                s.is_heading = true;
                s.gold_label = Some(SectionLabel::Other);
                sentences.push(s);
                paragraph += 1;
            }
            let len = rng.gen_range(config.words_per_sentence.0..=config.words_per_sentence.1);
            let mut words: Vec<&String> = Vec::with_capacity(len);
            if rng.gen_bool(config.signal_prob) {
                let (lo, hi) = config.signal_words_per_sentence;
                let k = rng.gen_range(lo..=hi).min(len);
                for _ in 0..k {
                    words.push(signal[label.index()].choose(&mut rng).unwrap());
                }
            }
            while words.len() < len {
                words.push(noise.choose(&mut rng).unwrap());
            }
            words.shuffle(&mut rng);
            let mut text = String::new();
            for w in words {
                *counts.entry(w.clone()).or_default() += 1;
                text.push_str(w);
            }
            text.push('。');
            let mut s = Sentence::new(text, sentences.len(), paragraph);
            s.gold_label = Some(label);
            sentences.push(s);
        }
        let mut doc = Document {
            id: format!("synth-{d:0width$}"),
            title: format!("synthetic document {d}"),
            sentences,
            source_meta: None,
        };
        link_headings(&mut doc);
        documents.push(doc);
    }

    let mut entries = Vec::new();
    let push_pool = |pool: &[String], tags: &[&str], entries: &mut Vec<LexiconEntry>| {
        for (i, w) in pool.iter().enumerate() {
            entries.push(LexiconEntry {
                word: w.clone(),
                pos: tags[i % tags.len()].to_string(),
                frequency: counts.get(w).copied().unwrap_or(0).max(1),
            });
        }
    };
    for pool in &signal {
        push_pool(pool, &SIGNAL_TAGS, &mut entries);
    }
    for pool in &heading {
        push_pool(pool, &["n"], &mut entries);
    }
    push_pool(&noise, &NOISE_TAGS, &mut entries);
    let lexicon = Lexicon::from_entries(PosInventory::default(), entries)?;

    let tag = |pools: &[Vec<String>]| -> Vec<(String, SectionLabel)> {
        pools
            .iter()
            .zip(SectionLabel::ALL)
            .flat_map(|(pool, l)| pool.iter().map(move |w| (w.clone(), l)))
            .collect()
    };
    Ok(SyntheticCorpus {
        corpus: Corpus::new(documents)?,
        lexicon,
        signal_words: tag(&signal),
        heading_words: tag(&heading),
        noise_words: noise,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{detect_headings, split_sentences, validate_labels, write_corpus};
    use crate::segmentation::segment_words;

    fn small(seed: u64) -> SynthConfig {
        SynthConfig {
            seed,
            n_docs: 30,
            ..SynthConfig::default()
        }
    }

    fn bytes(c: &Corpus) -> Vec<u8> {
        let mut b = Vec::new();
        write_corpus(c, &mut b).unwrap();
        b
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = generate_synthetic_corpus(&small(7)).unwrap();
        let b = generate_synthetic_corpus(&small(7)).unwrap();
        assert_eq!(bytes(&a.corpus), bytes(&b.corpus));
        assert_eq!(a.lexicon.to_tsv(), b.lexicon.to_tsv());
        let c = generate_synthetic_corpus(&small(8)).unwrap();
        assert_ne!(bytes(&a.corpus), bytes(&c.corpus));
    }

    #[test]
    fn strict_table_gives_canonical_order() {
        let cfg = SynthConfig {
            transitions: TransitionTable::strict_order(),
            sentences_per_doc: (5, 9),
            heading_prob: 0.0,
            ..small(3)
        };
        let s = generate_synthetic_corpus(&cfg).unwrap();
        use SectionLabel::*;
        for doc in &s.corpus.documents {
            let labels = doc.gold_labels().unwrap();
            let mut expect = vec![Pre, Subject, Method, Result];
            expect.resize(labels.len(), After);
            assert_eq!(labels, expect);
        }
    }

    #[test]
    fn paper_scale_document_count() {
        let s = generate_synthetic_corpus(&SynthConfig::default()).unwrap();
        assert_eq!(s.corpus.documents.len(), 371);
        assert!(s.corpus.is_labeled());
    }

    #[test]
    fn invalid_table_is_rejected() {
        let mut t = TransitionTable::default();
        t.0[2][2] = 0.9;
        let cfg = SynthConfig {
            transitions: t,
            ..small(1)
        };
        assert!(matches!(
            generate_synthetic_corpus(&cfg),
            Err(Error::InvalidTransitions(_))
        ));
    }

    #[test]
    fn documents_are_consistent_with_the_pipeline() {
        let s = generate_synthetic_corpus(&small(11)).unwrap();
        let mut saw_heading = false;
        for doc in &s.corpus.documents {
            doc.check().unwrap();
            assert!(validate_labels(doc).unwrap().is_empty());
            // re-splitting the paragraphs reproduces the sentences
            let mut paras: Vec<String> = Vec::new();
            for sent in &doc.sentences {
                if sent.paragraph_index == paras.len() {
                    paras.push(String::new());
                }
                paras[sent.paragraph_index].push_str(&sent.text);
            }
            let resplit = split_sentences(&paras).unwrap();
            let texts: Vec<_> = resplit.iter().map(|s| &s.text).collect();
            let orig: Vec<_> = doc.sentences.iter().map(|s| &s.text).collect();
            assert_eq!(texts, orig);
            // the heading heuristic agrees with the generator
            let counts: Vec<usize> = doc
                .sentences
                .iter()
                .map(|x| segment_words(&x.text, &s.lexicon).len())
                .collect();
            let detected = detect_headings(doc, &counts).unwrap();
            assert_eq!(&detected, doc);
            saw_heading |= doc.sentences.iter().any(|x| x.is_heading);
        }
        assert!(saw_heading);
    }

    #[test]
    fn iid_marginals_match_the_chain() {
        // every row equal: labels after the first are independent draws
        let row = [0.1, 0.3, 0.2, 0.25, 0.1, 0.05];
        let cfg = SynthConfig {
            seed: 5,
            n_docs: 400,
            transitions: TransitionTable::iid(row),
            heading_prob: 0.0,
            ..SynthConfig::default()
        };
        let s = generate_synthetic_corpus(&cfg).unwrap();
        let mut counts = [0usize; 6];
        let mut total = 0usize;
        for doc in &s.corpus.documents {
            for l in &doc.gold_labels().unwrap()[1..] {
                counts[l.index()] += 1;
                total += 1;
            }
        }
        for (i, &p) in row.iter().enumerate() {
            let expected = p * total as f64;
            let sigma = (total as f64 * p * (1.0 - p)).sqrt();
            let dev = (counts[i] as f64 - expected).abs();
            assert!(dev <= 3.0 * sigma, "label {i}: {} vs {expected} (σ {sigma})", counts[i]);
        }
    }
}
