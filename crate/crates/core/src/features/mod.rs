//! Per-sentence feature vectors.
//!
//! Seven families: bag-of-words, word/POS pairs, LDA topic mixture,
//! paragraph vector, heading bag-of-words, relative position and length.
//! All families share one [`FeatureSpace`] whose layout is fixed by the
//! family order above.

mod doc2vec;
mod lda;
mod sparse;
mod vocab;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::annotate::AnnotatedDocument;
use crate::error::{Error, Result};
use crate::segmentation::Token;

pub use doc2vec::{cosine, infer_docvec, train_doc2vec, Doc2VecConfig, DocVectorModel};
pub(crate) use doc2vec::{draw as draw_noise, noise_cdf, update as sgns_update};
pub use lda::{lda_features, train_lda, train_lda_traced, LdaConfig, TopicModel};
pub use sparse::SparseVector;
pub use vocab::{build_vocabulary, Vocabulary};

/// Names of the structural features.
pub const LOCATION: &str = "loc";
pub const LEN_CHAR: &str = "len_char";
pub const LEN_WORD: &str = "len_word";

/// Named, contiguous feature dimensions.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct FeatureSpace {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for FeatureSpace {
    fn from(names: Vec<String>) -> Self {
        let index = names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        FeatureSpace { names, index }
    }
}

impl From<FeatureSpace> for Vec<String> {
    fn from(s: FeatureSpace) -> Self {
        s.names
    }
}

impl FeatureSpace {
    pub fn new(names: Vec<String>) -> Result<Self> {
        let space = FeatureSpace::from(names);
        if space.index.len() != space.names.len() {
            return Err(Error::data("duplicate feature name"));
        }
        Ok(space)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, dim: usize) -> &str {
        &self.names[dim]
    }

    pub fn dim(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// One feature name per line.
    pub fn to_text(&self) -> String {
        self.names.iter().map(|n| format!("{n}\n")).collect()
    }
}

fn count_into<'a, I: IntoIterator<Item = &'a str>>(words: I, vocab: &Vocabulary) -> SparseVector {
    let mut counts: HashMap<usize, usize> = HashMap::new();
    for w in words {
        if let Some(d) = vocab.get(w) {
            *counts.entry(d).or_default() += 1;
        }
    }
    SparseVector::from_counts(counts)
}

/// Raw in-sentence counts over `vocab`; unknown words are ignored.
pub fn bow_features<'a, I: IntoIterator<Item = &'a str>>(tokens: I, vocab: &Vocabulary) -> SparseVector {
    count_into(tokens, vocab)
}

pub fn pos_key(token: &Token) -> String {
    format!("{}/{}", token.surface, token.pos)
}

/// Counts of word/tag pairs.
pub fn pos_features(tokens: &[Token], pos_vocab: &Vocabulary) -> SparseVector {
    let keys: Vec<String> = tokens.iter().map(pos_key).collect();
    count_into(keys.iter().map(String::as_str), pos_vocab)
}

/// Bag-of-words over the tokens of the governing heading.
pub fn heading_features(doc: &AnnotatedDocument, i: usize, heading_vocab: &Vocabulary) -> SparseVector {
    match doc.heading_tokens(i) {
        Some(tokens) => count_into(tokens.iter().map(|t| t.surface.as_str()), heading_vocab),
        None => SparseVector::new(),
    }
}

/// i / (n − 1), or 0 for a one-sentence document.
pub fn position_feature(i: usize, n: usize) -> Result<f64> {
    if i >= n {
        return Err(Error::data(format!("sentence index {i} outside document of {n}")));
    }
    Ok(if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 })
}

/// (Unicode scalar count, token count).
pub fn length_features(text: &str, tokens: &[Token]) -> (usize, usize) {
    (text.chars().count(), tokens.len())
}

/// Which feature families are switched on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub bow: bool,
    pub pos: bool,
    pub lda: bool,
    pub doc2vec: bool,
    pub heading: bool,
    pub position: bool,
    pub length: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig::all()
    }
}

impl FeatureConfig {
    pub fn all() -> Self {
        FeatureConfig {
            bow: true,
            pos: true,
            lda: true,
            doc2vec: true,
            heading: true,
            position: true,
            length: true,
        }
    }

    pub fn none() -> Self {
        FeatureConfig {
            bow: false,
            pos: false,
            lda: false,
            doc2vec: false,
            heading: false,
            position: false,
            length: false,
        }
    }

    /// Everything except the two trained families.
    pub fn counts_only() -> Self {
        FeatureConfig {
            lda: false,
            doc2vec: false,
            ..FeatureConfig::all()
        }
    }

    /// Parses a comma-separated family list such as `bow,pos,heading`.
    pub fn parse_list(list: &str) -> Result<Self> {
        let mut cfg = FeatureConfig::none();
        for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match name {
                "all" => cfg = FeatureConfig::all(),
                "bow" => cfg.bow = true,
                "pos" => cfg.pos = true,
                "lda" => cfg.lda = true,
                "d2v" | "doc2vec" => cfg.doc2vec = true,
                "head" | "heading" => cfg.heading = true,
                "loc" | "position" => cfg.position = true,
                "len" | "length" => cfg.length = true,
                other => return Err(Error::config(format!("unknown feature family `{other}`"))),
            }
        }
        Ok(cfg)
    }
}

/// The trained sub-models some families depend on.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureModels {
    pub lda: Option<TopicModel>,
    pub doc2vec: Option<DocVectorModel>,
}

/// Settings for fitting a [`FeatureExtractor`] from scratch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSettings {
    pub families: FeatureConfig,
    pub min_count: usize,
    pub lda: LdaConfig,
    pub doc2vec: Doc2VecConfig,
}

impl Default for FeatureSettings {
    fn default() -> Self {
        FeatureSettings {
            families: FeatureConfig::all(),
            min_count: 1,
            lda: LdaConfig::default(),
            doc2vec: Doc2VecConfig::default(),
        }
    }
}

fn all_surfaces(docs: &[AnnotatedDocument]) -> impl Iterator<Item = &str> {
    docs.iter()
        .flat_map(|d| d.tokens.iter().flatten())
        .map(|t| t.surface.as_str())
}

/// Trains whichever of LDA and the paragraph-vector model `settings`
/// enables.
pub fn train_feature_models(docs: &[AnnotatedDocument], settings: &FeatureSettings) -> Result<FeatureModels> {
    let mut models = FeatureModels::default();
    if settings.families.lda {
        let vocab = build_vocabulary(all_surfaces(docs), settings.min_count);
        let ids: Vec<Vec<usize>> = docs
            .iter()
            .flat_map(|d| d.tokens.iter())
            .map(|s| s.iter().filter_map(|t| vocab.get(&t.surface)).collect())
            .collect();
        models.lda = Some(train_lda(&ids, &vocab, &settings.lda)?);
    }
    if settings.families.doc2vec {
        let sentences: Vec<Vec<&str>> = docs
            .iter()
            .flat_map(|d| d.tokens.iter())
            .map(|s| s.iter().map(|t| t.surface.as_str()).collect())
            .collect();
        models.doc2vec = Some(train_doc2vec(&sentences, &settings.doc2vec)?);
    }
    Ok(models)
}

/// Fitted vocabularies and sub-models mapping sentences into one space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureExtractor {
    pub config: FeatureConfig,
    pub bow_vocab: Vocabulary,
    pub pos_vocab: Vocabulary,
    pub heading_vocab: Vocabulary,
    pub models: FeatureModels,
    space: FeatureSpace,
}

impl FeatureExtractor {
    /// Builds vocabularies from `docs`. Trained families require their
    /// model in `models`.
    pub fn fit(
        docs: &[AnnotatedDocument],
        config: FeatureConfig,
        models: FeatureModels,
        min_count: usize,
    ) -> Result<Self> {
        if config.lda && models.lda.is_none() {
            return Err(Error::config("LDA features enabled without a trained topic model"));
        }
        if config.doc2vec && models.doc2vec.is_none() {
            return Err(Error::config("doc2vec features enabled without a trained model"));
        }
        let empty = Vocabulary::default();
        let bow_vocab = if config.bow {
            build_vocabulary(all_surfaces(docs), min_count)
        } else {
            empty.clone()
        };
        let pos_vocab = if config.pos {
            let keys: Vec<String> = docs
                .iter()
                .flat_map(|d| d.tokens.iter().flatten())
                .map(pos_key)
                .collect();
            build_vocabulary(keys.iter(), min_count)
        } else {
            empty.clone()
        };
        let heading_vocab = if config.heading {
            build_vocabulary(
                docs.iter().flat_map(|d| {
                    d.document
                        .sentences
                        .iter()
                        .filter(|s| s.is_heading)
                        .flat_map(move |s| d.surfaces(s.index))
                }),
                min_count,
            )
        } else {
            empty
        };

        let mut names: Vec<String> = Vec::new();
        names.extend(bow_vocab.words().iter().map(|w| format!("bow:{w}")));
        names.extend(pos_vocab.words().iter().map(|w| format!("pos:{w}")));
        if config.lda {
            let k = models.lda.as_ref().map_or(0, |m| m.topics);
            names.extend((0..k).map(|t| format!("lda:{t}")));
        }
        if config.doc2vec {
            let dim = models.doc2vec.as_ref().map_or(0, |m| m.dim);
            names.extend((0..dim).map(|j| format!("d2v:{j}")));
        }
        names.extend(heading_vocab.words().iter().map(|w| format!("head:{w}")));
        if config.position {
            names.push(LOCATION.into());
        }
        if config.length {
            names.push(LEN_CHAR.into());
            names.push(LEN_WORD.into());
        }
        let space = FeatureSpace::new(names)?;
        let models = FeatureModels {
            lda: models.lda.filter(|_| config.lda),
            doc2vec: models.doc2vec.filter(|_| config.doc2vec),
        };
        Ok(FeatureExtractor {
            config,
            bow_vocab,
            pos_vocab,
            heading_vocab,
            models,
            space,
        })
    }

    pub fn space(&self) -> &FeatureSpace {
        &self.space
    }

    /// One vector per sentence, in sentence order.
    pub fn transform(&self, doc: &AnnotatedDocument) -> Vec<SparseVector> {
        let n = doc.len();
        (0..n).map(|i| self.sentence_vector(doc, i)).collect()
    }

    fn sentence_vector(&self, doc: &AnnotatedDocument, i: usize) -> SparseVector {
        let tokens = &doc.tokens[i];
        let surfaces = || tokens.iter().map(|t| t.surface.as_str());
        let mut pairs: Vec<(usize, f64)> = Vec::new();
        let mut offset = 0;
        if self.config.bow {
            bow_features(surfaces(), &self.bow_vocab).append_shifted(offset, &mut pairs);
            offset += self.bow_vocab.len();
        }
        if self.config.pos {
            pos_features(tokens, &self.pos_vocab).append_shifted(offset, &mut pairs);
            offset += self.pos_vocab.len();
        }
        if let Some(m) = &self.models.lda {
            lda_features(surfaces(), m, m.infer_iterations, m.seed).append_shifted(offset, &mut pairs);
            offset += m.topics;
        }
        if let Some(m) = &self.models.doc2vec {
            SparseVector::from_dense(&infer_docvec(surfaces(), m)).append_shifted(offset, &mut pairs);
            offset += m.dim;
        }
        if self.config.heading {
            heading_features(doc, i, &self.heading_vocab).append_shifted(offset, &mut pairs);
            offset += self.heading_vocab.len();
        }
        if self.config.position {
            let loc = position_feature(i, doc.len()).expect("index within document");
            if loc != 0.0 {
                pairs.push((offset, loc));
            }
            offset += 1;
        }
        if self.config.length {
            let (chars, words) = length_features(&doc.document.sentences[i].text, tokens);
            for (j, v) in [chars, words].into_iter().enumerate() {
                if v != 0 {
                    pairs.push((offset + j, v as f64));
                }
            }
        }
        SparseVector::from_sorted_unchecked(pairs)
    }
}

/// Fits on `docs` and featurizes them in one step.
pub fn assemble_features(
    docs: &[AnnotatedDocument],
    config: FeatureConfig,
    models: FeatureModels,
) -> Result<(FeatureSpace, Vec<Vec<SparseVector>>)> {
    let ex = FeatureExtractor::fit(docs, config, models, 1)?;
    let vectors = docs.iter().map(|d| ex.transform(d)).collect();
    Ok((ex.space, vectors))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotate::annotate_corpus;
    use crate::corpus::{generate_synthetic_corpus, Corpus, Document, SynthConfig};
    use crate::segmentation::{Lexicon, LexiconEntry, PosInventory};

    fn lexicon(words: &[(&str, &str)]) -> Lexicon {
        Lexicon::from_entries(
            PosInventory::default(),
            words.iter().map(|(w, p)| LexiconEntry {
                word: w.to_string(),
                pos: p.to_string(),
                frequency: 1,
            }),
        )
        .unwrap()
    }

    fn sample_docs() -> Vec<AnnotatedDocument> {
        let lex = lexicon(&[("治疗", "v"), ("方法", "n"), ("哮喘", "n"), ("患者", "n"), ("报告", "v"), ("如下", "v")]);
        let doc = Document::from_paragraphs(
            "a",
            "",
            &["现报告如下。", "治疗方法", "治疗治疗哮喘。患者。"],
        )
        .unwrap();
        annotate_corpus(&Corpus::new(vec![doc]).unwrap(), &lex).unwrap()
    }

    #[test]
    fn bow_counts() {
        let vocab = build_vocabulary(["治疗", "哮喘", "患者"], 1);
        let v = bow_features(["治疗", "治疗", "哮喘"], &vocab);
        assert_eq!(v.get(vocab.get("治疗").unwrap()), 2.0);
        assert_eq!(v.get(vocab.get("哮喘").unwrap()), 1.0);
        assert_eq!(v.len(), 2);
        assert!(bow_features(["新词"], &vocab).is_empty());
    }

    #[test]
    fn pos_pairs_are_distinct() {
        let tokens = [Token::new("治疗", "v"), Token::new("治疗", "n")];
        let keys: Vec<String> = tokens.iter().map(pos_key).collect();
        let vocab = build_vocabulary(keys.iter(), 1);
        let v = pos_features(&tokens, &vocab);
        assert_eq!(v.len(), 2);
        assert_eq!(v.get(vocab.get("治疗/v").unwrap()), 1.0);
        assert_eq!(v.get(vocab.get("治疗/n").unwrap()), 1.0);
        assert!(pos_features(&[], &vocab).is_empty());
        // one word under two tags: more pair types than word types
        let words = build_vocabulary(tokens.iter().map(|t| t.surface.as_str()), 1);
        assert!(vocab.len() > words.len());
    }

    #[test]
    fn heading_bag() {
        let docs = sample_docs();
        let d = &docs[0];
        let vocab = build_vocabulary(["治疗", "方法"], 1);
        assert!(heading_features(d, 0, &vocab).is_empty());
        let under = heading_features(d, 2, &vocab);
        assert_eq!(under.get(vocab.get("治疗").unwrap()), 1.0);
        assert_eq!(under.get(vocab.get("方法").unwrap()), 1.0);
        assert_eq!(heading_features(d, 1, &vocab), under);
    }

    #[test]
    fn positions() {
        assert_eq!(position_feature(0, 5).unwrap(), 0.0);
        assert_eq!(position_feature(4, 5).unwrap(), 1.0);
        assert_eq!(position_feature(2, 5).unwrap(), 0.5);
        assert_eq!(position_feature(0, 1).unwrap(), 0.0);
        assert!(position_feature(5, 5).is_err());
    }

    #[test]
    fn lengths() {
        let docs = sample_docs();
        let d = &docs[0];
        assert_eq!(d.document.sentences[0].text, "现报告如下。");
        let (chars, words) = length_features(&d.document.sentences[0].text, &d.tokens[0]);
        assert_eq!(chars, 6);
        assert_eq!(words, 4); // 现 报告 如下 。
        assert_eq!(length_features("好", &[Token::new("好", "a")]), (1, 1));
    }

    #[test]
    fn dimension_arithmetic() {
        let docs = sample_docs();
        let sentences: Vec<Vec<&str>> = docs[0].tokens.iter().map(|s| s.iter().map(|t| t.surface.as_str()).collect()).collect();
        let d2v = train_doc2vec(&sentences, &Doc2VecConfig { dim: 4, epochs: 2, ..Default::default() }).unwrap();
        let vocab = build_vocabulary(sentences.iter().flatten().copied(), 1);
        let ids: Vec<Vec<usize>> = sentences.iter().map(|s| s.iter().filter_map(|w| vocab.get(w)).collect()).collect();
        let lda = train_lda(&ids, &vocab, &LdaConfig { topics: 3, iterations: 5, ..Default::default() }).unwrap();
        let models = FeatureModels { lda: Some(lda), doc2vec: Some(d2v) };
        let ex = FeatureExtractor::fit(&docs, FeatureConfig::all(), models, 1).unwrap();
        let expected = ex.bow_vocab.len() + ex.pos_vocab.len() + 3 + 4 + ex.heading_vocab.len() + 1 + 2;
        assert_eq!(ex.space().len(), expected);
        assert_eq!(ex.heading_vocab.len(), 2);
        for v in ex.transform(&docs[0]) {
            assert!(v.max_dim().unwrap() < expected);
            for (d, x) in v.iter() {
                assert!(x.is_finite());
                if !ex.space().name(d).starts_with("d2v:") {
                    assert!(x >= 0.0);
                }
            }
        }
    }

    #[test]
    fn bow_only_matches_family_output() {
        let docs = sample_docs();
        let (space, vectors) = assemble_features(&docs, FeatureConfig::parse_list("bow").unwrap(), FeatureModels::default()).unwrap();
        let vocab = build_vocabulary(docs[0].tokens.iter().flatten().map(|t| t.surface.as_str()), 1);
        assert_eq!(space.len(), vocab.len());
        for (i, v) in vectors[0].iter().enumerate() {
            assert_eq!(v, &bow_features(docs[0].surfaces(i), &vocab));
        }
    }

    #[test]
    fn missing_model_is_an_error() {
        let docs = sample_docs();
        assert!(assemble_features(&docs, FeatureConfig::all(), FeatureModels::default()).is_err());
    }

    #[test]
    fn assembly_is_pure() {
        let s = generate_synthetic_corpus(&SynthConfig { n_docs: 8, ..Default::default() }).unwrap();
        let docs = annotate_corpus(&s.corpus, &s.lexicon).unwrap();
        let settings = FeatureSettings {
            lda: LdaConfig { topics: 4, iterations: 10, ..Default::default() },
            doc2vec: Doc2VecConfig { dim: 6, epochs: 3, ..Default::default() },
            ..Default::default()
        };
        let m1 = train_feature_models(&docs, &settings).unwrap();
        let m2 = train_feature_models(&docs, &settings).unwrap();
        assert_eq!(m1, m2);
        let a = assemble_features(&docs, FeatureConfig::all(), m1).unwrap();
        let b = assemble_features(&docs, FeatureConfig::all(), m2).unwrap();
        assert_eq!(a, b);
        // LDA block sums to one for every sentence
        let space = &a.0;
        let lda_dims: Vec<usize> = (0..4).map(|k| space.dim(&format!("lda:{k}")).unwrap()).collect();
        for v in a.1.iter().flatten() {
            let s: f64 = lda_dims.iter().map(|&d| v.get(d)).sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn heading_association_has_no_gaps() {
        let s = generate_synthetic_corpus(&SynthConfig { n_docs: 20, ..Default::default() }).unwrap();
        for d in annotate_corpus(&s.corpus, &s.lexicon).unwrap() {
            for i in 0..d.len() {
                if let Some(h) = d.heading_index(i) {
                    assert!(d.document.sentences[h].is_heading);
                    assert!((h + 1..i).all(|j| !d.document.sentences[j].is_heading));
                    assert_eq!(d.document.sentences[i].heading_text.as_deref(), Some(d.document.sentences[h].text.as_str()));
                }
            }
        }
    }
}
