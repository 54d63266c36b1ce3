//! Corpus data model: documents, sentences and their section labels.
//!
//! Raw paragraphs are split into sentences at full-stop, question and
//! exclamation marks; headings are recognized as short, unpunctuated,
//! single-sentence paragraphs.

mod io;
mod synth;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{load_corpus, parse_corpus, save_corpus, write_corpus};
pub use synth::{generate_synthetic_corpus, SynthConfig, SyntheticCorpus, TransitionTable};

/// Rhetorical section of a sentence.
///
/// The declaration order is the tie-break order used by every decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SectionLabel {
    Pre,
    Subject,
    Method,
    Result,
    After,
    Other,
}

impl SectionLabel {
    pub const COUNT: usize = 6;
    pub const ALL: [SectionLabel; 6] = [
        SectionLabel::Pre,
        SectionLabel::Subject,
        SectionLabel::Method,
        SectionLabel::Result,
        SectionLabel::After,
        SectionLabel::Other,
    ];
    /// The three labels a reader actually cares about.
    pub const TARGETS: [SectionLabel; 3] =
        [SectionLabel::Subject, SectionLabel::Method, SectionLabel::Result];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SectionLabel::Pre => "pre",
            SectionLabel::Subject => "subject",
            SectionLabel::Method => "method",
            SectionLabel::Result => "result",
            SectionLabel::After => "after",
            SectionLabel::Other => "other",
        }
    }

    pub fn is_target(self) -> bool {
        matches!(
            self,
            SectionLabel::Subject | SectionLabel::Method | SectionLabel::Result
        )
    }
}

impl fmt::Display for SectionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SectionLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SectionLabel::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::data(format!("unknown section label `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub text: String,
    pub index: usize,
    pub paragraph_index: usize,
    pub is_heading: bool,
    pub gold_label: Option<SectionLabel>,
    /// Text of the governing section heading, if any.
    pub heading_text: Option<String>,
}

impl Sentence {
    pub fn new(text: impl Into<String>, index: usize, paragraph_index: usize) -> Self {
        Sentence {
            text: text.into(),
            index,
            paragraph_index,
            is_heading: false,
            gold_label: None,
            heading_text: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub title: String,
    pub sentences: Vec<Sentence>,
    pub source_meta: Option<BTreeMap<String, String>>,
}

impl Document {
    pub fn from_paragraphs<S: AsRef<str>>(
        id: impl Into<String>,
        title: impl Into<String>,
        paragraphs: &[S],
    ) -> Result<Self> {
        Ok(Document {
            id: id.into(),
            title: title.into(),
            sentences: split_sentences(paragraphs)?,
            source_meta: None,
        })
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn is_labeled(&self) -> bool {
        self.sentences.iter().all(|s| s.gold_label.is_some())
    }

    /// Gold labels, or an error naming the first unlabeled sentence.
    pub fn gold_labels(&self) -> Result<Vec<SectionLabel>> {
        self.sentences
            .iter()
            .map(|s| {
                s.gold_label.ok_or_else(|| {
                    Error::data(format!(
                        "document `{}`: sentence {} has no gold label",
                        self.id, s.index
                    ))
                })
            })
            .collect()
    }

    /// Checks the structural invariants of the sentence list.
    pub fn check(&self) -> Result<()> {
        let mut last_paragraph = 0;
        let mut heading: Option<&str> = None;
        for (i, s) in self.sentences.iter().enumerate() {
            let fail = |msg: &str| {
                Err(Error::data(format!(
                    "document `{}`, sentence {i}: {msg}",
                    self.id
                )))
            };
            if s.index != i {
                return fail("index out of sequence");
            }
            if s.text.trim().is_empty() {
                return fail("empty text");
            }
            if s.paragraph_index < last_paragraph {
                return fail("paragraph index decreases");
            }
            last_paragraph = s.paragraph_index;
            if s.is_heading {
                heading = Some(&s.text);
            }
            if s.heading_text.as_deref() != heading {
                return fail("heading text does not match the governing heading");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    pub documents: Vec<Document>,
}

impl Corpus {
    pub fn new(documents: Vec<Document>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for d in &documents {
            if !seen.insert(d.id.as_str()) {
                return Err(Error::DuplicateId(d.id.clone()));
            }
        }
        Ok(Corpus { documents })
    }

    /// True when every sentence carries a gold label.
    pub fn is_labeled(&self) -> bool {
        self.documents.iter().all(Document::is_labeled)
    }

    pub fn sentence_count(&self) -> usize {
        self.documents.iter().map(Document::len).sum()
    }

    pub fn subset(&self, indices: &[usize]) -> Corpus {
        Corpus {
            documents: indices.iter().map(|&i| self.documents[i].clone()).collect(),
        }
    }
}

fn is_split_mark(c: char) -> bool {
    matches!(c, '。' | '？' | '！' | '?' | '!')
}

fn is_closing(c: char) -> bool {
    matches!(
        c,
        '”' | '’' | '」' | '』' | '）' | ')' | '】' | '》' | '"' | '\''
    )
}

/// Splits paragraphs into sentences at 。？！ and their ASCII forms.
///
/// Terminal marks, and any closing quotes or brackets directly after them,
/// stay with the sentence they end. Blank paragraphs are skipped and the
/// remaining paragraphs are numbered densely.
pub fn split_sentences<S: AsRef<str>>(paragraphs: &[S]) -> Result<Vec<Sentence>> {
    let mut out = Vec::new();
    let mut para_index = 0;
    for para in paragraphs {
        let para = para.as_ref();
        if para.trim().is_empty() {
            continue;
        }
        let mut pieces: Vec<String> = Vec::new();
        let mut current = String::new();
        let mut chars = para.chars().peekable();
        while let Some(c) = chars.next() {
            current.push(c);
            if is_split_mark(c) {
                while let Some(&n) = chars.peek() {
                    if is_split_mark(n) || is_closing(n) {
                        current.push(n);
                        chars.next();
                    } else {
                        break;
                    }
                }
                pieces.push(std::mem::take(&mut current));
            }
        }
        if !current.is_empty() {
            if current.trim().is_empty() && !pieces.is_empty() {
                pieces.last_mut().unwrap().push_str(&current);
            } else {
                pieces.push(current);
            }
        }
        // Whitespace-only fragments between marks are glued onto the
        // following sentence so no text is lost.
        let mut carry = String::new();
        let mut kept: Vec<String> = Vec::new();
        for p in pieces {
            if p.trim().is_empty() {
                carry.push_str(&p);
            } else {
                kept.push(std::mem::take(&mut carry) + &p);
            }
        }
        if !carry.is_empty() {
            if let Some(last) = kept.last_mut() {
                last.push_str(&carry);
            }
        }
        for text in kept {
            out.push(Sentence::new(text, out.len(), para_index));
        }
        para_index += 1;
    }
    if out.is_empty() {
        return Err(Error::EmptyDocument);
    }
    Ok(out)
}

/// Characters that count as "punctuation at the end" for the heading rule.
pub fn is_terminal_punctuation(c: char) -> bool {
    matches!(
        c,
        '。' | '？'
            | '！'
            | '?'
            | '!'
            | '，'
            | ','
            | '、'
            | '；'
            | ';'
            | '：'
            | ':'
            | '.'
            | '）'
            | ')'
            | '】'
            | '"'
    )
}

/// Maximum number of words (exclusive) a heading may have.
pub const HEADING_MAX_WORDS: usize = 6;

/// Flags headings and links every sentence to its governing heading.
///
/// A sentence is a heading iff it is the only sentence of its paragraph,
/// has fewer than six words, and does not end in punctuation. Existing
/// flags are discarded, so the operation is idempotent.
pub fn detect_headings(doc: &Document, word_counts: &[usize]) -> Result<Document> {
    if word_counts.len() != doc.sentences.len() {
        return Err(Error::data(format!(
            "document `{}`: {} word counts for {} sentences",
            doc.id,
            word_counts.len(),
            doc.sentences.len()
        )));
    }
    let mut per_paragraph: BTreeMap<usize, usize> = BTreeMap::new();
    for s in &doc.sentences {
        *per_paragraph.entry(s.paragraph_index).or_default() += 1;
    }
    let mut out = doc.clone();
    let mut governing: Option<String> = None;
    for (s, &words) in out.sentences.iter_mut().zip(word_counts) {
        let sole = per_paragraph[&s.paragraph_index] == 1;
        let unpunctuated = s
            .text
            .trim_end()
            .chars()
            .last()
            .is_some_and(|c| !is_terminal_punctuation(c));
        s.is_heading = sole && words < HEADING_MAX_WORDS && unpunctuated;
        if s.is_heading {
            governing = Some(s.text.clone());
        }
        s.heading_text = governing.clone();
    }
    Ok(out)
}

/// Recomputes `heading_text` from the `is_heading` flags.
pub(crate) fn link_headings(doc: &mut Document) {
    let mut governing: Option<String> = None;
    for s in &mut doc.sentences {
        if s.is_heading {
            governing = Some(s.text.clone());
        }
        s.heading_text = governing.clone();
    }
}

/// A gold label that contradicts the positional meaning of Pre/After.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelViolation {
    pub index: usize,
    pub label: SectionLabel,
    pub reason: &'static str,
}

/// Checks that no Pre follows and no After precedes a Subject/Method/Result
/// sentence. Other may appear anywhere.
pub fn validate_labels(doc: &Document) -> Result<Vec<LabelViolation>> {
    let labels = doc.gold_labels()?;
    let first = labels.iter().position(|l| l.is_target());
    let last = labels.iter().rposition(|l| l.is_target());
    let mut out = Vec::new();
    if let (Some(first), Some(last)) = (first, last) {
        for (i, &l) in labels.iter().enumerate() {
            if l == SectionLabel::Pre && i > first {
                out.push(LabelViolation {
                    index: i,
                    label: l,
                    reason: "pre after a target sentence",
                });
            }
            if l == SectionLabel::After && i < last {
                out.push(LabelViolation {
                    index: i,
                    label: l,
                    reason: "after before a target sentence",
                });
            }
        }
    }
    Ok(out)
}
