//! Segmentation, tagging and heading detection applied to whole documents.

use crate::corpus::{detect_headings, Corpus, Document};
use crate::error::Result;
use crate::segmentation::{segment_words, Lexicon, Token};

/// A document together with the tokens of each sentence.
///
/// Whitespace tokens are dropped here: they carry no signal and should not
/// count as words.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedDocument {
    pub document: Document,
    pub tokens: Vec<Vec<Token>>,
    heading_of: Vec<Option<usize>>,
}

impl AnnotatedDocument {
    pub fn new(document: Document, tokens: Vec<Vec<Token>>) -> Self {
        let mut heading_of = Vec::with_capacity(document.sentences.len());
        let mut current = None;
        for s in &document.sentences {
            if s.is_heading {
                current = Some(s.index);
            }
            heading_of.push(current);
        }
        AnnotatedDocument {
            document,
            tokens,
            heading_of,
        }
    }

    pub fn len(&self) -> usize {
        self.document.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.document.sentences.is_empty()
    }

    pub fn id(&self) -> &str {
        &self.document.id
    }

    /// Index of the heading governing sentence `i` (itself, for a heading).
    pub fn heading_index(&self, i: usize) -> Option<usize> {
        self.heading_of[i]
    }

    pub fn heading_tokens(&self, i: usize) -> Option<&[Token]> {
        self.heading_of[i].map(|h| self.tokens[h].as_slice())
    }

    pub fn surfaces(&self, i: usize) -> impl Iterator<Item = &str> {
        self.tokens[i].iter().map(|t| t.surface.as_str())
    }
}

/// Segments every sentence and re-runs heading detection on the word counts.
pub fn annotate_document(doc: &Document, lex: &Lexicon) -> Result<AnnotatedDocument> {
    let tokens: Vec<Vec<Token>> = doc
        .sentences
        .iter()
        .map(|s| {
            segment_words(&s.text, lex)
                .into_iter()
                .filter(|t| !t.is_whitespace())
                .collect()
        })
        .collect();
    let counts: Vec<usize> = tokens.iter().map(Vec::len).collect();
    let document = detect_headings(doc, &counts)?;
    Ok(AnnotatedDocument::new(document, tokens))
}

pub fn annotate_corpus(corpus: &Corpus, lex: &Lexicon) -> Result<Vec<AnnotatedDocument>> {
    corpus
        .documents
        .iter()
        .map(|d| annotate_document(d, lex))
        .collect()
}
