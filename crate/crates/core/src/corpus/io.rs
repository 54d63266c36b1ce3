//! Line-delimited JSON corpus files.
//!
//! Each line is one document: `{"id", "title", "paragraphs": [...]}` for
//! raw input or `{"id", "title", "sentences": [{"text", "paragraph",
//! "label"?, "heading"?}]}` for processed and gold corpora.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{link_headings, split_sentences, Corpus, Document, SectionLabel, Sentence};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
struct DocumentRecord {
    id: String,
    #[serde(default)]
    title: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    paragraphs: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sentences: Option<Vec<SentenceRecord>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    meta: Option<BTreeMap<String, String>>,
}

#[derive(Serialize, Deserialize)]
struct SentenceRecord {
    text: String,
    paragraph: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<SectionLabel>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    heading: bool,
}

fn record_to_document(rec: DocumentRecord) -> std::result::Result<Document, String> {
    let sentences = match (rec.paragraphs, rec.sentences) {
        (Some(_), Some(_)) => return Err("both `paragraphs` and `sentences` given".into()),
        (None, None) => return Err("missing `paragraphs` or `sentences`".into()),
        (Some(paragraphs), None) => split_sentences(&paragraphs).map_err(|e| e.to_string())?,
        (None, Some(records)) => records
            .into_iter()
            .enumerate()
            .map(|(i, r)| {
                let mut s = Sentence::new(r.text, i, r.paragraph);
                s.gold_label = r.label;
                s.is_heading = r.heading;
                s
            })
            .collect(),
    };
    let mut doc = Document {
        id: rec.id,
        title: rec.title,
        sentences,
        source_meta: rec.meta,
    };
    link_headings(&mut doc);
    doc.check().map_err(|e| e.to_string())?;
    Ok(doc)
}

/// Parses corpus text; `origin` names the source in error messages.
pub fn parse_corpus(text: &str, origin: &str) -> Result<Corpus> {
    let mut docs = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: origin.to_string(),
            line: n + 1,
            message,
        };
        let rec: DocumentRecord =
            serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
        let doc = record_to_document(rec).map_err(parse_err)?;
        if !seen.insert(doc.id.clone()) {
            return Err(Error::DuplicateId(doc.id));
        }
        docs.push(doc);
    }
    Ok(Corpus { documents: docs })
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(&text, &path.display().to_string())
}

/// Writes the processed (sentence-level) form of every document.
pub fn write_corpus<W: Write>(corpus: &Corpus, mut w: W) -> std::io::Result<()> {
    for doc in &corpus.documents {
        let rec = DocumentRecord {
            id: doc.id.clone(),
            title: doc.title.clone(),
            paragraphs: None,
            sentences: Some(
                doc.sentences
                    .iter()
                    .map(|s| SentenceRecord {
                        text: s.text.clone(),
                        paragraph: s.paragraph_index,
                        label: s.gold_label,
                        heading: s.is_heading,
                    })
                    .collect(),
            ),
            meta: doc.source_meta.clone(),
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_corpus(corpus, &mut buf).map_err(|e| Error::io(path, e))?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_empty_corpus() {
        let c = parse_corpus("", "mem").unwrap();
        assert!(c.documents.is_empty());
        let c = parse_corpus("\n  \n", "mem").unwrap();
        assert!(c.documents.is_empty());
    }

    #[test]
    fn raw_paragraphs_are_split() {
        let c = parse_corpus(
            r#"{"id":"a","title":"t","paragraphs":["治疗方法","一。二。"]}"#,
            "mem",
        )
        .unwrap();
        assert_eq!(c.documents[0].sentences.len(), 3);
        assert!(!c.is_labeled());
    }

    #[test]
    fn duplicate_id_is_rejected() {
        let line = r#"{"id":"a","paragraphs":["一。"]}"#;
        let text = format!("{line}\n{line}\n");
        assert!(matches!(
            parse_corpus(&text, "mem"),
            Err(Error::DuplicateId(id)) if id == "a"
        ));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let text = "{\"id\":\"a\",\"paragraphs\":[\"一。\"]}\n{not json\n";
        match parse_corpus(text, "mem") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let text = r#"{"id":"a","sentences":[{"text":"x","paragraph":0,"label":"bogus"}]}"#;
        assert!(matches!(parse_corpus(text, "mem"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn round_trip_through_file() {
        let text = r#"{"id":"a","title":"t","sentences":[{"text":"标题","paragraph":0,"label":"other","heading":true},{"text":"正文。","paragraph":1,"label":"pre"}],"meta":{"year":"2006"}}"#;
        let c = parse_corpus(text, "mem").unwrap();
        assert_eq!(c.documents[0].sentences[1].heading_text.as_deref(), Some("标题"));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        save_corpus(&c, &path).unwrap();
        assert_eq!(load_corpus(&path).unwrap(), c);
        assert!(c.is_labeled());
    }
}
