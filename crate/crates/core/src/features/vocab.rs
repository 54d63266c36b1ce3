use std::collections::HashMap;

use serde::{Deserialize, Serialize};

/// Ordered word list with its inverse index.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocabulary {
    fn from(words: Vec<String>) -> Self {
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        Vocabulary { words, index }
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.words
    }
}

impl Vocabulary {
    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn get(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Words with frequency ≥ `min_count`, by descending frequency then word.
pub fn build_vocabulary<I, S>(tokens: I, min_count: usize) -> Vocabulary
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let min_count = min_count.max(1);
    let mut freq: HashMap<String, usize> = HashMap::new();
    for t in tokens {
        let t = t.as_ref();
        match freq.get_mut(t) {
            Some(c) => *c += 1,
            None => {
                freq.insert(t.to_string(), 1);
            }
        }
    }
    let mut words: Vec<(String, usize)> =
        freq.into_iter().filter(|&(_, c)| c >= min_count).collect();
    words.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Vocabulary::from(words.into_iter().map(|(w, _)| w).collect::<Vec<_>>())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn min_count_filters() {
        let v = build_vocabulary(["a", "a", "b"], 2);
        assert_eq!(v.words(), ["a"]);
        let v = build_vocabulary(["a", "a", "b"], 1);
        assert_eq!(v.words(), ["a", "b"]);
    }

    #[test]
    fn ties_are_lexicographic() {
        let v = build_vocabulary(["c", "b", "a", "z", "z"], 1);
        assert_eq!(v.words(), ["z", "a", "b", "c"]);
        assert_eq!(v.get("b"), Some(2));
    }

    #[test]
    fn empty_corpus_empty_vocabulary() {
        assert!(build_vocabulary(Vec::<String>::new(), 1).is_empty());
    }

    #[test]
    fn serde_rebuilds_index() {
        let v = build_vocabulary(["x", "y", "y"], 1);
        let back: Vocabulary = serde_json::from_str(&serde_json::to_string(&v).unwrap()).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.get("x"), Some(1));
    }
}
