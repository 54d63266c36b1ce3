//! Dictionary-driven word segmentation and part-of-speech tagging.
//!
//! Text is first cut into runs of digits, Latin letters, whitespace and
//! everything else. The last kind is segmented by bidirectional maximum
//! matching against a [`Lexicon`].

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

const DEFAULT_TAGS: &str = include_str!("../data/pos_tags.txt");

/// Tag for out-of-lexicon surfaces.
pub const UNKNOWN_TAG: &str = "x";
pub const NUMBER_TAG: &str = "m";
pub const LATIN_TAG: &str = "eng";

/// The closed set of POS tags a lexicon may use.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PosInventory {
    tags: Vec<String>,
    set: HashSet<String>,
}

impl PosInventory {
    pub fn new<I, S>(tags: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let tags: Vec<String> = tags.into_iter().map(Into::into).collect();
        let set: HashSet<String> = tags.iter().cloned().collect();
        if set.len() != tags.len() {
            return Err(Error::config("duplicate tag in POS inventory"));
        }
        if !set.contains(UNKNOWN_TAG) {
            return Err(Error::config("POS inventory must contain the unknown tag `x`"));
        }
        Ok(PosInventory { tags, set })
    }

    /// One tag per line; blank lines ignored.
    pub fn parse(text: &str) -> Result<Self> {
        Self::new(text.lines().map(str::trim).filter(|l| !l.is_empty()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn contains(&self, tag: &str) -> bool {
        self.set.contains(tag)
    }

    pub fn tags(&self) -> &[String] {
        &self.tags
    }
}

impl Default for PosInventory {
    fn default() -> Self {
        Self::parse(DEFAULT_TAGS).expect("bundled tag inventory is valid")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexiconEntry {
    pub word: String,
    pub pos: String,
    pub frequency: u64,
}

#[derive(Debug, Clone)]
pub struct Lexicon {
    // (tag, frequency) kept sorted by tag
    entries: HashMap<String, Vec<(String, u64)>>,
    max_word_len: usize,
    inventory: PosInventory,
}

impl Default for Lexicon {
    fn default() -> Self {
        Lexicon::new(PosInventory::default())
    }
}

impl Lexicon {
    pub fn new(inventory: PosInventory) -> Self {
        Lexicon {
            entries: HashMap::new(),
            max_word_len: 0,
            inventory,
        }
    }

    pub fn from_entries<I>(inventory: PosInventory, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = LexiconEntry>,
    {
        let mut lex = Lexicon::new(inventory);
        for e in entries {
            lex.insert(e)?;
        }
        Ok(lex)
    }

    /// Adds an entry; repeated (word, tag) pairs accumulate frequency.
    pub fn insert(&mut self, entry: LexiconEntry) -> Result<()> {
        if entry.word.is_empty() {
            return Err(Error::data("empty lexicon word"));
        }
        if !self.inventory.contains(&entry.pos) {
            return Err(Error::data(format!("unknown POS tag `{}`", entry.pos)));
        }
        let len = entry.word.chars().count();
        let tags = self.entries.entry(entry.word).or_default();
        match tags.binary_search_by(|(t, _)| t.as_str().cmp(&entry.pos)) {
            Ok(i) => tags[i].1 += entry.frequency,
            Err(i) => tags.insert(i, (entry.pos, entry.frequency)),
        }
        self.max_word_len = self.max_word_len.max(len);
        Ok(())
    }

    pub fn lookup(&self, word: &str) -> Option<&[(String, u64)]> {
        self.entries.get(word).map(Vec::as_slice)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.entries.contains_key(word)
    }

    /// Number of distinct words.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn max_word_len(&self) -> usize {
        self.max_word_len
    }

    pub fn inventory(&self) -> &PosInventory {
        &self.inventory
    }

    /// Highest-frequency tag; ties go to the lexicographically smaller tag.
    pub fn best_tag(&self, word: &str) -> Option<&str> {
        let tags = self.entries.get(word)?;
        // tags are sorted, so the first maximum wins ties
        let mut best = &tags[0];
        for t in &tags[1..] {
            if t.1 > best.1 {
                best = t;
            }
        }
        Some(&best.0)
    }

    /// Entries sorted by word then tag.
    pub fn entries(&self) -> Vec<LexiconEntry> {
        let mut out: Vec<LexiconEntry> = self
            .entries
            .iter()
            .flat_map(|(w, tags)| {
                tags.iter().map(move |(pos, f)| LexiconEntry {
                    word: w.clone(),
                    pos: pos.clone(),
                    frequency: *f,
                })
            })
            .collect();
        out.sort_by(|a, b| (&a.word, &a.pos).cmp(&(&b.word, &b.pos)));
        out
    }

    pub fn to_tsv(&self) -> String {
        self.entries()
            .into_iter()
            .map(|e| format!("{}\t{}\t{}\n", e.word, e.pos, e.frequency))
            .collect()
    }
}

/// Parses `word<TAB>pos<TAB>frequency` rows.
pub fn parse_lexicon(text: &str, origin: &str, inventory: PosInventory) -> Result<Lexicon> {
    let mut lex = Lexicon::new(inventory);
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse {
            path: origin.to_string(),
            line: n + 1,
            message,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(err(format!("expected 3 tab-separated fields, got {}", fields.len())));
        }
        let frequency: u64 = fields[2]
            .trim()
            .parse()
            .map_err(|_| err(format!("frequency `{}` is not a non-negative integer", fields[2])))?;
        lex.insert(LexiconEntry {
            word: fields[0].to_string(),
            pos: fields[1].trim().to_string(),
            frequency,
        })
        .map_err(|e| err(e.to_string()))?;
    }
    Ok(lex)
}

pub fn load_lexicon(path: impl AsRef<Path>, inventory: PosInventory) -> Result<Lexicon> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_lexicon(&text, &path.display().to_string(), inventory)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Token {
    pub surface: String,
    pub pos: String,
}

impl Token {
    pub fn new(surface: impl Into<String>, pos: impl Into<String>) -> Self {
        Token {
            surface: surface.into(),
            pos: pos.into(),
        }
    }

    pub fn is_whitespace(&self) -> bool {
        self.surface.chars().all(char::is_whitespace)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RunKind {
    Digit,
    Latin,
    Space,
    Text,
}

fn run_kind(c: char) -> RunKind {
    if c.is_ascii_digit() || ('０'..='９').contains(&c) {
        RunKind::Digit
    } else if c.is_ascii_alphabetic() {
        RunKind::Latin
    } else if c.is_whitespace() {
        RunKind::Space
    } else {
        RunKind::Text
    }
}

/// Cuts text into maximal runs. A '.' between two digits stays inside the
/// number.
fn runs(text: &str) -> Vec<(RunKind, &str)> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let kind = run_kind(chars[i].1);
        let start = chars[i].0;
        let mut j = i + 1;
        while j < chars.len() {
            let k = run_kind(chars[j].1);
            let decimal = kind == RunKind::Digit
                && chars[j].1 == '.'
                && chars.get(j + 1).is_some_and(|c| run_kind(c.1) == RunKind::Digit);
            if k == kind || decimal {
                j += 1;
            } else {
                break;
            }
        }
        let end = chars.get(j).map_or(text.len(), |c| c.0);
        out.push((kind, &text[start..end]));
        i = j;
    }
    out
}

fn char_offsets(text: &str) -> Vec<usize> {
    text.char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(text.len()))
        .collect()
}

/// Greedy left-to-right longest match.
pub fn forward_max_match<'a>(text: &'a str, lex: &Lexicon) -> Vec<&'a str> {
    let off = char_offsets(text);
    let n = off.len() - 1;
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        let longest = lex.max_word_len().min(n - i);
        let len = (2..=longest)
            .rev()
            .find(|&l| lex.contains(&text[off[i]..off[i + l]]))
            .unwrap_or(1);
        out.push(&text[off[i]..off[i + len]]);
        i += len;
    }
    out
}

/// Greedy right-to-left longest match.
pub fn backward_max_match<'a>(text: &'a str, lex: &Lexicon) -> Vec<&'a str> {
    let off = char_offsets(text);
    let mut out = Vec::new();
    let mut end = off.len() - 1;
    while end > 0 {
        let longest = lex.max_word_len().min(end);
        let len = (2..=longest)
            .rev()
            .find(|&l| lex.contains(&text[off[end - l]..off[end]]))
            .unwrap_or(1);
        out.push(&text[off[end - len]..off[end]]);
        end -= len;
    }
    out.reverse();
    out
}

/// Picks between forward and backward matching: identical results win
/// outright, otherwise fewer tokens, then fewer single characters, then
/// backward.
pub fn bidirectional_max_match<'a>(text: &'a str, lex: &Lexicon) -> Vec<&'a str> {
    let fwd = forward_max_match(text, lex);
    let bwd = backward_max_match(text, lex);
    if fwd == bwd {
        return fwd;
    }
    let singles = |v: &[&str]| v.iter().filter(|w| w.chars().count() == 1).count();
    let key = |v: &[&str]| (v.len(), singles(v));
    if key(&fwd) < key(&bwd) {
        fwd
    } else {
        bwd
    }
}

/// Segments text into POS-tagged tokens. Joining the surfaces gives back
/// the input exactly.
pub fn segment_words(text: &str, lex: &Lexicon) -> Vec<Token> {
    let mut out = Vec::new();
    for (kind, run) in runs(text) {
        match kind {
            RunKind::Text => {
                for w in bidirectional_max_match(run, lex) {
                    out.push(tag_one(w, lex));
                }
            }
            RunKind::Digit | RunKind::Latin => {
                let fallback = if kind == RunKind::Digit {
                    NUMBER_TAG
                } else {
                    LATIN_TAG
                };
                let pos = lex.best_tag(run).unwrap_or(fallback);
                out.push(Token::new(run, pos));
            }
            RunKind::Space => out.push(Token::new(run, UNKNOWN_TAG)),
        }
    }
    out
}

fn tag_one(surface: &str, lex: &Lexicon) -> Token {
    Token::new(surface, lex.best_tag(surface).unwrap_or(UNKNOWN_TAG))
}

/// Tags each surface with its most frequent lexicon tag, or `x`.
pub fn pos_tag<S: AsRef<str>>(surfaces: &[S], lex: &Lexicon) -> Vec<Token> {
    surfaces.iter().map(|s| tag_one(s.as_ref(), lex)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lex(words: &[&str]) -> Lexicon {
        Lexicon::from_entries(
            PosInventory::default(),
            words.iter().map(|w| LexiconEntry {
                word: w.to_string(),
                pos: "n".into(),
                frequency: 1,
            }),
        )
        .unwrap()
    }

    fn surfaces(tokens: &[Token]) -> Vec<&str> {
        tokens.iter().map(|t| t.surface.as_str()).collect()
    }

    #[test]
    fn default_inventory_has_forty_tags() {
        let inv = PosInventory::default();
        assert_eq!(inv.tags().len(), 40);
        for t in [UNKNOWN_TAG, NUMBER_TAG, LATIN_TAG] {
            assert!(inv.contains(t));
        }
    }

    #[test]
    fn loads_three_rows() {
        let l = parse_lexicon("哮喘\tn\t5\n治疗\tv\t3\n大椎\tns\t1\n", "mem", PosInventory::default())
            .unwrap();
        assert_eq!(l.len(), 3);
        assert_eq!(l.max_word_len(), 2);
    }

    #[test]
    fn duplicate_rows_merge() {
        let l = parse_lexicon("哮喘\tn\t5\n哮喘\tn\t5\n", "mem", PosInventory::default()).unwrap();
        assert_eq!(l.lookup("哮喘").unwrap(), &[("n".to_string(), 10)]);
    }

    #[test]
    fn unknown_tag_and_bad_frequency_fail_with_line() {
        let e = parse_lexicon("哮喘\tn\t5\n打\tzz9\t1\n", "mem", PosInventory::default()).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }), "{e}");
        let e = parse_lexicon("哮喘\tn\tmany\n", "mem", PosInventory::default()).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 1, .. }), "{e}");
        let e = parse_lexicon("哮喘\tn\t-3\n", "mem", PosInventory::default()).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 1, .. }), "{e}");
    }

    #[test]
    fn longest_match_wins() {
        let l = lex(&["支气管", "哮喘", "支气管哮喘"]);
        assert_eq!(surfaces(&segment_words("支气管哮喘", &l)), ["支气管哮喘"]);
    }

    #[test]
    fn empty_lexicon_gives_single_characters() {
        let l = Lexicon::default();
        assert_eq!(surfaces(&segment_words("甲乙", &l)), ["甲", "乙"]);
        let t = segment_words("XY", &l);
        // Latin runs are chunked before matching
        assert_eq!(surfaces(&t), ["XY"]);
        assert_eq!(t[0].pos, LATIN_TAG);
    }

    #[test]
    fn tie_break_prefers_backward() {
        // forward: [AB, C]; backward: [A, BC]; 2 tokens and 1 single each
        let l = lex(&["甲乙", "乙丙", "甲", "丙"]);
        assert_eq!(forward_max_match("甲乙丙", &l), ["甲乙", "丙"]);
        assert_eq!(backward_max_match("甲乙丙", &l), ["甲", "乙丙"]);
        assert_eq!(bidirectional_max_match("甲乙丙", &l), ["甲", "乙丙"]);
    }

    #[test]
    fn fewer_tokens_wins_over_direction() {
        // forward: [甲乙, 丙, 丁] (3 tokens); backward: [甲, 乙丙丁] (2 tokens)
        let l = lex(&["甲乙", "乙丙丁"]);
        assert_eq!(forward_max_match("甲乙丙丁", &l), ["甲乙", "丙", "丁"]);
        assert_eq!(backward_max_match("甲乙丙丁", &l), ["甲", "乙丙丁"]);
        assert_eq!(bidirectional_max_match("甲乙丙丁", &l), ["甲", "乙丙丁"]);
    }

    #[test]
    fn fewer_singles_wins_when_counts_tie() {
        // forward: [甲乙, 丙丁, 戊, 己] (4 tokens, 2 singles)
        // backward: [甲, 乙丙丁, 戊, 己] (4 tokens, 3 singles)
        let l = lex(&["甲乙", "乙丙丁", "丙丁"]);
        let text = "甲乙丙丁戊己";
        assert_eq!(forward_max_match(text, &l), ["甲乙", "丙丁", "戊", "己"]);
        assert_eq!(backward_max_match(text, &l), ["甲", "乙丙丁", "戊", "己"]);
        assert_eq!(bidirectional_max_match(text, &l), ["甲乙", "丙丁", "戊", "己"]);
    }

    #[test]
    fn numbers_and_latin_are_chunked() {
        let l = lex(&["笔者"]);
        let t = segment_words("笔者自1990年OCR", &l);
        assert_eq!(surfaces(&t), ["笔者", "自", "1990", "年", "OCR"]);
        assert_eq!(t[2].pos, NUMBER_TAG);
        assert_eq!(t[4].pos, LATIN_TAG);
        assert_eq!(surfaces(&segment_words("0.5cm", &l)), ["0.5", "cm"]);
    }

    #[test]
    fn pos_tag_rules() {
        let l = parse_lexicon("哮喘\tn\t100\n打\tv\t50\n打\tn\t50\n", "mem", PosInventory::default())
            .unwrap();
        let t = pos_tag(&["哮喘", "打", "qqq"], &l);
        let tags: Vec<_> = t.iter().map(|t| t.pos.as_str()).collect();
        assert_eq!(tags, ["n", "n", "x"]);
    }

    #[test]
    fn forward_count_can_grow_with_the_lexicon() {
        // Greedy matching is not monotone in the dictionary in general.
        let before = lex(&["乙丙丁"]);
        let after = lex(&["乙丙丁", "甲乙"]);
        assert_eq!(forward_max_match("甲乙丙丁", &before).len(), 2);
        assert_eq!(forward_max_match("甲乙丙丁", &after).len(), 3);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        const ALPHABET: &[char] = &['甲', '乙', '丙', '丁', '戊', '己', '1', 'a', ' ', '。'];
        const FRESH: &[char] = &['子', '丑', '寅', '卯'];

        fn text_over(alpha: &'static [char]) -> impl Strategy<Value = String> {
            proptest::collection::vec(proptest::sample::select(alpha), 0..24)
                .prop_map(|v| v.into_iter().collect())
        }

        fn words_over(alpha: &'static [char]) -> impl Strategy<Value = Vec<String>> {
            proptest::collection::vec(
                proptest::collection::vec(proptest::sample::select(alpha), 1..4)
                    .prop_map(|v| v.into_iter().collect::<String>()),
                0..8,
            )
        }

        fn mixed_text() -> impl Strategy<Value = String> {
            proptest::collection::vec(
                prop_oneof![proptest::sample::select(ALPHABET), proptest::sample::select(FRESH)],
                0..24,
            )
            .prop_map(|v| v.into_iter().collect())
        }

        fn build(words: &[String]) -> Lexicon {
            let refs: Vec<&str> = words.iter().map(String::as_str).collect();
            lex(&refs)
        }

        proptest! {
            #[test]
            fn segmentation_is_lossless(text in text_over(ALPHABET), words in words_over(ALPHABET)) {
                let l = build(&words);
                let joined: String = segment_words(&text, &l).into_iter().map(|t| t.surface).collect();
                prop_assert_eq!(joined, text);
            }

            #[test]
            fn fresh_words_never_increase_forward_count(
                text in mixed_text(),
                base in words_over(ALPHABET),
                extra in words_over(FRESH),
            ) {
                let small = build(&base);
                let mut all = base.clone();
                all.extend(extra);
                let big = build(&all);
                prop_assert!(forward_max_match(&text, &big).len() <= forward_max_match(&text, &small).len());
            }

            #[test]
            fn tagging_ignores_insertion_order(
                rows in proptest::collection::vec((0usize..3, 0usize..4, 0u64..5), 1..12),
            ) {
                let words = ["甲", "乙", "丙"];
                let tags = ["n", "v", "a", "d"];
                let entries: Vec<LexiconEntry> = rows
                    .iter()
                    .map(|&(w, t, f)| LexiconEntry { word: words[w].into(), pos: tags[t].into(), frequency: f })
                    .collect();
                let a = Lexicon::from_entries(PosInventory::default(), entries.clone()).unwrap();
                let b = Lexicon::from_entries(PosInventory::default(), entries.into_iter().rev()).unwrap();
                prop_assert_eq!(pos_tag(&words, &a), pos_tag(&words, &b));
            }
        }
    }
}
