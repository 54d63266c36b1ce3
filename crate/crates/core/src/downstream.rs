//! Entity mining on the sentences a classifier keeps: dictionary
//! matching, paper-level co-occurrence counting, filtered-vs-unfiltered
//! relation overlap and edge-list export.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Document, SectionLabel, Sentence};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityCategory {
    Disease,
    Medicine,
    Acupoint,
}

impl EntityCategory {
    pub const ALL: [EntityCategory; 3] = [EntityCategory::Disease, EntityCategory::Medicine, EntityCategory::Acupoint];

    pub fn as_str(self) -> &'static str {
        match self {
            EntityCategory::Disease => "disease",
            EntityCategory::Medicine => "medicine",
            EntityCategory::Acupoint => "acupoint",
        }
    }

    /// The six unordered category pairs, smaller category first.
    pub fn pairs() -> Vec<(EntityCategory, EntityCategory)> {
        let mut v = Vec::new();
        for (i, a) in Self::ALL.into_iter().enumerate() {
            for b in Self::ALL.into_iter().skip(i) {
                v.push((a, b));
            }
        }
        v
    }
}

impl fmt::Display for EntityCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EntityCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EntityCategory::ALL
            .into_iter()
            .find(|c| c.as_str() == s.trim())
            .ok_or_else(|| Error::data(format!("unknown entity category `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Entity {
    pub surface: String,
    pub category: EntityCategory,
}

impl Entity {
    pub fn new(surface: impl Into<String>, category: EntityCategory) -> Self {
        Entity {
            surface: surface.into(),
            category,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EntityDictionary {
    entries: BTreeMap<String, EntityCategory>,
    max_chars: usize,
}

impl EntityDictionary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Re-inserting a surface with the same category is a no-op; a
    /// different category is an error.
    pub fn insert(&mut self, surface: &str, category: EntityCategory) -> Result<()> {
        let surface = surface.trim();
        if surface.is_empty() {
            return Err(Error::data("empty entity surface"));
        }
        match self.entries.get(surface) {
            Some(&c) if c != category => Err(Error::data(format!("entity `{surface}` listed as both {c} and {category}"))),
            Some(_) => Ok(()),
            None => {
                self.max_chars = self.max_chars.max(surface.chars().count());
                self.entries.insert(surface.to_string(), category);
                Ok(())
            }
        }
    }

    pub fn get(&self, surface: &str) -> Option<EntityCategory> {
        self.entries.get(surface).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, EntityCategory)> {
        self.entries.iter().map(|(s, c)| (s.as_str(), *c))
    }

    /// `surface<TAB>category` lines; blank lines are skipped.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut d = EntityDictionary::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse {
                path: origin.to_string(),
                line: i + 1,
                message,
            };
            let (surface, cat) = line
                .split_once('\t')
                .ok_or_else(|| err("expected `surface<TAB>category`".into()))?;
            let cat: EntityCategory = cat.parse().map_err(|e: Error| err(e.to_string()))?;
            d.insert(surface, cat).map_err(|e| err(e.to_string()))?;
        }
        Ok(d)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn to_tsv(&self) -> String {
        self.iter().map(|(s, c)| format!("{s}\t{c}\n")).collect()
    }
}

impl FromIterator<(String, EntityCategory)> for EntityDictionary {
    /// Later duplicates with a conflicting category are ignored.
    fn from_iter<I: IntoIterator<Item = (String, EntityCategory)>>(iter: I) -> Self {
        let mut d = EntityDictionary::new();
        for (s, c) in iter {
            let _ = d.insert(&s, c);
        }
        d
    }
}

/// Sentences predicted Subject, Method or Result, in document order.
/// Sentences without a prediction are dropped.
pub fn filter_sentences<'a>(doc: &'a Document, predicted: &[SectionLabel]) -> Vec<&'a Sentence> {
    doc.sentences
        .iter()
        .zip(predicted)
        .filter(|(_, l)| l.is_target())
        .map(|(s, _)| s)
        .collect()
}

/// Longest-match, left-to-right, non-overlapping scan of one text.
pub fn match_entities(text: &str, dict: &EntityDictionary) -> Vec<Entity> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let longest = dict.max_chars.min(chars.len() - i);
        let hit = (1..=longest).rev().find_map(|n| {
            let start = chars[i].0;
            let end = chars.get(i + n).map_or(text.len(), |c| c.0);
            dict.get(&text[start..end]).map(|c| (n, Entity::new(&text[start..end], c)))
        });
        match hit {
            Some((n, e)) => {
                out.push(e);
                i += n;
            }
            None => i += 1,
        }
    }
    out
}

/// Deduplicated entities over all given sentence texts of one paper.
pub fn extract_entities<'a, I>(texts: I, dict: &EntityDictionary) -> BTreeSet<Entity>
where
    I: IntoIterator<Item = &'a str>,
{
    texts.into_iter().flat_map(|t| match_entities(t, dict)).collect()
}

/// Pair counts with the pair in canonical (lexicographic) order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CooccurrenceTable {
    pub pairs: BTreeMap<(Entity, Entity), usize>,
}

fn canonical(a: &Entity, b: &Entity) -> (Entity, Entity) {
    if a <= b {
        (a.clone(), b.clone())
    } else {
        (b.clone(), a.clone())
    }
}

fn category_pair(a: &Entity, b: &Entity) -> (EntityCategory, EntityCategory) {
    (a.category.min(b.category), a.category.max(b.category))
}

impl CooccurrenceTable {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn count(&self, a: &Entity, b: &Entity) -> usize {
        self.pairs.get(&canonical(a, b)).copied().unwrap_or(0)
    }

    pub fn add(&mut self, a: &Entity, b: &Entity, n: usize) {
        if a != b && n > 0 {
            *self.pairs.entry(canonical(a, b)).or_insert(0) += n;
        }
    }

    pub fn merge(&mut self, other: &CooccurrenceTable) {
        for ((a, b), n) in &other.pairs {
            self.add(a, b, *n);
        }
    }

    /// Pairs with count strictly above `threshold`.
    pub fn relations(&self, threshold: usize) -> BTreeSet<&(Entity, Entity)> {
        self.pairs.iter().filter(|(_, &n)| n > threshold).map(|(p, _)| p).collect()
    }

    /// Number of relations above `threshold` per unordered category pair.
    pub fn relations_by_category(&self, threshold: usize) -> BTreeMap<(EntityCategory, EntityCategory), usize> {
        let mut m: BTreeMap<_, _> = EntityCategory::pairs().into_iter().map(|p| (p, 0)).collect();
        for (a, b) in self.relations(threshold) {
            *m.get_mut(&category_pair(a, b)).expect("all pairs present") += 1;
        }
        m
    }
}

/// Each paper adds one to every unordered pair of distinct entities in
/// its set.
pub fn cooccurrence_counts(papers: &[BTreeSet<Entity>]) -> CooccurrenceTable {
    let mut t = CooccurrenceTable::default();
    for set in papers {
        let v: Vec<&Entity> = set.iter().collect();
        for (i, a) in v.iter().enumerate() {
            for b in &v[i + 1..] {
                t.add(a, b, 1);
            }
        }
    }
    t
}

/// Pairs that co-occur inside at least one sentence of a paper, still
/// counted once per paper. Input is per paper, per sentence.
pub fn sentence_cooccurrence_counts(papers: &[Vec<BTreeSet<Entity>>]) -> CooccurrenceTable {
    let mut t = CooccurrenceTable::default();
    for sentences in papers {
        let mut seen: BTreeSet<(Entity, Entity)> = BTreeSet::new();
        for set in sentences {
            let v: Vec<&Entity> = set.iter().collect();
            for (i, a) in v.iter().enumerate() {
                for b in &v[i + 1..] {
                    seen.insert(canonical(a, b));
                }
            }
        }
        for (a, b) in seen {
            t.add(&a, &b, 1);
        }
    }
    t
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapRow {
    pub threshold: usize,
    /// `None` for the total over all category pairs.
    pub categories: Option<(EntityCategory, EntityCategory)>,
    pub unfiltered: usize,
    pub filtered: usize,
    /// `100·filtered/unfiltered`; 100 when both are empty.
    pub percent: f64,
}

fn percent(filtered: usize, unfiltered: usize) -> f64 {
    if unfiltered == 0 {
        if filtered == 0 {
            100.0
        } else {
            f64::INFINITY
        }
    } else {
        100.0 * filtered as f64 / unfiltered as f64
    }
}

/// For each threshold `t`, relation counts (count > t) in both tables per
/// category pair and in total.
pub fn threshold_overlap_stats(
    unfiltered: &CooccurrenceTable,
    filtered: &CooccurrenceTable,
    thresholds: &[usize],
) -> Vec<OverlapRow> {
    let mut rows = Vec::new();
    for &t in thresholds {
        let u = unfiltered.relations_by_category(t);
        let f = filtered.relations_by_category(t);
        for p in EntityCategory::pairs() {
            rows.push(OverlapRow {
                threshold: t,
                categories: Some(p),
                unfiltered: u[&p],
                filtered: f[&p],
                percent: percent(f[&p], u[&p]),
            });
        }
        let (ut, ft) = (u.values().sum(), f.values().sum());
        rows.push(OverlapRow {
            threshold: t,
            categories: None,
            unfiltered: ut,
            filtered: ft,
            percent: percent(ft, ut),
        });
    }
    rows
}

/// `threshold,categories,unfiltered,filtered,percent`, categories as
/// `disease-medicine` or `total`.
pub fn overlap_to_csv(rows: &[OverlapRow]) -> String {
    let mut s = String::from("threshold,categories,unfiltered,filtered,percent\n");
    for r in rows {
        let cats = r.categories.map_or("total".to_string(), |(a, b)| format!("{a}-{b}"));
        s.push_str(&format!(
            "{},{},{},{},{:.2}\n",
            r.threshold, cats, r.unfiltered, r.filtered, r.percent
        ));
    }
    s
}

const EDGE_HEADER: [&str; 5] = ["entity_a", "category_a", "entity_b", "category_b", "count"];

/// Pairs with count > `min_count`, by count descending then pair order.
pub fn edges(table: &CooccurrenceTable, min_count: usize) -> Vec<(&Entity, &Entity, usize)> {
    let mut v: Vec<_> = table
        .pairs
        .iter()
        .filter(|(_, &n)| n > min_count)
        .map(|((a, b), &n)| (a, b, n))
        .collect();
    v.sort_by(|x, y| y.2.cmp(&x.2).then_with(|| (x.0, x.1).cmp(&(y.0, y.1))));
    v
}

pub fn write_edges<W: std::io::Write>(table: &CooccurrenceTable, min_count: usize, out: W) -> Result<()> {
    let csv_err = |e: csv::Error| Error::data(format!("edge list: {e}"));
    let mut w = csv::Writer::from_writer(out);
    w.write_record(EDGE_HEADER).map_err(csv_err)?;
    for (a, b, n) in edges(table, min_count) {
        w.write_record([a.surface.as_str(), a.category.as_str(), b.surface.as_str(), b.category.as_str(), &n.to_string()])
            .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::data(format!("edge list: {e}")))
}

pub fn export_edges(table: &CooccurrenceTable, min_count: usize, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_edges(table, min_count, std::io::BufWriter::new(f)).map_err(|e| e.context(path.display().to_string()))
}

pub fn parse_edges<R: std::io::Read>(input: R, origin: &str) -> Result<CooccurrenceTable> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers().map_err(|e| Error::data(format!("{origin}: {e}")))?;
    if header.iter().ne(EDGE_HEADER) {
        return Err(Error::Parse {
            path: origin.to_string(),
            line: 1,
            message: format!("expected header `{}`", EDGE_HEADER.join(",")),
        });
    }
    let mut t = CooccurrenceTable::default();
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let err = |message: String| Error::Parse {
            path: origin.to_string(),
            line,
            message,
        };
        let rec = rec.map_err(|e| err(e.to_string()))?;
        if rec.len() != 5 {
            return Err(err(format!("expected 5 fields, found {}", rec.len())));
        }
        let cat = |i: usize| rec[i].parse::<EntityCategory>().map_err(|e| err(e.to_string()));
        let a = Entity::new(&rec[0], cat(1)?);
        let b = Entity::new(&rec[2], cat(3)?);
        let n: usize = rec[4].parse().map_err(|_| err(format!("bad count `{}`", &rec[4])))?;
        t.add(&a, &b, n);
    }
    Ok(t)
}

pub fn read_edges(path: &Path) -> Result<CooccurrenceTable> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_edges(f, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use EntityCategory::*;

    fn dict(entries: &[(&str, EntityCategory)]) -> EntityDictionary {
        entries.iter().map(|(s, c)| (s.to_string(), *c)).collect()
    }

    #[test]
    fn filter_keeps_target_sentences() {
        let doc = Document::from_paragraphs("d", "t", &["甲。乙。丙。丁。"]).unwrap();
        use SectionLabel::*;
        let kept = filter_sentences(&doc, &[Pre, Subject, Method, After]);
        assert_eq!(kept.iter().map(|s| s.index).collect::<Vec<_>>(), [1, 2]);
        assert!(filter_sentences(&doc, &[Pre, Other, After, After]).is_empty());
    }

    #[test]
    fn dictionary_matching() {
        let d = dict(&[("哮喘", Disease), ("大椎", Acupoint)]);
        let got = extract_entities(["采用穴位贴敷治疗小儿哮喘，贴敷在大椎、肺俞等穴位。"], &d);
        assert_eq!(
            got.into_iter().collect::<Vec<_>>(),
            [Entity::new("哮喘", Disease), Entity::new("大椎", Acupoint)]
        );
        let d = dict(&[("哮喘", Disease), ("支气管哮喘", Disease)]);
        assert_eq!(match_entities("支气管哮喘", &d), [Entity::new("支气管哮喘", Disease)]);
        assert!(extract_entities(["哮喘"], &EntityDictionary::new()).is_empty());
    }

    #[test]
    fn insertion_order_does_not_matter() {
        let entries = [("哮喘", Disease), ("支气管哮喘", Disease), ("管哮", Medicine), ("气管", Acupoint)];
        let text = "支气管哮喘与气管炎及管哮";
        let a = extract_entities([text], &dict(&entries));
        let mut rev = entries;
        rev.reverse();
        assert_eq!(extract_entities([text], &dict(&rev)), a);
    }

    #[test]
    fn dictionary_tsv() {
        let d = EntityDictionary::parse("哮喘\tdisease\n\n大椎\tacupoint\n", "mem").unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(EntityDictionary::parse(&d.to_tsv(), "mem").unwrap(), d);
        assert!(EntityDictionary::parse("哮喘 disease\n", "mem").is_err());
        assert!(EntityDictionary::parse("哮喘\tsymptom\n", "mem").is_err());
        assert!(EntityDictionary::parse("哮喘\tdisease\n哮喘\tmedicine\n", "mem").is_err());
    }

    fn e(s: &str) -> Entity {
        Entity::new(s, Disease)
    }

    #[test]
    fn paper_level_counts() {
        let p: BTreeSet<Entity> = [e("A"), e("B")].into();
        let t = cooccurrence_counts(&[p.clone(), p]);
        assert_eq!(t.count(&e("B"), &e("A")), 2);
        assert!(cooccurrence_counts(&[[e("A")].into()]).is_empty());
    }

    #[test]
    fn random_counts_match_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pool: Vec<Entity> = (0..8).map(|i| Entity::new(format!("e{i}"), EntityCategory::ALL[i % 3])).collect();
        let papers: Vec<BTreeSet<Entity>> = (0..5)
            .map(|_| pool.iter().filter(|_| rng.gen_bool(0.5)).cloned().collect())
            .collect();
        let t = cooccurrence_counts(&papers);
        for a in &pool {
            for b in &pool {
                if a < b {
                    let n = papers.iter().filter(|p| p.contains(a) && p.contains(b)).count();
                    assert_eq!(t.count(a, b), n);
                }
            }
        }
    }

    #[test]
    fn sentence_level_mode_is_stricter() {
        let s1: BTreeSet<Entity> = [e("A"), e("B")].into();
        let s2: BTreeSet<Entity> = [e("A"), e("B"), e("C")].into();
        let t = sentence_cooccurrence_counts(&[vec![s1.clone(), s2], vec![s1, [e("C")].into()]]);
        assert_eq!(t.count(&e("A"), &e("B")), 2);
        assert_eq!(t.count(&e("A"), &e("C")), 1);
    }

    #[test]
    fn overlap_conventions() {
        let p1: BTreeSet<Entity> = [e("A"), Entity::new("X", Medicine), Entity::new("Y", Acupoint)].into();
        let t = cooccurrence_counts(&[p1.clone(), p1]);
        for r in threshold_overlap_stats(&t, &t, &[0, 1, 5]) {
            assert_eq!(r.percent, 100.0);
        }
        let small = cooccurrence_counts(&[[e("A"), Entity::new("X", Medicine)].into()]);
        let rows = threshold_overlap_stats(&t, &small, &[0]);
        let total = rows.last().unwrap();
        assert_eq!((total.unfiltered, total.filtered), (3, 1));
        assert!((total.percent - 100.0 / 3.0).abs() < 1e-12);
        assert_eq!(rows.len(), 7);
        assert!(overlap_to_csv(&rows).contains("0,disease-medicine,1,1,100.00"));
    }

    #[test]
    fn edges_sort_filter_and_round_trip() {
        let mut t = CooccurrenceTable::default();
        t.add(&e("B"), &e("C"), 12);
        t.add(&e("A"), &e("C"), 12);
        t.add(&e("A"), &e("B"), 30);
        t.add(&e("A"), &e("D"), 10);
        let mut buf = Vec::new();
        write_edges(&t, 10, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(
            text,
            "entity_a,category_a,entity_b,category_b,count\nA,disease,B,disease,30\nA,disease,C,disease,12\nB,disease,C,disease,12\n"
        );
        let back = parse_edges(buf.as_slice(), "mem").unwrap();
        let mut expected = t.clone();
        expected.pairs.retain(|_, n| *n > 10);
        assert_eq!(back, expected);

        let mut empty = Vec::new();
        write_edges(&CooccurrenceTable::default(), 0, &mut empty).unwrap();
        assert_eq!(String::from_utf8(empty).unwrap(), "entity_a,category_a,entity_b,category_b,count\n");
        assert!(export_edges(&t, 0, Path::new("/nonexistent/dir/x.csv")).is_err());
    }
}
