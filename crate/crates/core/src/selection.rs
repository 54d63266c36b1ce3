//! Information-gain feature scoring and threshold selection.

use std::collections::HashMap;

use crate::annotate::AnnotatedDocument;
use crate::corpus::SectionLabel;
use crate::error::{Error, Result};
use crate::eval::{cross_validate, kfold_split, CvOptions, EvalReport};
use crate::features::{FeatureSpace, SparseVector};
use crate::pipeline::ModelSpec;

const L: usize = SectionLabel::COUNT;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureScore {
    pub name: String,
    pub dim: usize,
    /// Bits.
    pub ig: f64,
}

/// Per-label counts of sentences in which each feature is present.
///
/// Counts from disjoint partitions merge by addition, so scoring can be
/// split across workers without changing the result.
#[derive(Debug, Clone, Default)]
pub struct PresenceCounts {
    label_totals: [usize; L],
    present: HashMap<usize, [usize; L]>,
}

impl PresenceCounts {
    pub fn add(&mut self, vector: &SparseVector, label: SectionLabel) {
        self.label_totals[label.index()] += 1;
        for (d, v) in vector.iter() {
            if v > 0.0 {
                self.present.entry(d).or_insert([0; L])[label.index()] += 1;
            }
        }
    }

    pub fn merge(&mut self, other: &PresenceCounts) {
        for (a, b) in self.label_totals.iter_mut().zip(other.label_totals) {
            *a += b;
        }
        for (d, counts) in &other.present {
            let e = self.present.entry(*d).or_insert([0; L]);
            for (a, b) in e.iter_mut().zip(counts) {
                *a += b;
            }
        }
    }

    pub fn total(&self) -> usize {
        self.label_totals.iter().sum()
    }

    /// IG of feature `dim` in bits.
    pub fn gain(&self, dim: usize) -> f64 {
        let n = self.total() as f64;
        let h_y = entropy(&self.label_totals);
        let present = self.present.get(&dim).copied().unwrap_or([0; L]);
        let mut absent = [0usize; L];
        for c in 0..L {
            absent[c] = self.label_totals[c] - present[c];
        }
        let n_present: usize = present.iter().sum();
        let n_absent = self.total() - n_present;
        let conditional = n_present as f64 / n * entropy(&present) + n_absent as f64 / n * entropy(&absent);
        (h_y - conditional).max(0.0)
    }
}

/// Shannon entropy in bits, with 0·log 0 = 0.
pub fn entropy(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

/// Scores every dimension of `space`, binarizing values at > 0.
pub fn information_gain(
    vectors: &[&SparseVector],
    labels: &[SectionLabel],
    space: &FeatureSpace,
) -> Result<Vec<FeatureScore>> {
    if vectors.is_empty() {
        return Err(Error::data("information gain needs at least one sentence"));
    }
    if vectors.len() != labels.len() {
        return Err(Error::data(format!(
            "{} vectors but {} labels",
            vectors.len(),
            labels.len()
        )));
    }
    let mut counts = PresenceCounts::default();
    for (v, &l) in vectors.iter().zip(labels) {
        counts.add(v, l);
    }
    Ok((0..space.len())
        .map(|dim| FeatureScore {
            name: space.name(dim).to_string(),
            dim,
            ig: counts.gain(dim),
        })
        .collect())
}

/// Scores sorted by descending IG, ties by name.
pub fn ranked(scores: &[FeatureScore]) -> Vec<&FeatureScore> {
    let mut out: Vec<&FeatureScore> = scores.iter().collect();
    out.sort_by(|a, b| b.ig.total_cmp(&a.ig).then_with(|| a.name.cmp(&b.name)));
    out
}

/// `feature<TAB>ig`, sorted descending.
pub fn scores_to_tsv(scores: &[FeatureScore]) -> String {
    ranked(scores)
        .into_iter()
        .map(|s| format!("{}\t{}\n", s.name, s.ig))
        .collect()
}

/// Maps dimensions of an original space onto a reduced one.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Projection {
    map: Vec<Option<usize>>,
}

impl Projection {
    pub fn identity(dims: usize) -> Self {
        Projection {
            map: (0..dims).map(Some).collect(),
        }
    }

    /// Keeps the listed original dimensions, in ascending order.
    pub fn keeping(original_dims: usize, kept: &[usize]) -> Self {
        let mut map = vec![None; original_dims];
        let mut kept = kept.to_vec();
        kept.sort_unstable();
        kept.dedup();
        for (new, &old) in kept.iter().enumerate() {
            map[old] = Some(new);
        }
        Projection { map }
    }

    pub fn original_dims(&self) -> usize {
        self.map.len()
    }

    pub fn reduced_dims(&self) -> usize {
        self.map.iter().flatten().count()
    }

    pub fn get(&self, dim: usize) -> Option<usize> {
        self.map.get(dim).copied().flatten()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub space: FeatureSpace,
    pub projection: Projection,
}

/// Keeps features with IG ≥ `threshold`, structural ones included.
pub fn select_features(scores: &[FeatureScore], space: &FeatureSpace, threshold: f64) -> Result<Selection> {
    if !(threshold >= 0.0) {
        return Err(Error::config("selection threshold must be non-negative"));
    }
    let kept: Vec<usize> = scores
        .iter()
        .filter(|s| s.ig >= threshold)
        .map(|s| s.dim)
        .collect();
    let projection = Projection::keeping(space.len(), &kept);
    let mut names = vec![String::new(); projection.reduced_dims()];
    for dim in 0..space.len() {
        if let Some(new) = projection.get(dim) {
            names[new] = space.name(dim).to_string();
        }
    }
    Ok(Selection {
        space: FeatureSpace::new(names)?,
        projection,
    })
}

/// Re-indexes surviving dimensions; dropped ones disappear.
pub fn project(vector: &SparseVector, projection: &Projection) -> SparseVector {
    // `keeping` preserves order, so the output stays sorted.
    let pairs = vector
        .iter()
        .filter_map(|(d, v)| projection.get(d).map(|n| (n, v)))
        .collect();
    SparseVector::from_sorted_unchecked(pairs)
}

/// Thresholds covering the region where selection starts to matter.
pub const DEFAULT_SWEEP: [f64; 9] = [0.001, 0.003, 0.005, 0.007, 0.009, 0.01, 0.012, 0.015, 0.02];

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub threshold: f64,
    pub model: String,
    pub label: SectionLabel,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Runs the whole select → train → evaluate loop once per threshold,
/// reporting fold-averaged scores.
pub fn sweep_thresholds(
    docs: &[AnnotatedDocument],
    spec: &ModelSpec,
    thresholds: &[f64],
    k: usize,
    seed: u64,
    options: &CvOptions,
) -> Result<Vec<SweepRow>> {
    if thresholds.is_empty() {
        return Err(Error::config("no thresholds to sweep"));
    }
    let folds = kfold_split(docs.len(), k, seed)?;
    let mut rows = Vec::new();
    for &t in thresholds {
        let mut s = spec.clone();
        s.selection_threshold = Some(t);
        let reports = cross_validate(docs, &s, &folds, seed, options)?;
        let mean = EvalReport::mean(&reports);
        for label in SectionLabel::ALL {
            let m = mean.label(label);
            rows.push(SweepRow {
                threshold: t,
                model: spec.name.clone(),
                label,
                precision: m.precision,
                recall: m.recall,
                f1: m.f1,
            });
        }
    }
    Ok(rows)
}

pub fn sweep_to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("threshold,model,label,precision,recall,f1\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{:.6},{:.6},{:.6}\n",
            r.threshold, r.model, r.label, r.precision, r.recall, r.f1
        ));
    }
    out
}
