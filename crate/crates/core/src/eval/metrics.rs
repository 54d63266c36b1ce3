use serde::{Deserialize, Serialize};

use crate::corpus::SectionLabel;
use crate::error::{Error, Result};

const L: usize = SectionLabel::COUNT;

/// Per-label counts behind precision and recall.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub true_positive: [usize; L],
    pub predicted: [usize; L],
    pub gold: [usize; L],
}

impl ConfusionCounts {
    pub fn from_labels(predicted: &[SectionLabel], gold: &[SectionLabel]) -> Result<Self> {
        if predicted.len() != gold.len() {
            return Err(Error::data(format!(
                "{} predictions but {} gold labels",
                predicted.len(),
                gold.len()
            )));
        }
        let mut c = ConfusionCounts::default();
        for (&p, &g) in predicted.iter().zip(gold) {
            c.predicted[p.index()] += 1;
            c.gold[g.index()] += 1;
            if p == g {
                c.true_positive[p.index()] += 1;
            }
        }
        Ok(c)
    }

    pub fn merge(&mut self, other: &ConfusionCounts) {
        for l in 0..L {
            self.true_positive[l] += other.true_positive[l];
            self.predicted[l] += other.predicted[l];
            self.gold[l] += other.gold[l];
        }
    }

    pub fn total(&self) -> usize {
        self.gold.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LabelMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Harmonic mean of P and R, zero when both are zero.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub labels: [LabelMetrics; L],
    pub counts: ConfusionCounts,
}

impl EvalReport {
    pub fn from_counts(counts: ConfusionCounts) -> Self {
        let mut labels = [LabelMetrics::default(); L];
        for (l, m) in labels.iter_mut().enumerate() {
            let tp = counts.true_positive[l] as f64;
            m.precision = if counts.predicted[l] > 0 { tp / counts.predicted[l] as f64 } else { 0.0 };
            m.recall = if counts.gold[l] > 0 { tp / counts.gold[l] as f64 } else { 0.0 };
            m.f1 = f1_score(m.precision, m.recall);
        }
        EvalReport { labels, counts }
    }

    pub fn label(&self, label: SectionLabel) -> &LabelMetrics {
        &self.labels[label.index()]
    }

    /// Mean F1 over Subject, Method and Result.
    pub fn macro_f1(&self) -> f64 {
        let t = SectionLabel::TARGETS;
        t.iter().map(|&l| self.label(l).f1).sum::<f64>() / t.len() as f64
    }

    /// Per-cell average over folds. The averaged F1 is the mean of fold
    /// F1 values, not the harmonic mean of the averaged P and R.
    pub fn mean(reports: &[EvalReport]) -> EvalReport {
        let mut out = EvalReport::default();
        if reports.is_empty() {
            return out;
        }
        let n = reports.len() as f64;
        for r in reports {
            out.counts.merge(&r.counts);
            for l in 0..L {
                out.labels[l].precision += r.labels[l].precision / n;
                out.labels[l].recall += r.labels[l].recall / n;
                out.labels[l].f1 += r.labels[l].f1 / n;
            }
        }
        out
    }
}

pub fn precision_recall_f1(predicted: &[SectionLabel], gold: &[SectionLabel]) -> Result<EvalReport> {
    Ok(EvalReport::from_counts(ConfusionCounts::from_labels(predicted, gold)?))
}
