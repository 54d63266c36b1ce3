use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{kfold_split, paired_ttest, precision_recall_f1, EvalReport, Fold, TTest};
use crate::annotate::AnnotatedDocument;
use crate::corpus::SectionLabel;
use crate::error::{Error, Result};
use crate::pipeline::{FeaturePipeline, ModelSpec, TrainedModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvOptions {
    /// Fit feature vocabularies and IG selection once on the whole corpus
    /// instead of per training fold.
    pub paper_mode: bool,
    /// Worker threads for fold-level parallelism.
    pub jobs: usize,
}

impl Default for CvOptions {
    fn default() -> Self {
        CvOptions {
            paper_mode: false,
            jobs: 1,
        }
    }
}

fn pick(docs: &[AnnotatedDocument], idx: &[usize]) -> Vec<AnnotatedDocument> {
    idx.iter().map(|&i| docs[i].clone()).collect()
}

fn run_fold(
    docs: &[AnnotatedDocument],
    spec: &ModelSpec,
    fold: &Fold,
    global: Option<&FeaturePipeline>,
) -> Result<EvalReport> {
    let train = pick(docs, &fold.train);
    let model = TrainedModel::train_with_features(spec, &train, global)?;
    let mut predicted = Vec::new();
    let mut gold = Vec::new();
    for &i in &fold.test {
        predicted.extend(model.predict(&docs[i])?);
        gold.extend(docs[i].document.gold_labels()?);
    }
    precision_recall_f1(&predicted, &gold)
}

/// Trains and evaluates `spec` once per fold. Fold `f` trains with seed
/// `seed + f`; results come back in fold order whatever `options.jobs`.
pub fn cross_validate(
    docs: &[AnnotatedDocument],
    spec: &ModelSpec,
    folds: &[Fold],
    seed: u64,
    options: &CvOptions,
) -> Result<Vec<EvalReport>> {
    let global = if options.paper_mode && !spec.kind.is_neural() {
        Some(FeaturePipeline::fit(docs, &spec.features, spec.selection_threshold)?)
    } else {
        None
    };
    let one = |(f, fold): (usize, &Fold)| {
        let s = spec.clone().with_seed(seed.wrapping_add(f as u64));
        run_fold(docs, &s, fold, global.as_ref()).map_err(|e| e.context(format!("model `{}`, fold {}", spec.name, f + 1)))
    };
    if options.jobs <= 1 {
        return folds.iter().enumerate().map(one).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.jobs)
        .build()
        .map_err(|e| Error::config(format!("thread pool: {e}")))?;
    pool.install(|| folds.par_iter().enumerate().map(one).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Precision,
    Recall,
    F1,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Precision, Metric::Recall, Metric::F1];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Precision => "precision",
            Metric::Recall => "recall",
            Metric::F1 => "f1",
        }
    }

    fn of(self, r: &EvalReport, label: SectionLabel) -> f64 {
        let m = r.label(label);
        match self {
            Metric::Precision => m.precision,
            Metric::Recall => m.recall,
            Metric::F1 => m.f1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResult {
    pub spec: ModelSpec,
    pub folds: Vec<EvalReport>,
}

impl ModelResult {
    pub fn values(&self, label: SectionLabel, metric: Metric) -> Vec<f64> {
        self.folds.iter().map(|r| metric.of(r, label)).collect()
    }

    pub fn macro_f1_values(&self) -> Vec<f64> {
        self.folds.iter().map(EvalReport::macro_f1).collect()
    }

    pub fn mean(&self) -> EvalReport {
        EvalReport::mean(&self.folds)
    }
}

/// A paired t-test between models `a` and `b` (indices into the report's
/// model list) on one cell; `label` is `None` for macro-F1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub a: usize,
    pub b: usize,
    pub label: Option<SectionLabel>,
    pub metric: Metric,
    pub test: TTest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub k: usize,
    pub seed: u64,
    pub folds: Vec<Fold>,
    pub models: Vec<ModelResult>,
    pub comparisons: Vec<Comparison>,
}

/// Stars for a p-value: `***` below 0.01, `**` below 0.05, `*` below 0.1.
pub fn significance_stars(p: f64) -> &'static str {
    if p < 0.01 {
        "***"
    } else if p < 0.05 {
        "**"
    } else if p < 0.1 {
        "*"
    } else {
        ""
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Cross-validates every spec on the same folds and t-tests every model
/// pair on every (label, metric) cell and on macro-F1.
pub fn run_experiment(
    docs: &[AnnotatedDocument],
    specs: &[ModelSpec],
    k: usize,
    seed: u64,
    options: &CvOptions,
) -> Result<ExperimentReport> {
    if specs.is_empty() {
        return Err(Error::config("no models to evaluate"));
    }
    if let Some(d) = docs.iter().find(|d| !d.document.is_labeled()) {
        return Err(Error::data(format!("document `{}` has unlabeled sentences", d.id())));
    }
    let folds = kfold_split(docs.len(), k, seed)?;
    let mut models = Vec::with_capacity(specs.len());
    for spec in specs {
        models.push(ModelResult {
            spec: spec.clone(),
            folds: cross_validate(docs, spec, &folds, seed, options)?,
        });
    }
    let mut comparisons = Vec::new();
    for a in 0..models.len() {
        for b in a + 1..models.len() {
            for label in SectionLabel::ALL {
                for metric in Metric::ALL {
                    let test = paired_ttest(&models[a].values(label, metric), &models[b].values(label, metric))?;
                    comparisons.push(Comparison {
                        a,
                        b,
                        label: Some(label),
                        metric,
                        test,
                    });
                }
            }
            let test = paired_ttest(&models[a].macro_f1_values(), &models[b].macro_f1_values())?;
            comparisons.push(Comparison {
                a,
                b,
                label: None,
                metric: Metric::F1,
                test,
            });
        }
    }
    Ok(ExperimentReport {
        k,
        seed,
        folds,
        models,
        comparisons,
    })
}

impl ExperimentReport {
    pub fn model(&self, name: &str) -> Option<&ModelResult> {
        self.models.iter().find(|m| m.spec.name == name)
    }

    pub fn comparison(&self, a: &str, b: &str, label: Option<SectionLabel>, metric: Metric) -> Option<&Comparison> {
        let ia = self.models.iter().position(|m| m.spec.name == a)?;
        let ib = self.models.iter().position(|m| m.spec.name == b)?;
        let (lo, hi) = (ia.min(ib), ia.max(ib));
        self.comparisons
            .iter()
            .find(|c| c.a == lo && c.b == hi && c.label == label && c.metric == metric)
    }

    /// `model,label,metric,mean,std,fold_1,…,fold_k`; 18 rows per model.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("model,label,metric,mean,std");
        for f in 1..=self.k {
            let _ = write!(s, ",fold_{f}");
        }
        s.push('\n');
        for m in &self.models {
            for label in SectionLabel::ALL {
                for metric in Metric::ALL {
                    let v = m.values(label, metric);
                    let (mean, std) = mean_std(&v);
                    let _ = write!(s, "{},{},{},{:.6},{:.6}", m.spec.name, label, metric.as_str(), mean, std);
                    for x in v {
                        let _ = write!(s, ",{x:.6}");
                    }
                    s.push('\n');
                }
            }
        }
        s
    }

    /// Pairwise tests as `model_a,model_b,label,metric,t,p,df,degenerate`.
    pub fn tests_to_csv(&self) -> String {
        let mut s = String::from("model_a,model_b,label,metric,t,p,df,degenerate\n");
        for c in &self.comparisons {
            let _ = writeln!(
                s,
                "{},{},{},{},{:.6},{:.6},{},{}",
                self.models[c.a].spec.name,
                self.models[c.b].spec.name,
                c.label.map_or("macro", |l| l.as_str()),
                c.metric.as_str(),
                c.test.t,
                c.test.p,
                c.test.df,
                c.test.degenerate
            );
        }
        s
    }

    /// Percentages for the target labels. Every model after the first is
    /// starred where it differs from the first model at the given level.
    pub fn to_table(&self) -> String {
        let name_w = self.models.iter().map(|m| m.spec.name.len()).max().unwrap_or(5).max(5);
        let mut s = format!("{:name_w$}", "Model");
        for l in SectionLabel::TARGETS {
            let _ = write!(s, " | {:^26}", l.as_str());
        }
        s.push_str(" | macro-F1\n");
        let _ = write!(s, "{:name_w$}", "");
        for _ in SectionLabel::TARGETS {
            let _ = write!(s, " | {:>8}{:>9}{:>9}", "P", "R", "F1");
        }
        s.push_str(" |\n");
        for (i, m) in self.models.iter().enumerate() {
            let _ = write!(s, "{:name_w$}", m.spec.name);
            let stars = |label: Option<SectionLabel>, metric: Metric| {
                if i == 0 {
                    return "";
                }
                self.comparisons
                    .iter()
                    .find(|c| c.a == 0 && c.b == i && c.label == label && c.metric == metric)
                    .map_or("", |c| significance_stars(c.test.p))
            };
            for l in SectionLabel::TARGETS {
                s.push_str(" |");
                for metric in Metric::ALL {
                    let (mean, _) = mean_std(&m.values(l, metric));
                    let _ = write!(s, " {:>5.1}{:<3}", 100.0 * mean, stars(Some(l), metric));
                }
            }
            let (mf, _) = mean_std(&m.macro_f1_values());
            let _ = writeln!(s, " | {:>5.1}{}", 100.0 * mf, stars(None, Metric::F1));
        }
        s.push_str("***p<0.01; **p<0.05; *p<0.1 against the first model (paired t-test over folds)\n");
        s
    }
}
