//! Model specifications and the train/predict path shared by all six
//! model kinds.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::annotate::AnnotatedDocument;
use crate::classic::{
    crf_predict, crf_train, predict_linear, train_logreg, train_svm, CrfConfig, CrfExample, CrfModel, LinearModel,
    LogRegConfig, SvmConfig,
};
use crate::container::Container;
use crate::corpus::SectionLabel;
use crate::error::{Error, Result};
use crate::features::{train_feature_models, FeatureExtractor, FeatureSettings, FeatureSpace, SparseVector};
use crate::neural::{
    predict_slstm, train_slstm, train_word_embeddings, EmbeddingConfig, EmbeddingTable, SlstmConfig, SlstmModel,
    TrainingLog,
};
use crate::selection::{information_gain, project, select_features, Projection};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Lr,
    Svm,
    Crf,
    Blstm,
    Clstm,
    Slstm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::Lr,
        ModelKind::Svm,
        ModelKind::Crf,
        ModelKind::Blstm,
        ModelKind::Clstm,
        ModelKind::Slstm,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Lr => "lr",
            ModelKind::Svm => "svm",
            ModelKind::Crf => "crf",
            ModelKind::Blstm => "blstm",
            ModelKind::Clstm => "clstm",
            ModelKind::Slstm => "slstm",
        }
    }

    pub fn is_neural(self) -> bool {
        matches!(self, ModelKind::Blstm | ModelKind::Clstm | ModelKind::Slstm)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::config(format!("unknown model `{s}` (expected lr|svm|crf|blstm|clstm|slstm)")))
    }
}

/// Everything needed to train one model from a labeled corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    pub kind: ModelKind,
    pub features: FeatureSettings,
    /// IG cut-off; `None` keeps every feature.
    pub selection_threshold: Option<f64>,
    pub logreg: LogRegConfig,
    pub svm: SvmConfig,
    pub crf: CrfConfig,
    pub slstm: SlstmConfig,
    /// Skip-gram pretraining on the training sentences; `None` starts
    /// from random vectors.
    pub embeddings: Option<EmbeddingConfig>,
}

/// The IG threshold reported as the best operating point.
pub const PAPER_THRESHOLD: f64 = 0.009;

impl ModelSpec {
    pub fn new(kind: ModelKind) -> Self {
        let slstm = match kind {
            ModelKind::Blstm => SlstmConfig::blstm(),
            ModelKind::Clstm => SlstmConfig::clstm(),
            _ => SlstmConfig::default(),
        };
        ModelSpec {
            name: kind.as_str().to_string(),
            kind,
            features: FeatureSettings::default(),
            selection_threshold: None,
            logreg: LogRegConfig::default(),
            svm: SvmConfig::default(),
            crf: CrfConfig::default(),
            embeddings: kind.is_neural().then(|| EmbeddingConfig {
                dim: slstm.embed_dim,
                ..Default::default()
            }),
            slstm,
        }
    }

    /// All feature families, IG selection at the reported threshold and
    /// the reported network hyperparameters.
    pub fn paper_defaults(kind: ModelKind) -> Self {
        ModelSpec {
            selection_threshold: (!kind.is_neural()).then_some(PAPER_THRESHOLD),
            ..ModelSpec::new(kind)
        }
    }

    /// Sets every seed in the spec.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.set_seed(seed);
        self
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.features.lda.seed = seed;
        self.features.doc2vec.seed = seed;
        self.logreg.seed = seed;
        self.svm.seed = seed;
        self.crf.seed = seed;
        self.slstm.seed = seed;
        if let Some(e) = &mut self.embeddings {
            e.seed = seed;
        }
    }

    /// Network config with the structural switches the kind implies.
    pub fn network_config(&self) -> SlstmConfig {
        let mut c = self.slstm.clone();
        match self.kind {
            ModelKind::Blstm => {
                c.window = 0;
                c.heading_branch = false;
            }
            ModelKind::Clstm => c.heading_branch = false,
            _ => {}
        }
        c
    }
}

/// Fitted feature extraction followed by IG projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturePipeline {
    pub extractor: FeatureExtractor,
    pub projection: Projection,
    /// The space after projection.
    pub space: FeatureSpace,
}

impl FeaturePipeline {
    pub fn fit(docs: &[AnnotatedDocument], settings: &FeatureSettings, threshold: Option<f64>) -> Result<Self> {
        let models = train_feature_models(docs, settings)?;
        let extractor = FeatureExtractor::fit(docs, settings.families, models, settings.min_count)?;
        let Some(t) = threshold else {
            return Ok(FeaturePipeline {
                projection: Projection::identity(extractor.space().len()),
                space: extractor.space().clone(),
                extractor,
            });
        };
        let mut vectors = Vec::new();
        let mut labels = Vec::new();
        for d in docs {
            vectors.extend(extractor.transform(d));
            labels.extend(d.document.gold_labels()?);
        }
        let refs: Vec<&SparseVector> = vectors.iter().collect();
        let scores = information_gain(&refs, &labels, extractor.space())?;
        let sel = select_features(&scores, extractor.space(), t)?;
        Ok(FeaturePipeline {
            extractor,
            projection: sel.projection,
            space: sel.space,
        })
    }

    pub fn transform(&self, doc: &AnnotatedDocument) -> Vec<SparseVector> {
        self.extractor
            .transform(doc)
            .iter()
            .map(|v| project(v, &self.projection))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Estimator {
    Linear(LinearModel),
    Crf(CrfModel),
    Neural(Box<SlstmModel>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub spec: ModelSpec,
    pub features: Option<FeaturePipeline>,
    pub estimator: Estimator,
    pub log: Option<TrainingLog>,
}

fn require_labeled(docs: &[AnnotatedDocument]) -> Result<()> {
    if docs.is_empty() {
        return Err(Error::data("empty training corpus"));
    }
    match docs.iter().find(|d| !d.document.is_labeled()) {
        Some(d) => Err(Error::data(format!("document `{}` has unlabeled sentences", d.id()))),
        None => Ok(()),
    }
}

impl TrainedModel {
    pub fn train(spec: &ModelSpec, docs: &[AnnotatedDocument]) -> Result<Self> {
        TrainedModel::train_with_features(spec, docs, None)
    }

    /// Uses `features` when given instead of fitting them on `docs`.
    pub fn train_with_features(
        spec: &ModelSpec,
        docs: &[AnnotatedDocument],
        features: Option<&FeaturePipeline>,
    ) -> Result<Self> {
        require_labeled(docs)?;
        if spec.kind.is_neural() {
            return TrainedModel::train_network(spec, docs, None);
        }

        let pipeline = match features {
            Some(f) => f.clone(),
            None => FeaturePipeline::fit(docs, &spec.features, spec.selection_threshold)?,
        };
        let dims = pipeline.space.len();
        let vectors: Vec<Vec<SparseVector>> = docs.iter().map(|d| pipeline.transform(d)).collect();
        let gold: Vec<Vec<SectionLabel>> = docs.iter().map(|d| d.document.gold_labels()).collect::<Result<_>>()?;
        let estimator = match spec.kind {
            ModelKind::Crf => {
                let idx: Vec<Vec<usize>> = gold.iter().map(|g| g.iter().map(|l| l.index()).collect()).collect();
                let examples: Vec<CrfExample<'_>> = vectors
                    .iter()
                    .zip(&idx)
                    .map(|(v, l)| CrfExample { vectors: v, labels: l })
                    .collect();
                Estimator::Crf(crf_train(&examples, SectionLabel::COUNT, dims, &spec.crf)?)
            }
            kind => {
                let xs: Vec<&SparseVector> = vectors.iter().flatten().collect();
                let ys: Vec<SectionLabel> = gold.into_iter().flatten().collect();
                Estimator::Linear(if kind == ModelKind::Lr {
                    train_logreg(&xs, &ys, dims, &spec.logreg)?
                } else {
                    train_svm(&xs, &ys, dims, &spec.svm)?
                })
            }
        };
        Ok(TrainedModel {
            spec: spec.clone(),
            features: Some(pipeline),
            estimator,
            log: None,
        })
    }

    /// Network training; `embeddings` overrides the spec's pretraining.
    pub fn train_network(
        spec: &ModelSpec,
        docs: &[AnnotatedDocument],
        embeddings: Option<&EmbeddingTable>,
    ) -> Result<Self> {
        if !spec.kind.is_neural() {
            return Err(Error::config(format!("`{}` is not a network model", spec.kind)));
        }
        require_labeled(docs)?;
        let config = spec.network_config();
        let pretrained = match (embeddings, &spec.embeddings) {
            (Some(_), _) | (None, None) => None,
            (None, Some(e)) => {
                let sentences: Vec<Vec<&str>> = docs
                    .iter()
                    .flat_map(|d| d.tokens.iter())
                    .map(|s| s.iter().map(|t| t.surface.as_str()).collect())
                    .collect();
                let cfg = EmbeddingConfig {
                    dim: config.embed_dim,
                    ..*e
                };
                Some(train_word_embeddings(&sentences, &cfg)?)
            }
        };
        let (model, log) = train_slstm(docs, &config, embeddings.or(pretrained.as_ref()))?;
        Ok(TrainedModel {
            spec: spec.clone(),
            features: None,
            estimator: Estimator::Neural(Box::new(model)),
            log: Some(log),
        })
    }

    pub fn predict(&self, doc: &AnnotatedDocument) -> Result<Vec<SectionLabel>> {
        match (&self.estimator, &self.features) {
            (Estimator::Neural(m), _) => Ok(predict_slstm(m, doc)?.into_iter().map(|(l, _)| l).collect()),
            (Estimator::Crf(m), Some(f)) => Ok(crf_predict(m, &f.transform(doc))),
            (Estimator::Linear(m), Some(f)) => f
                .transform(doc)
                .iter()
                .map(|v| predict_linear(m, v).map(|(l, _)| l))
                .collect(),
            _ => Err(Error::Format("feature-based model without its feature pipeline".into())),
        }
    }

    /// Nonzero weights as `label,offset,feature,weight` lines; empty for
    /// neural models.
    pub fn dump(&self) -> String {
        match (&self.estimator, &self.features) {
            (Estimator::Linear(m), Some(f)) => m.dump(&f.space),
            (Estimator::Crf(m), Some(f)) => m.dump(&f.space),
            _ => String::new(),
        }
    }

    pub fn to_container(&self) -> Result<Container> {
        let mut c = Container::new(self.spec.kind.as_str());
        c.put_json("spec", &self.spec)?;
        if let Some(f) = &self.features {
            c.put_json("features", f)?;
        }
        if let Some(log) = &self.log {
            c.put_json("log", log)?;
        }
        match &self.estimator {
            Estimator::Linear(m) => c.put_json("linear", m)?,
            Estimator::Crf(m) => c.put_json("crf", m)?,
            Estimator::Neural(m) => {
                c.put_json("network", &(&m.config, &m.words, &m.heads))?;
                c.put_f64s("params", &m.params);
            }
        }
        Ok(c)
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let spec: ModelSpec = c.get_json("spec")?;
        if spec.kind.as_str() != c.kind {
            return Err(Error::Format(format!("container kind `{}` disagrees with spec `{}`", c.kind, spec.kind)));
        }
        let estimator = match spec.kind {
            ModelKind::Lr | ModelKind::Svm => Estimator::Linear(c.get_json("linear")?),
            ModelKind::Crf => Estimator::Crf(c.get_json("crf")?),
            _ => {
                let (config, words, heads) = c.get_json("network")?;
                let params = c.get_f64s("params")?;
                let m = SlstmModel {
                    config,
                    words,
                    heads,
                    params,
                };
                m.check_shape()?;
                Estimator::Neural(Box::new(m))
            }
        };
        let features = if spec.kind.is_neural() { None } else { Some(c.get_json("features")?) };
        let log = c.get_json("log").ok();
        Ok(TrainedModel {
            spec,
            features,
            estimator,
            log,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container()?.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        TrainedModel::from_container(&Container::load(path)?).map_err(|e| e.context(path.display().to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotate::annotate_corpus;
    use crate::corpus::{generate_synthetic_corpus, SynthConfig};
    use crate::features::FeatureConfig;

    fn docs(n: usize, seed: u64) -> Vec<AnnotatedDocument> {
        let s = generate_synthetic_corpus(&SynthConfig {
            n_docs: n,
            seed,
            ..Default::default()
        })
        .unwrap();
        annotate_corpus(&s.corpus, &s.lexicon).unwrap()
    }

    fn light(kind: ModelKind) -> ModelSpec {
        let mut s = ModelSpec::new(kind).with_seed(3);
        s.features.families = FeatureConfig::counts_only();
        s.logreg.epochs = 10;
        s.svm.epochs = 5;
        s.slstm = SlstmConfig {
            hidden: 8,
            embed_dim: 8,
            heading_filters: 4,
            epochs: 2,
            batch: 32,
            ..s.network_config()
        };
        s.embeddings = Some(EmbeddingConfig {
            epochs: 1,
            ..Default::default()
        });
        s
    }

    #[test]
    fn kinds_parse() {
        for k in ModelKind::ALL {
            assert_eq!(k.as_str().parse::<ModelKind>().unwrap(), k);
        }
        assert!("hmm".parse::<ModelKind>().is_err());
        assert_eq!(ModelSpec::new(ModelKind::Blstm).network_config().window, 0);
        assert!(!ModelSpec::new(ModelKind::Clstm).network_config().heading_branch);
        assert_eq!(ModelSpec::paper_defaults(ModelKind::Crf).selection_threshold, Some(0.009));
    }

    #[test]
    fn every_kind_round_trips_through_the_container() {
        let train = docs(12, 1);
        let test = docs(3, 2);
        for kind in ModelKind::ALL {
            let m = TrainedModel::train(&light(kind), &train).unwrap();
            let back = TrainedModel::from_container(&Container::from_bytes(&m.to_container().unwrap().to_bytes()).unwrap())
                .unwrap();
            assert_eq!(back, m, "{kind}");
            for d in &test {
                let p = m.predict(d).unwrap();
                assert_eq!(p.len(), d.len());
                assert_eq!(back.predict(d).unwrap(), p);
            }
        }
    }

    #[test]
    fn selection_shrinks_the_space() {
        let train = docs(10, 4);
        let all = FeaturePipeline::fit(&train, &light(ModelKind::Lr).features, None).unwrap();
        let some = FeaturePipeline::fit(&train, &light(ModelKind::Lr).features, Some(0.05)).unwrap();
        assert!(some.space.len() < all.space.len());
        assert_eq!(all.space.len(), all.extractor.space().len());
        let huge = FeaturePipeline::fit(&train, &light(ModelKind::Lr).features, Some(10.0)).unwrap();
        assert!(huge.space.is_empty());
        let mut spec = light(ModelKind::Crf);
        spec.selection_threshold = Some(10.0);
        assert!(TrainedModel::train(&spec, &train).is_err());
    }

    #[test]
    fn unlabeled_training_data_is_rejected() {
        let mut train = docs(3, 5);
        train[1].document.sentences[0].gold_label = None;
        assert!(TrainedModel::train(&light(ModelKind::Lr), &train).is_err());
        assert!(TrainedModel::train(&light(ModelKind::Lr), &[]).is_err());
    }
}
