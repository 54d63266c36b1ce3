//! TOML run configuration. Every key is optional and every key can be
//! overridden by the matching command-line flag.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::Deserialize;

use secmark::classic::CrfOptimizer;
use secmark::features::FeatureConfig;
use secmark::pipeline::{ModelKind, ModelSpec};
use secmark::{Error, Result};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub paper_defaults: Option<bool>,
    pub no_timestamp: Option<bool>,
    #[serde(default)]
    pub paths: Paths,
    #[serde(default)]
    pub features: FeatureArgs,
    #[serde(default)]
    pub model: ModelArgs,
    #[serde(default)]
    pub eval: EvalArgs,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub entities: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Default, Clone, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureArgs {
    /// Comma-separated families: bow,pos,lda,d2v,head,loc,len or all.
    #[arg(long)]
    pub features: Option<String>,
    #[arg(long)]
    pub min_count: Option<usize>,
    #[arg(long)]
    pub lda_topics: Option<usize>,
    #[arg(long)]
    pub doc2vec_dim: Option<usize>,
    /// IG selection threshold; omit to keep every feature.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Fit features and selection once on the whole corpus in evaluation.
    #[arg(long)]
    pub paper_mode: Option<bool>,
}

#[derive(Debug, Default, Clone, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelArgs {
    /// Epochs for LR, SVM and the networks.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// L-BFGS iteration cap for the CRF.
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub l2: Option<f64>,
    /// SVM cost.
    #[arg(long = "svm-c")]
    pub c: Option<f64>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// CRF or network window (sentences on each side).
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    pub heading_filters: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub mean_pool: Option<bool>,
    #[arg(long)]
    pub freeze_embeddings: Option<bool>,
    /// Skip-gram epochs when pretraining network embeddings (0 disables).
    #[arg(long)]
    pub embedding_epochs: Option<usize>,
}

#[derive(Debug, Default, Clone, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalArgs {
    #[arg(long)]
    pub k: Option<usize>,
    /// Comma-separated model kinds.
    #[arg(long)]
    pub models: Option<String>,
}

macro_rules! prefer {
    ($a:expr, $b:expr; $($f:ident),*) => {
        $( $a.$f = $a.$f.take().or_else(|| $b.$f.clone()); )*
    };
}

impl FeatureArgs {
    pub fn or(mut self, other: &FeatureArgs) -> Self {
        prefer!(self, other; features, min_count, lda_topics, doc2vec_dim, threshold, paper_mode);
        self
    }
}

impl ModelArgs {
    pub fn or(mut self, other: &ModelArgs) -> Self {
        prefer!(self, other; epochs, iterations, l2, c, learning_rate, batch_size, window, hidden, embed_dim,
            heading_filters, dropout, patience, mean_pool, freeze_embeddings, embedding_epochs);
        self
    }
}

impl EvalArgs {
    pub fn or(mut self, other: &EvalArgs) -> Self {
        prefer!(self, other; k, models);
        self
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let cfg: RunConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {}", path.display(), e.message())))?;
        let p = &cfg.paths;
        for input in [&p.corpus, &p.lexicon, &p.entities, &p.embeddings].into_iter().flatten() {
            if !input.exists() {
                return Err(Error::Config(format!(
                    "{}: path `{}` does not exist",
                    path.display(),
                    input.display()
                )));
            }
        }
        Ok(cfg)
    }
}

/// Builds a spec from the defaults (or the reported settings) plus
/// overrides.
pub fn model_spec(kind: ModelKind, paper: bool, f: &FeatureArgs, m: &ModelArgs, seed: u64) -> Result<ModelSpec> {
    let mut s = if paper {
        ModelSpec::paper_defaults(kind)
    } else {
        ModelSpec::new(kind)
    };
    if let Some(list) = &f.features {
        s.features.families = FeatureConfig::parse_list(list)?;
    }
    if let Some(v) = f.min_count {
        s.features.min_count = v;
    }
    if let Some(v) = f.lda_topics {
        s.features.lda.topics = v;
    }
    if let Some(v) = f.doc2vec_dim {
        s.features.doc2vec.dim = v;
    }
    if let Some(v) = f.threshold {
        if !(v >= 0.0) {
            return Err(Error::Config("threshold must be non-negative".into()));
        }
        s.selection_threshold = Some(v);
    }
    if let Some(v) = m.epochs {
        s.logreg.epochs = v;
        s.svm.epochs = v;
        s.slstm.epochs = v;
    }
    if let Some(v) = m.iterations {
        if let CrfOptimizer::Lbfgs(c) = &mut s.crf.optimizer {
            c.max_iterations = v;
        }
    }
    if let Some(v) = m.l2 {
        s.logreg.l2 = v;
        s.crf.l2 = v;
    }
    if let Some(v) = m.c {
        s.svm.c = v;
    }
    if let Some(v) = m.learning_rate {
        s.logreg.learning_rate = v;
        s.slstm.lr = v;
    }
    if let Some(v) = m.batch_size {
        s.logreg.batch_size = v;
        s.slstm.batch = v;
    }
    if let Some(v) = m.window {
        s.crf.window = v;
        s.slstm.window = v;
    }
    if let Some(v) = m.hidden {
        s.slstm.hidden = v;
    }
    if let Some(v) = m.embed_dim {
        s.slstm.embed_dim = v;
    }
    if let Some(v) = m.heading_filters {
        s.slstm.heading_filters = v;
    }
    if let Some(v) = m.dropout {
        s.slstm.dropout = v;
    }
    if let Some(v) = m.patience {
        s.slstm.patience = v;
    }
    if let Some(v) = m.mean_pool {
        s.slstm.mean_pool = v;
    }
    if let Some(v) = m.freeze_embeddings {
        s.slstm.freeze_embeddings = v;
    }
    match m.embedding_epochs {
        Some(0) => s.embeddings = None,
        Some(v) => {
            if let Some(e) = &mut s.embeddings {
                e.epochs = v;
            }
        }
        None => {}
    }
    s.set_seed(seed);
    if kind.is_neural() {
        s.network_config().validate()?;
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> std::result::Result<RunConfig, toml::de::Error> {
        toml::from_str(text)
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(parse("sed = 1").is_err());
        assert!(parse("[model]\nepoch = 3").is_err());
        let cfg = parse("seed = 4\n[model]\nepochs = 3\n[eval]\nk = 5").unwrap();
        assert_eq!((cfg.seed, cfg.model.epochs, cfg.eval.k), (Some(4), Some(3), Some(5)));
    }

    #[test]
    fn missing_input_path_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "[paths]\nlexicon = \"/no/such/lexicon.tsv\"\n").unwrap();
        assert!(matches!(RunConfig::load(&path), Err(Error::Config(_))));
        std::fs::write(&path, "[paths]\noutput = \"/not/yet/created\"\n").unwrap();
        assert!(RunConfig::load(&path).is_ok());
    }

    #[test]
    fn flags_win_over_config() {
        let flags = ModelArgs {
            epochs: Some(2),
            ..Default::default()
        };
        let file = ModelArgs {
            epochs: Some(9),
            l2: Some(0.5),
            ..Default::default()
        };
        let m = flags.or(&file);
        assert_eq!((m.epochs, m.l2, m.hidden), (Some(2), Some(0.5), None));
    }

    #[test]
    fn overrides_reach_the_spec() {
        let f = FeatureArgs {
            threshold: Some(0.01),
            ..Default::default()
        };
        let m = ModelArgs {
            window: Some(1),
            embedding_epochs: Some(0),
            ..Default::default()
        };
        let s = model_spec(ModelKind::Slstm, false, &f, &m, 3).unwrap();
        assert_eq!(s.selection_threshold, Some(0.01));
        assert_eq!(s.slstm.window, 1);
        assert!(s.embeddings.is_none());
        let bad = FeatureArgs {
            threshold: Some(-1.0),
            ..Default::default()
        };
        assert!(matches!(
            model_spec(ModelKind::Lr, false, &bad, &ModelArgs::default(), 0),
            Err(Error::Config(_))
        ));
    }
}
