use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use secmark::annotate::{annotate_corpus, AnnotatedDocument};
use secmark::corpus::{generate_synthetic_corpus, load_corpus, save_corpus, SynthConfig};
use secmark::downstream::{
    cooccurrence_counts, export_edges, extract_entities, filter_sentences, overlap_to_csv, threshold_overlap_stats,
    Entity, EntityDictionary,
};
use secmark::eval::{run_experiment, CvOptions};
use secmark::features::SparseVector;
use secmark::neural::{cluster_embeddings, train_word_embeddings, EmbeddingConfig, EmbeddingTable};
use secmark::pipeline::{FeaturePipeline, ModelKind, TrainedModel, PAPER_THRESHOLD};
use secmark::segmentation::{load_lexicon, Lexicon, PosInventory};
use secmark::selection::{information_gain, scores_to_tsv, select_features, sweep_thresholds, sweep_to_csv, DEFAULT_SWEEP};
use secmark::{Corpus, Error, Result, SectionLabel};

use crate::config::{model_spec, EvalArgs, FeatureArgs, ModelArgs, Paths, RunConfig};
use crate::{Cli, Command};

const SEED_ENV: &str = "SECMARK_SEED";

struct Ctx {
    cfg: RunConfig,
    paths: Paths,
    seed: u64,
    jobs: usize,
    paper: bool,
    timestamp: bool,
}

impl Ctx {
    fn new(cli: &Cli) -> Result<Self> {
        let cfg = match &cli.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let env_seed = match std::env::var(SEED_ENV) {
            Ok(v) => Some(
                v.trim()
                    .parse::<u64>()
                    .map_err(|_| Error::Config(format!("{SEED_ENV}=`{v}` is not an unsigned integer")))?,
            ),
            Err(_) => None,
        };
        let seed = cli.seed.or(cfg.seed).or(env_seed).unwrap_or(0);
        let jobs = cli.jobs.or(cfg.jobs).unwrap_or(1);
        if jobs == 0 {
            return Err(Error::Config("--jobs must be at least 1".into()));
        }
        let c = &cli.paths;
        let p = &cfg.paths;
        let paths = Paths {
            corpus: c.corpus.clone().or_else(|| p.corpus.clone()),
            lexicon: c.lexicon.clone().or_else(|| p.lexicon.clone()),
            entities: c.entities.clone().or_else(|| p.entities.clone()),
            embeddings: c.embeddings.clone().or_else(|| p.embeddings.clone()),
            output: c.output.clone().or_else(|| p.output.clone()),
        };
        Ok(Ctx {
            paper: cli.paper_defaults || cfg.paper_defaults.unwrap_or(false),
            timestamp: !(cli.no_timestamp || cfg.no_timestamp.unwrap_or(false)),
            cfg,
            paths,
            seed,
            jobs,
        })
    }

    fn corpus_path(&self) -> Result<&Path> {
        self.paths
            .corpus
            .as_deref()
            .ok_or_else(|| Error::Config("no corpus given (--corpus or paths.corpus)".into()))
    }

    fn corpus(&self) -> Result<Corpus> {
        load_corpus(self.corpus_path()?)
    }

    fn lexicon(&self) -> Result<Lexicon> {
        match &self.paths.lexicon {
            Some(p) => load_lexicon(p, PosInventory::default()),
            None => Ok(Lexicon::default()),
        }
    }

    fn annotated(&self) -> Result<Vec<AnnotatedDocument>> {
        annotate_corpus(&self.corpus()?, &self.lexicon()?)
    }

    fn entities(&self) -> Result<EntityDictionary> {
        let p = self
            .paths
            .entities
            .as_deref()
            .ok_or_else(|| Error::Config("no entity dictionary given (--entities or paths.entities)".into()))?;
        EntityDictionary::load(p)
    }

    fn out_dir(&self) -> Result<PathBuf> {
        let dir = self.paths.output.clone().unwrap_or_else(|| PathBuf::from("."));
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        Ok(dir)
    }

    fn features(&self, f: FeatureArgs) -> FeatureArgs {
        f.or(&self.cfg.features)
    }

    fn params(&self, m: ModelArgs) -> ModelArgs {
        m.or(&self.cfg.model)
    }

    fn eval(&self, e: EvalArgs) -> EvalArgs {
        e.or(&self.cfg.eval)
    }

    fn options(&self, f: &FeatureArgs) -> CvOptions {
        CvOptions {
            paper_mode: f.paper_mode.unwrap_or(false),
            jobs: self.jobs,
        }
    }

    fn report_header(&self) -> String {
        if !self.timestamp {
            return String::new();
        }
        let secs = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        format!("# generated at unix time {secs}\n")
    }
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| io_err(&path, e))
}

fn vectors_tsv(docs: &[AnnotatedDocument], vectors: impl Fn(&AnnotatedDocument) -> Vec<SparseVector>) -> String {
    let mut s = String::new();
    for d in docs {
        for (i, v) in vectors(d).iter().enumerate() {
            let _ = write!(s, "{}\t{}\t", d.id(), i);
            let cells: Vec<String> = v.iter().map(|(dim, x)| format!("{dim}:{x}")).collect();
            s.push_str(&cells.join(" "));
            s.push('\n');
        }
    }
    s
}

pub fn run(cli: Cli) -> Result<()> {
    let ctx = Ctx::new(&cli)?;
    match cli.command {
        Command::Ingest => ingest(&ctx),
        Command::Segment => segment(&ctx),
        Command::Featurize { features } => featurize(&ctx, features),
        Command::Select { features } => select(&ctx, features),
        Command::Train { model, features, params } => train(&ctx, model, features, params),
        Command::Predict { model } => predict(&ctx, &model),
        Command::Evaluate { eval, features, params } => evaluate(&ctx, eval, features, params),
        Command::Sweep {
            model,
            thresholds,
            k,
            features,
            params,
        } => sweep(&ctx, model, thresholds, k, features, params),
        Command::Embed { dim, epochs, window } => embed(&ctx, dim, epochs, window),
        Command::Cluster { clusters } => cluster(&ctx, clusters),
        Command::Extract { all } => extract(&ctx, all),
        Command::Cooccur { thresholds } => cooccur(&ctx, &thresholds),
        Command::Synth {
            docs,
            signal_prob,
            heading_prob,
        } => synth(&ctx, docs, signal_prob, heading_prob),
    }
}

fn ingest(ctx: &Ctx) -> Result<()> {
    let docs = ctx.annotated()?;
    let corpus = Corpus::new(docs.into_iter().map(|d| d.document).collect())?;
    save_corpus(&corpus, ctx.out_dir()?.join("corpus.jsonl"))
}

fn segment(ctx: &Ctx) -> Result<()> {
    let docs = ctx.annotated()?;
    let mut s = String::new();
    for d in &docs {
        for (i, toks) in d.tokens.iter().enumerate() {
            let words: Vec<String> = toks.iter().map(|t| format!("{}/{}", t.surface, t.pos)).collect();
            let _ = writeln!(s, "{}\t{}\t{}", d.id(), i, words.join(" "));
        }
    }
    write(&ctx.out_dir()?, "tokens.tsv", &s)
}

fn featurize(ctx: &Ctx, features: FeatureArgs) -> Result<()> {
    let f = ctx.features(features);
    let spec = model_spec(ModelKind::Lr, ctx.paper, &f, &ModelArgs::default(), ctx.seed)?;
    let docs = ctx.annotated()?;
    let pipe = FeaturePipeline::fit(&docs, &spec.features, None)?;
    let dir = ctx.out_dir()?;
    write(&dir, "features.txt", &pipe.space.to_text())?;
    write(&dir, "vectors.tsv", &vectors_tsv(&docs, |d| pipe.transform(d)))
}

fn select(ctx: &Ctx, features: FeatureArgs) -> Result<()> {
    let f = ctx.features(features);
    let spec = model_spec(ModelKind::Lr, ctx.paper, &f, &ModelArgs::default(), ctx.seed)?;
    let threshold = f.threshold.unwrap_or(PAPER_THRESHOLD);
    let docs = ctx.annotated()?;
    let pipe = FeaturePipeline::fit(&docs, &spec.features, None)?;
    let mut vectors = Vec::new();
    let mut labels = Vec::new();
    for d in &docs {
        vectors.extend(pipe.transform(d));
        labels.extend(d.document.gold_labels()?);
    }
    let refs: Vec<&SparseVector> = vectors.iter().collect();
    let scores = information_gain(&refs, &labels, &pipe.space)?;
    let selection = select_features(&scores, &pipe.space, threshold)?;
    let dir = ctx.out_dir()?;
    write(&dir, "scores.tsv", &scores_to_tsv(&scores))?;
    write(&dir, "selected.txt", &selection.space.to_text())
}

fn train(ctx: &Ctx, kind: ModelKind, features: FeatureArgs, params: ModelArgs) -> Result<()> {
    let f = ctx.features(features);
    let spec = model_spec(kind, ctx.paper, &f, &ctx.params(params), ctx.seed)?;
    let docs = ctx.annotated()?;
    let model = if kind.is_neural() {
        let table = match &ctx.paths.embeddings {
            Some(p) => Some(EmbeddingTable::load(p)?),
            None => None,
        };
        TrainedModel::train_network(&spec, &docs, table.as_ref())?
    } else {
        TrainedModel::train(&spec, &docs)?
    };
    let dir = ctx.out_dir()?;
    model.save(&dir.join("model.bin"))?;
    if let Some(log) = &model.log {
        write(&dir, "log.csv", &log.to_csv())?;
    }
    if !kind.is_neural() {
        write(&dir, "weights.csv", &model.dump())?;
    }
    Ok(())
}

fn predict(ctx: &Ctx, model_path: &Path) -> Result<()> {
    let model = TrainedModel::load(model_path)?;
    let docs = ctx.annotated()?;
    let mut out = Vec::with_capacity(docs.len());
    for d in docs {
        let labels = model.predict(&d)?;
        let mut doc = d.document;
        for (s, l) in doc.sentences.iter_mut().zip(labels) {
            s.gold_label = Some(l);
        }
        out.push(doc);
    }
    save_corpus(&Corpus::new(out)?, ctx.out_dir()?.join("predicted.jsonl"))
}

fn parse_kinds(list: &str) -> Result<Vec<ModelKind>> {
    list.split(',').map(|k| k.trim().parse()).collect()
}

fn evaluate(ctx: &Ctx, eval: EvalArgs, features: FeatureArgs, params: ModelArgs) -> Result<()> {
    let e = ctx.eval(eval);
    let f = ctx.features(features);
    let m = ctx.params(params);
    let kinds = parse_kinds(e.models.as_deref().unwrap_or("lr,svm,crf"))?;
    let specs = kinds
        .into_iter()
        .map(|k| model_spec(k, ctx.paper, &f, &m, ctx.seed))
        .collect::<Result<Vec<_>>>()?;
    let docs = ctx.annotated()?;
    let report = run_experiment(&docs, &specs, e.k.unwrap_or(10), ctx.seed, &ctx.options(&f))?;
    let dir = ctx.out_dir()?;
    write(&dir, "report.csv", &report.to_csv())?;
    write(&dir, "tests.csv", &report.tests_to_csv())?;
    write(&dir, "table.txt", &(ctx.report_header() + &report.to_table()))
}

fn sweep(
    ctx: &Ctx,
    kind: ModelKind,
    thresholds: Vec<f64>,
    k: Option<usize>,
    features: FeatureArgs,
    params: ModelArgs,
) -> Result<()> {
    let f = ctx.features(features);
    let spec = model_spec(kind, ctx.paper, &f, &ctx.params(params), ctx.seed)?;
    if kind.is_neural() {
        return Err(Error::Config("threshold sweeps apply to feature-based models only".into()));
    }
    let thresholds = if thresholds.is_empty() {
        DEFAULT_SWEEP.to_vec()
    } else {
        thresholds
    };
    let k = k.or(ctx.cfg.eval.k).unwrap_or(10);
    let docs = ctx.annotated()?;
    let rows = sweep_thresholds(&docs, &spec, &thresholds, k, ctx.seed, &ctx.options(&f))?;
    write(&ctx.out_dir()?, "sweep.csv", &sweep_to_csv(&rows))
}

fn embed(ctx: &Ctx, dim: Option<usize>, epochs: Option<usize>, window: Option<usize>) -> Result<()> {
    let mut config = EmbeddingConfig {
        seed: ctx.seed,
        ..Default::default()
    };
    if let Some(v) = dim.or(ctx.cfg.model.embed_dim) {
        config.dim = v;
    }
    if let Some(v) = epochs.or(ctx.cfg.model.embedding_epochs) {
        config.epochs = v;
    }
    if let Some(v) = window {
        config.window = v;
    }
    let docs = ctx.annotated()?;
    let sentences: Vec<Vec<&str>> = docs
        .iter()
        .flat_map(|d| d.tokens.iter().map(|s| s.iter().map(|t| t.surface.as_str()).collect()))
        .collect();
    let table = train_word_embeddings(&sentences, &config)?;
    table.save(&ctx.out_dir()?.join("embeddings.txt"))
}

fn cluster(ctx: &Ctx, k: usize) -> Result<()> {
    let path = ctx
        .paths
        .embeddings
        .as_deref()
        .ok_or_else(|| Error::Config("no embeddings given (--embeddings or paths.embeddings)".into()))?;
    let table = EmbeddingTable::load(path)?;
    // Rows 0 and 1 are padding and the unknown word.
    let words = &table.vocab.words()[2..];
    let points: Vec<Vec<f64>> = (2..table.len()).map(|i| table.row(i).to_vec()).collect();
    let c = cluster_embeddings(&points, k, ctx.seed)?;
    let mut s = String::from("word,cluster,pc1,pc2\n");
    for (i, w) in words.iter().enumerate() {
        let [x, y] = c.projection[i];
        let _ = writeln!(s, "{w},{},{x:.6},{y:.6}", c.assignment[i]);
    }
    write(&ctx.out_dir()?, "clusters.csv", &s)
}

fn paper_entities(doc: &secmark::Document, dict: &EntityDictionary, all: bool) -> Result<BTreeSet<Entity>> {
    if all {
        return Ok(extract_entities(doc.sentences.iter().map(|s| s.text.as_str()), dict));
    }
    let labels: Vec<SectionLabel> = doc.gold_labels()?;
    Ok(extract_entities(
        filter_sentences(doc, &labels).into_iter().map(|s| s.text.as_str()),
        dict,
    ))
}

fn extract(ctx: &Ctx, all: bool) -> Result<()> {
    let corpus = ctx.corpus()?;
    let dict = ctx.entities()?;
    let mut s = String::from("doc_id\tentity\tcategory\n");
    for doc in &corpus.documents {
        for e in paper_entities(doc, &dict, all)? {
            let _ = writeln!(s, "{}\t{}\t{}", doc.id, e.surface, e.category.as_str());
        }
    }
    write(&ctx.out_dir()?, "entities.tsv", &s)
}

fn cooccur(ctx: &Ctx, thresholds: &[usize]) -> Result<()> {
    let corpus = ctx.corpus()?;
    let dict = ctx.entities()?;
    let mut filtered = Vec::new();
    let mut unfiltered = Vec::new();
    for doc in &corpus.documents {
        filtered.push(paper_entities(doc, &dict, false)?);
        unfiltered.push(paper_entities(doc, &dict, true)?);
    }
    let f = cooccurrence_counts(&filtered);
    let u = cooccurrence_counts(&unfiltered);
    let dir = ctx.out_dir()?;
    export_edges(&f, 0, &dir.join("edges.csv"))?;
    export_edges(&u, 0, &dir.join("edges_unfiltered.csv"))?;
    write(&dir, "overlap.csv", &overlap_to_csv(&threshold_overlap_stats(&u, &f, thresholds)))
}

fn synth(ctx: &Ctx, docs: usize, signal_prob: Option<f64>, heading_prob: Option<f64>) -> Result<()> {
    let mut config = SynthConfig {
        seed: ctx.seed,
        n_docs: docs,
        ..Default::default()
    };
    if let Some(p) = signal_prob {
        config.signal_prob = p;
    }
    if let Some(p) = heading_prob {
        config.heading_prob = p;
    }
    let s = generate_synthetic_corpus(&config)?;
    let dir = ctx.out_dir()?;
    save_corpus(&s.corpus, dir.join("corpus.jsonl"))?;
    write(&dir, "lexicon.tsv", &s.lexicon.to_tsv())
}
