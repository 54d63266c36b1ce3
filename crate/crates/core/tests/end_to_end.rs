use std::path::{Path, PathBuf};

use secmark::annotate::annotate_corpus;
use secmark::corpus::{generate_synthetic_corpus, load_corpus, parse_corpus, write_corpus, SynthConfig};
use secmark::downstream::{cooccurrence_counts, extract_entities, filter_sentences, EntityCategory, EntityDictionary};
use secmark::eval::{run_experiment, CvOptions};
use secmark::features::FeatureConfig;
use secmark::pipeline::{ModelKind, ModelSpec, TrainedModel};
use secmark::segmentation::{load_lexicon, PosInventory};
use secmark::SectionLabel;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn small_corpus(seed: u64, n_docs: usize) -> Vec<secmark::annotate::AnnotatedDocument> {
    let s = generate_synthetic_corpus(&SynthConfig {
        seed,
        n_docs,
        ..Default::default()
    })
    .unwrap();
    annotate_corpus(&s.corpus, &s.lexicon).unwrap()
}

fn quick(kind: ModelKind) -> ModelSpec {
    let mut s = ModelSpec::new(kind).with_seed(4);
    s.features.families = FeatureConfig::parse_list("bow,pos,head,loc,len").unwrap();
    s
}

#[test]
fn corpus_round_trips_through_jsonl() {
    let s = generate_synthetic_corpus(&SynthConfig {
        seed: 9,
        n_docs: 12,
        ..Default::default()
    })
    .unwrap();
    let mut buf = Vec::new();
    write_corpus(&s.corpus, &mut buf).unwrap();
    let back = parse_corpus(std::str::from_utf8(&buf).unwrap(), "mem").unwrap();
    assert_eq!(back.documents, s.corpus.documents);
}

#[test]
fn trained_models_survive_save_and_load() {
    let docs = small_corpus(5, 40);
    let dir = tempfile::tempdir().unwrap();
    for kind in [ModelKind::Lr, ModelKind::Crf] {
        let m = TrainedModel::train(&quick(kind), &docs[..30]).unwrap();
        let path = dir.path().join(format!("{kind}.bin"));
        m.save(&path).unwrap();
        let back = TrainedModel::load(&path).unwrap();
        for d in &docs[30..] {
            assert_eq!(m.predict(d).unwrap(), back.predict(d).unwrap());
        }
    }
}

#[test]
fn crf_learns_the_synthetic_structure() {
    let docs = small_corpus(6, 80);
    let m = TrainedModel::train(&quick(ModelKind::Crf), &docs[..60]).unwrap();
    let (mut right, mut total) = (0, 0);
    for d in &docs[60..] {
        let gold = d.document.gold_labels().unwrap();
        for (p, g) in m.predict(d).unwrap().into_iter().zip(gold) {
            right += usize::from(p == g);
            total += 1;
        }
    }
    assert!(right as f64 / total as f64 > 0.85, "{right}/{total}");
}

#[test]
fn experiment_report_has_one_row_per_model_label_metric() {
    let docs = small_corpus(7, 30);
    let specs = [quick(ModelKind::Lr), quick(ModelKind::Svm), quick(ModelKind::Crf)];
    let r = run_experiment(&docs, &specs, 3, 1, &CvOptions::default()).unwrap();
    let csv = r.to_csv();
    assert_eq!(csv.lines().count(), 1 + 3 * 6 * 3);
    assert!(csv.starts_with("model,label,metric,mean,std,fold_1,fold_2,fold_3\n"));
}

#[test]
fn figure_one_headings_are_found() {
    let corpus = load_corpus(fixtures().join("figure1.jsonl")).unwrap();
    let lex = load_lexicon(fixtures().join("figure1_lexicon.tsv"), PosInventory::default()).unwrap();
    let docs = annotate_corpus(&corpus, &lex).unwrap();
    let headings: Vec<Vec<&str>> = docs
        .iter()
        .map(|d| {
            d.document
                .sentences
                .iter()
                .filter(|s| s.is_heading)
                .map(|s| s.text.as_str())
                .collect()
        })
        .collect();
    assert_eq!(headings[0], ["一般资料及治法", "治疗效果", "体会"]);
    assert_eq!(headings[1], ["治疗方法", "典型病例", "体会"]);
}

#[test]
fn filtering_only_removes_relations() {
    let dict = EntityDictionary::load(&fixtures().join("entities.tsv")).unwrap();
    assert_eq!(dict.get("大椎"), Some(EntityCategory::Acupoint));
    let corpus = load_corpus(fixtures().join("figure1.jsonl")).unwrap();
    let mut all = Vec::new();
    let mut kept = Vec::new();
    for doc in &corpus.documents {
        // Pretend every other sentence was predicted as Method.
        let labels: Vec<SectionLabel> = (0..doc.len())
            .map(|i| if i % 2 == 0 { SectionLabel::Method } else { SectionLabel::After })
            .collect();
        all.push(extract_entities(doc.sentences.iter().map(|s| s.text.as_str()), &dict));
        kept.push(extract_entities(
            filter_sentences(doc, &labels).into_iter().map(|s| s.text.as_str()),
            &dict,
        ));
    }
    let (u, f) = (cooccurrence_counts(&all), cooccurrence_counts(&kept));
    assert!(!u.is_empty());
    for ((a, b), n) in &f.pairs {
        assert!(*n <= u.count(a, b));
    }
}
