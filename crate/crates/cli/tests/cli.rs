use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn secmark(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_secmark"))
        .args(args)
        .env_remove("SECMARK_SEED")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) {
    let out = secmark(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn synth(dir: &Path, seed: &str, docs: &str) -> (String, String) {
    ok(&["synth", "--seed", seed, "--docs", docs, "-o", dir.to_str().unwrap()]);
    (
        dir.join("corpus.jsonl").display().to_string(),
        dir.join("lexicon.tsv").display().to_string(),
    )
}

#[test]
fn synth_is_repeatable_and_seeded() {
    let t = tempfile::tempdir().unwrap();
    let read = |d: &str| fs::read(t.path().join(d).join("corpus.jsonl")).unwrap();
    synth(&t.path().join("a"), "7", "20");
    synth(&t.path().join("b"), "7", "20");
    synth(&t.path().join("c"), "8", "20");
    assert_eq!(read("a"), read("b"));
    assert_ne!(read("a"), read("c"));
}

#[test]
fn env_seed_is_the_fallback() {
    let t = tempfile::tempdir().unwrap();
    synth(&t.path().join("flag"), "11", "10");
    let out = Command::new(env!("CARGO_BIN_EXE_secmark"))
        .args(["synth", "--docs", "10", "-o", t.path().join("env").to_str().unwrap()])
        .env("SECMARK_SEED", "11")
        .output()
        .unwrap();
    assert!(out.status.success());
    let read = |d: &str| fs::read(t.path().join(d).join("corpus.jsonl")).unwrap();
    assert_eq!(read("flag"), read("env"));
}

#[test]
fn evaluate_writes_three_models_by_six_labels_by_three_metrics() {
    let t = tempfile::tempdir().unwrap();
    let (corpus, lexicon) = synth(t.path(), "3", "24");
    let out = t.path().join("eval");
    ok(&[
        "evaluate", "--corpus", &corpus, "--lexicon", &lexicon, "--models", "lr,svm,crf", "--k", "3", "--features",
        "bow,loc", "-o", out.to_str().unwrap(),
    ]);
    let report = fs::read_to_string(out.join("report.csv")).unwrap();
    assert_eq!(report.lines().count(), 1 + 3 * 6 * 3);
    let table = fs::read_to_string(out.join("table.txt")).unwrap();
    assert!(table.starts_with("# generated at"));
    ok(&[
        "evaluate", "--corpus", &corpus, "--lexicon", &lexicon, "--models", "lr", "--k", "3", "--features", "bow",
        "--no-timestamp", "-o", out.to_str().unwrap(),
    ]);
    let table = fs::read_to_string(out.join("table.txt")).unwrap();
    assert!(table.starts_with("Model"));
}

#[test]
fn config_file_supplies_paths_and_flags_override_it() {
    let t = tempfile::tempdir().unwrap();
    let (corpus, lexicon) = synth(t.path(), "5", "12");
    let out = t.path().join("from_config");
    let cfg = t.path().join("run.toml");
    fs::write(
        &cfg,
        format!(
            "seed = 5\n[paths]\ncorpus = {corpus:?}\nlexicon = {lexicon:?}\noutput = {:?}\n[features]\nfeatures = \"bow\"\n",
            out.display().to_string()
        ),
    )
    .unwrap();
    ok(&["select", "--config", cfg.to_str().unwrap(), "--threshold", "0.05"]);
    let selected = fs::read_to_string(out.join("selected.txt")).unwrap();
    let scores = fs::read_to_string(out.join("scores.tsv")).unwrap();
    assert!(selected.lines().count() < scores.lines().count());
    assert!(selected.lines().all(|l| l.starts_with("bow:")));
}

#[test]
fn errors_are_one_line_with_distinct_exit_codes() {
    let t = tempfile::tempdir().unwrap();
    let usage = secmark(&["train", "--model", "nope"]);
    assert_eq!(usage.status.code(), Some(1));
    let missing = secmark(&["segment", "--corpus", t.path().join("absent.jsonl").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(2));
    let bad = t.path().join("bad.jsonl");
    fs::write(&bad, "{not json}\n").unwrap();
    let data = secmark(&["segment", "--corpus", bad.to_str().unwrap()]);
    assert_eq!(data.status.code(), Some(2));
    let cfg = t.path().join("bad.toml");
    fs::write(&cfg, "[paths]\ncorpus = \"/does/not/exist\"\n").unwrap();
    let config = secmark(&["segment", "--config", cfg.to_str().unwrap()]);
    assert_eq!(config.status.code(), Some(1));
    for out in [usage, missing, data, config] {
        let err = String::from_utf8(out.stderr).unwrap();
        assert_eq!(err.lines().count(), 1, "{err}");
        assert!(err.starts_with("error["), "{err}");
    }
}

#[test]
fn train_predict_extract_and_cooccur_chain_together() {
    let t = tempfile::tempdir().unwrap();
    let (corpus, lexicon) = synth(t.path(), "2", "16");
    let dir = t.path().to_str().unwrap();
    ok(&["train", "--model", "crf", "--corpus", &corpus, "--lexicon", &lexicon, "--features", "bow,loc", "-o", dir]);
    assert!(t.path().join("weights.csv").exists());
    let model = t.path().join("model.bin");
    ok(&["predict", "--model", model.to_str().unwrap(), "--corpus", &corpus, "--lexicon", &lexicon, "-o", dir]);
    let predicted = t.path().join("predicted.jsonl");
    assert_eq!(
        fs::read_to_string(&predicted).unwrap().lines().count(),
        fs::read_to_string(&corpus).unwrap().lines().count()
    );
    // Synthetic words are consecutive CJK pairs, so the first signal word is
    // a known surface.
    let first_word: String = fs::read_to_string(&lexicon).unwrap().split('\t').next().unwrap().to_string();
    let dict = t.path().join("dict.tsv");
    fs::write(&dict, format!("{first_word}\tdisease\n")).unwrap();
    let pred = predicted.to_str().unwrap();
    ok(&["extract", "--corpus", pred, "--entities", dict.to_str().unwrap(), "-o", dir]);
    ok(&["cooccur", "--corpus", pred, "--entities", dict.to_str().unwrap(), "-o", dir]);
    let overlap = fs::read_to_string(t.path().join("overlap.csv")).unwrap();
    assert_eq!(overlap.lines().count(), 1 + 5 * 7);
    let edges = fs::read_to_string(t.path().join("edges.csv")).unwrap();
    assert!(edges.starts_with("entity_a,category_a,entity_b,category_b,count"));
}

#[test]
fn embed_then_cluster() {
    let t = tempfile::tempdir().unwrap();
    let (corpus, lexicon) = synth(t.path(), "4", "10");
    let dir = t.path().to_str().unwrap();
    ok(&["embed", "--corpus", &corpus, "--lexicon", &lexicon, "--dim", "8", "--epochs", "1", "-o", dir]);
    let emb = t.path().join("embeddings.txt");
    ok(&["cluster", "--embeddings", emb.to_str().unwrap(), "--clusters", "3", "-o", dir]);
    let clusters = fs::read_to_string(t.path().join("clusters.csv")).unwrap();
    assert!(clusters.starts_with("word,cluster,pc1,pc2\n"));
    assert!(clusters.lines().skip(1).all(|l| {
        let c: usize = l.split(',').nth(1).unwrap().parse().unwrap();
        c < 3
    }));
}
