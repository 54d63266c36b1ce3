use criterion::{criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

use secmark::annotate::annotate_corpus;
use secmark::classic::{crf_gradient, crf_viterbi, CrfModel, CrfTemplate};
use secmark::corpus::{generate_synthetic_corpus, SynthConfig};
use secmark::features::SparseVector;
use secmark::neural::{predict_slstm, SlstmConfig, SlstmModel};
use secmark::segmentation::segment_words;

fn crf_doc(rng: &mut ChaCha8Rng, n: usize, dims: usize) -> (CrfModel, Vec<SparseVector>, Vec<usize>) {
    let mut m = CrfModel::zeros(6, dims, CrfTemplate::default());
    for w in m.params.iter_mut() {
        *w = rng.gen_range(-0.5..0.5);
    }
    let doc = (0..n)
        .map(|_| SparseVector::from_pairs((0..12).map(|_| (rng.gen_range(0..dims), 1.0))))
        .collect();
    let gold = (0..n).map(|_| rng.gen_range(0..6)).collect();
    (m, doc, gold)
}

fn crf(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (m, doc, gold) = crf_doc(&mut rng, 40, 2000);
    c.bench_function("crf_gradient_40x2000", |b| {
        b.iter(|| crf_gradient(black_box(&m), black_box(&doc), &gold, 1.0).unwrap())
    });
    c.bench_function("crf_viterbi_40x2000", |b| b.iter(|| crf_viterbi(black_box(&m), black_box(&doc))));
}

fn networks(c: &mut Criterion) {
    let s = generate_synthetic_corpus(&SynthConfig {
        n_docs: 4,
        ..Default::default()
    })
    .unwrap();
    let docs = annotate_corpus(&s.corpus, &s.lexicon).unwrap();
    let words: Vec<String> = s.lexicon.entries().into_iter().map(|e| e.word).collect();
    let heads: Vec<String> = s.heading_words.iter().map(|(w, _)| w.clone()).collect();
    let config = SlstmConfig {
        hidden: 64,
        embed_dim: 64,
        heading_filters: 64,
        ..Default::default()
    };
    let model = SlstmModel::new(config, &words, &heads, 0).unwrap();
    c.bench_function("slstm_predict_doc_h64", |b| b.iter(|| predict_slstm(black_box(&model), &docs[0]).unwrap()));
}

fn segmentation(c: &mut Criterion) {
    let s = generate_synthetic_corpus(&SynthConfig {
        n_docs: 20,
        ..Default::default()
    })
    .unwrap();
    let text: String = s
        .corpus
        .documents
        .iter()
        .flat_map(|d| d.sentences.iter().map(|s| s.text.as_str()))
        .collect();
    c.bench_function("segment_20_docs", |b| b.iter(|| segment_words(black_box(&text), &s.lexicon)));
}

criterion_group!(benches, crf, networks, segmentation);
criterion_main!(benches);
