//! Random fixture builders shared by the acceptance and property tests.
//! Each takes a seed so proptest can drive it and report failures.
#![allow(dead_code)]

use ore_core::config::EmbeddingMode;
use ore_core::train::AdamState;
use ore_core::{
    Boundary, Corpus, LabeledSentence, ModelCheckpoint, ModelParams, SchemeKind, Tag, TagAlphabet, TagSequence,
    TrainConfig,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

const WORDS: &[&str] = &[
    "Joe", "visited", "Apple", "founded", "by", "could", "the", "Zürich", "Inc.", "ran", "of", "met", "é",
    "x-ray", "#5", "42", "\"quoted\"",
];

pub fn random_words<R: Rng>(rng: &mut R, n: usize) -> Vec<String> {
    (0..n).map(|_| WORDS.choose(rng).unwrap().to_string()).collect()
}

/// Fills `tags[lo..hi]` with random argument chains and O tags.
fn fill_arguments<R: Rng>(rng: &mut R, tags: &mut [Tag], lo: usize, hi: usize) {
    let mut i = lo;
    while i < hi {
        if rng.gen_bool(0.5) {
            i += 1;
            continue;
        }
        let index = rng.gen_range(0..3);
        let len = rng.gen_range(1..=3).min(hi - i);
        tags[i] = Tag::arg(index, Boundary::Begin);
        for t in &mut tags[i + 1..i + len] {
            *t = Tag::arg(index, Boundary::Inside);
        }
        i += len;
    }
}

fn fill_around_spans<R: Rng>(rng: &mut R, tags: &mut [Tag], spans: &[(usize, usize)]) {
    let mut sorted = spans.to_vec();
    sorted.sort();
    let mut cursor = 0;
    for &(s, e) in &sorted {
        fill_arguments(rng, tags, cursor, s);
        cursor = e + 1;
    }
    fill_arguments(rng, tags, cursor, tags.len());
}

/// Disjoint spans covering a random selection of `0..n`.
fn disjoint_spans<R: Rng>(rng: &mut R, n: usize, max_count: usize) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut i = 0;
    while i < n && spans.len() < max_count {
        if rng.gen_bool(0.4) {
            let len = rng.gen_range(1..=2).min(n - i);
            spans.push((i, i + len - 1));
            i += len + 1;
        } else {
            i += 1;
        }
    }
    spans
}

fn put_predicate(tags: &mut [Tag], (s, e): (usize, usize), index: Option<u32>) {
    tags[s] = Tag::pred(index, Boundary::Begin);
    for t in &mut tags[s + 1..=e] {
        *t = Tag::pred(index, Boundary::Inside);
    }
}

/// A single-scheme sentence whose predicate spans are identical or
/// disjoint across sequences (so it can always be merged).
pub fn single_sentence(seed: u64, id: &str) -> LabeledSentence {
    let mut rng = rng(seed);
    let n = rng.gen_range(1..=12);
    let words = random_words(&mut rng, n);
    let candidates = disjoint_spans(&mut rng, n, 4);
    let count = rng.gen_range(1..=4);
    let sequences = (0..count)
        .map(|_| {
            let mut tags = vec![Tag::Other; n];
            let chosen = candidates.choose(&mut rng).copied();
            let spans: Vec<_> = chosen.into_iter().collect();
            fill_around_spans(&mut rng, &mut tags, &spans);
            if let Some(span) = chosen {
                put_predicate(&mut tags, span, None);
            }
            TagSequence::new(tags, SchemeKind::Single)
        })
        .collect();
    let refs: Vec<&str> = words.iter().map(String::as_str).collect();
    LabeledSentence::new(id, &refs, sequences)
}

/// One valid multi-relation sequence over `n` tokens with predicate
/// indices numbered by position. `min_predicates` may force at least one.
pub fn nts_sequence<R: Rng>(rng: &mut R, n: usize, min_predicates: usize) -> TagSequence {
    let mut spans = disjoint_spans(rng, n, 4);
    if spans.len() < min_predicates {
        spans = vec![(0, 0)];
    }
    let mut tags = vec![Tag::Other; n];
    fill_around_spans(rng, &mut tags, &spans);
    for (k, &span) in spans.iter().enumerate() {
        put_predicate(&mut tags, span, Some(k as u32));
    }
    TagSequence::new(tags, SchemeKind::Nts)
}

/// Gold and predicted multi-relation corpora over the same sentences.
pub fn nts_pair(seed: u64) -> (Corpus, Corpus) {
    let mut rng = rng(seed);
    let sentences = rng.gen_range(1..=5);
    let mut gold = Vec::new();
    let mut pred = Vec::new();
    for i in 0..sentences {
        let n = rng.gen_range(1..=10);
        let words = random_words(&mut rng, n);
        let refs: Vec<&str> = words.iter().map(String::as_str).collect();
        let g = nts_sequence(&mut rng, n, if i == 0 { 1 } else { 0 });
        let p = nts_sequence(&mut rng, n, 0);
        gold.push(LabeledSentence::new(format!("s{i}"), &refs, vec![g]));
        pred.push(LabeledSentence::new(format!("s{i}"), &refs, vec![p]));
    }
    (
        Corpus {
            items: gold,
            scheme: SchemeKind::Nts,
        },
        Corpus {
            items: pred,
            scheme: SchemeKind::Nts,
        },
    )
}

/// A corpus in either scheme with unique ids.
pub fn corpus(seed: u64) -> Corpus {
    let mut r = rng(seed);
    let sentences = r.gen_range(1..=6);
    if r.gen_bool(0.5) {
        let items = (0..sentences)
            .map(|i| single_sentence(r.gen(), &format!("doc-{i}")))
            .collect();
        Corpus {
            items,
            scheme: SchemeKind::Single,
        }
    } else {
        let items = (0..sentences)
            .map(|i| {
                let n = r.gen_range(1..=10);
                let words = random_words(&mut r, n);
                let refs: Vec<&str> = words.iter().map(String::as_str).collect();
                let seqs = (0..r.gen_range(1..=2)).map(|_| nts_sequence(&mut r, n, 0)).collect();
                LabeledSentence::new(format!("n{i}"), &refs, seqs)
            })
            .collect();
        Corpus {
            items,
            scheme: SchemeKind::Nts,
        }
    }
}

/// Any finite float, drawn from raw bit patterns.
fn finite<R: Rng>(rng: &mut R) -> f64 {
    loop {
        let x = f64::from_bits(rng.gen());
        if x.is_finite() {
            return x;
        }
    }
}

pub fn checkpoint(seed: u64) -> ModelCheckpoint {
    let mut r = rng(seed);
    let (d, h) = (r.gen_range(1..=4), r.gen_range(1..=3));
    let nts = r.gen_bool(0.5);
    let mut tags = vec![Tag::Other];
    for k in 0..r.gen_range(0..3) {
        tags.push(Tag::arg(k, Boundary::Begin));
        tags.push(Tag::arg(k, Boundary::Inside));
    }
    let preds = if nts { r.gen_range(1..4) } else { 1 };
    for k in 0..preds {
        let index = nts.then_some(k);
        tags.push(Tag::pred(index, Boundary::Begin));
        tags.push(Tag::pred(index, Boundary::Inside));
    }
    let alphabet = TagAlphabet::from_tags(tags);
    let mut params = ModelParams::zeros(d, h, alphabet.len());
    use ore_core::params::ParamSet;
    for t in params.tensors_mut() {
        for x in t {
            *x = finite(&mut r);
        }
    }
    let n = params.num_values();
    let embedding = match r.gen_range(0..3) {
        0 => EmbeddingMode::Hashed { dim: d },
        1 => EmbeddingMode::Static {
            path: format!("vectors/glove {}.txt", r.gen::<u16>()),
            dim: d,
        },
        _ => EmbeddingMode::Contextual {
            path: "ctx:bert.vec".into(),
        },
    };
    let config = TrainConfig {
        learning_rate: r.gen::<f64>(),
        weight_decay: r.gen::<f64>() * 1e-3,
        batch_size: r.gen_range(1..100),
        epochs: r.gen_range(1..300),
        seed: r.gen(),
        hidden_dim: h,
        embedding,
        dropout: r.gen_range(0.0..0.9),
        shuffle: r.gen(),
        scheme: [None, Some(SchemeKind::Single), Some(SchemeKind::Nts)][r.gen_range(0..3)],
        bio_constrained: r.gen(),
        ..TrainConfig::default()
    };
    let optimizer = r.gen_bool(0.7).then(|| AdamState {
        step: r.gen(),
        m: (0..n).map(|_| finite(&mut r)).collect(),
        v: (0..n).map(|_| finite(&mut r)).collect(),
    });
    ModelCheckpoint {
        alphabet,
        scheme: if nts { SchemeKind::Nts } else { SchemeKind::Single },
        params,
        config,
        epochs_completed: r.gen_range(0..300),
        optimizer,
    }
}

/// Random tag, including index values above 9.
pub fn tag(seed: u64) -> Tag {
    let mut r = rng(seed);
    let boundary = if r.gen() { Boundary::Begin } else { Boundary::Inside };
    let index = if r.gen_bool(0.8) { r.gen_range(0..10) } else { r.gen_range(10..100_000) };
    match r.gen_range(0..3) {
        0 => Tag::Other,
        1 => Tag::arg(index, boundary),
        _ => Tag::pred(r.gen::<bool>().then_some(index), boundary),
    }
}
