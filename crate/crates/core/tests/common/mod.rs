// SPDX-License-Identifier: MIT OR Apache-2.0

//! Fixtures shared by the integration tests.

#![allow(dead_code)]

use attnmark::{
    AttentionArchive, AttentionRecord, AttentionTensor, Corpus, Sentence, Split, TokenRole,
};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct TestRng(ChaCha8Rng);

impl TestRng {
    pub fn new(seed: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn unit(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.0.next_u64() % n as u64) as usize
    }

    pub fn range(&mut self, lo: usize, hi: usize) -> usize {
        lo + self.below(hi - lo + 1)
    }
}

/// A sentence labeled by nine annotators where word `t` is marked by the
/// first `counts[t]` annotators.
pub fn sentence_from_counts(id: &str, words: &[&str], counts: &[usize]) -> Sentence {
    assert_eq!(words.len(), counts.len());
    let labels = (0..9)
        .map(|a| counts.iter().map(|&c| a < c).collect())
        .collect();
    Sentence::with_labels(id, words.iter().copied(), labels).unwrap()
}

pub const S1_WORDS: [&str; 15] = [
    "Beauty", "is", "not", "in", "the", "face", ";", "beauty", "is", "a", "light", "in", "the",
    "heart", ".",
];
/// heart > Beauty > light > {in, the} (the second pair), rest lower.
pub const S1_COUNTS: [usize; 15] = [7, 1, 2, 1, 0, 3, 0, 3, 0, 0, 6, 4, 4, 8, 0];
/// Prediction ranked light, face, Beauty, beauty.
pub const S1_PRED: [f64; 15] = [
    0.15, 0.01, 0.02, 0.03, 0.01, 0.2, 0.0, 0.1, 0.02, 0.01, 0.3, 0.05, 0.04, 0.06, 0.0,
];

pub const S2_WORDS: [&str; 13] = [
    "The", "bird", "a", "nest", ",", "the", "spider", "a", "web", ",", "man", "friendship", ".",
];
/// friendship > {bird, nest, man}, rest lower.
pub const S2_COUNTS: [usize; 13] = [1, 4, 0, 4, 0, 0, 2, 0, 3, 0, 4, 7, 0];
/// Prediction ranked friendship, web, a (second), nest.
pub const S2_PRED: [f64; 13] = [
    0.02, 0.05, 0.03, 0.1, 0.01, 0.02, 0.04, 0.15, 0.2, 0.01, 0.06, 0.3, 0.0,
];

pub fn worked_pair_corpus() -> Corpus {
    Corpus::new(
        Split::Dev,
        vec![
            sentence_from_counts("S1", &S1_WORDS, &S1_COUNTS),
            sentence_from_counts("S2", &S2_WORDS, &S2_COUNTS),
        ],
    )
    .unwrap()
}

pub const HONOR_BLOCK: &str = "# id=honor\n\
In\tO\tI\tO\tO\tO\tO\tO\tO\tI\n\
honor\tI\tI\tO\tO\tI\tI\tI\tI\tI\n\
of\tO\tO\tO\tO\tO\tO\tO\tO\tI\n\
the\tO\tO\tO\tO\tO\tO\tO\tO\tI\n\
brave\tO\tI\tI\tI\tO\tI\tI\tI\tI\n";

/// Random row-stochastic `f32` map of size `t`.
pub fn stochastic_rows(rng: &mut TestRng, t: usize, out: &mut Vec<f32>) {
    for _ in 0..t {
        let raw: Vec<f64> = (0..t).map(|_| rng.unit() + 1e-3).collect();
        let sum: f64 = raw.iter().sum();
        out.extend(raw.iter().map(|v| (v / sum) as f32));
    }
}

pub struct RecordShape {
    pub words: usize,
    pub max_pieces: usize,
    pub cls: bool,
    pub sep: bool,
    pub layers: usize,
    pub heads: usize,
}

/// A valid record with random subword splits and attention.
pub fn random_record(rng: &mut TestRng, id: &str, shape: &RecordShape) -> AttentionRecord {
    let mut roles = Vec::new();
    if shape.cls {
        roles.push(TokenRole::Special);
    }
    for w in 0..shape.words {
        for _ in 0..rng.range(1, shape.max_pieces) {
            roles.push(TokenRole::Word(w));
        }
    }
    if shape.sep {
        roles.push(TokenRole::Special);
    }
    let t = roles.len();
    let mut data = Vec::with_capacity(shape.layers * shape.heads * t * t);
    for _ in 0..shape.layers * shape.heads {
        stochastic_rows(rng, t, &mut data);
    }
    let tensor = AttentionTensor::new(shape.layers, shape.heads, t, data).unwrap();
    AttentionRecord::new(
        id,
        roles,
        shape.cls.then_some(0),
        shape.sep.then_some(t - 1),
        tensor,
    )
    .unwrap()
}

/// A labeled corpus of `sentences` random sentences and a matching archive.
pub fn synthetic_pair(
    seed: u64,
    sentences: usize,
    layers: usize,
    heads: usize,
    specials: bool,
) -> (AttentionArchive, Corpus) {
    let mut rng = TestRng::new(seed);
    let mut records = Vec::new();
    let mut corpus = Vec::new();
    for i in 0..sentences {
        let id = format!("s{i}");
        let words = rng.range(1, 9);
        let shape = RecordShape {
            words,
            max_pieces: 3,
            cls: specials,
            sep: specials,
            layers,
            heads,
        };
        records.push(random_record(&mut rng, &id, &shape));
        let surfaces: Vec<String> = (0..words).map(|w| format!("w{}", rng.below(20) + w)).collect();
        let counts: Vec<usize> = (0..words).map(|_| rng.below(10)).collect();
        let refs: Vec<&str> = surfaces.iter().map(String::as_str).collect();
        corpus.push(sentence_from_counts(&id, &refs, &counts));
    }
    (
        AttentionArchive::new("synthetic", layers, heads, false, records).unwrap(),
        Corpus::new(Split::Dev, corpus).unwrap(),
    )
}

/// Independent Match_m: a word is in the gold top-m set iff fewer than `m`
/// words score strictly higher; a word is in the predicted top-m set iff
/// fewer than `m` words precede it in (score desc, position asc) order.
pub fn brute_force_match<G: PartialOrd>(gold: &[G], predicted: &[f64], m: usize) -> f64 {
    let n = gold.len();
    let in_gold = |i: usize| (0..n).filter(|&j| gold[j] > gold[i]).count() < m;
    let in_pred = |i: usize| {
        (0..n)
            .filter(|&j| predicted[j] > predicted[i] || (predicted[j] == predicted[i] && j < i))
            .count()
            < m
    };
    let hits = (0..n).filter(|&i| in_gold(i) && in_pred(i)).count();
    hits as f64 / m as f64
}
