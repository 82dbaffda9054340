// SPDX-License-Identifier: MIT OR Apache-2.0

//! Statistical reference scorers: random, inverse word count, TF-IDF.

use std::collections::HashMap;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::corpus::{Corpus, Sentence};
use crate::error::{Error, Result};
use crate::scoring::ScoreVector;

/// Term and document frequencies over a training split.
#[derive(Debug, Clone)]
pub struct TrainStats {
    total_sentences: usize,
    term_count: HashMap<String, u64>,
    doc_freq: HashMap<String, u64>,
    fold_case: bool,
}

impl TrainStats {
    pub fn total_sentences(&self) -> usize {
        self.total_sentences
    }

    pub fn fold_case(&self) -> bool {
        self.fold_case
    }

    /// Occurrences of `word` in the training split.
    pub fn term_count(&self, word: &str) -> u64 {
        self.term_count.get(&self.key(word)).copied().unwrap_or(0)
    }

    /// Training sentences containing `word`.
    pub fn doc_freq(&self, word: &str) -> u64 {
        self.doc_freq.get(&self.key(word)).copied().unwrap_or(0)
    }

    fn key(&self, word: &str) -> String {
        if self.fold_case {
            word.to_lowercase()
        } else {
            word.to_string()
        }
    }
}

pub fn build_train_stats(train: &Corpus, fold_case: bool) -> Result<TrainStats> {
    if train.is_empty() {
        return Err(Error::Invalid("training corpus is empty".into()));
    }
    let mut stats = TrainStats {
        total_sentences: train.len(),
        term_count: HashMap::new(),
        doc_freq: HashMap::new(),
        fold_case,
    };
    for sentence in train.sentences() {
        let mut in_sentence: Vec<String> = sentence.surfaces().map(|w| stats.key(w)).collect();
        for w in &in_sentence {
            *stats.term_count.entry(w.clone()).or_default() += 1;
        }
        in_sentence.sort_unstable();
        in_sentence.dedup();
        for w in in_sentence {
            *stats.doc_freq.entry(w).or_default() += 1;
        }
    }
    Ok(stats)
}

/// `tf * ln(|D_train| / (df + 1))`, where `tf` is the word's count in the
/// sentence divided by the sentence length. Common words score negative.
pub fn tfidf_baseline(sentence: &Sentence, stats: &TrainStats) -> ScoreVector {
    let keys: Vec<String> = sentence.surfaces().map(|w| stats.key(w)).collect();
    let mut local: HashMap<&str, u64> = HashMap::new();
    for k in &keys {
        *local.entry(k.as_str()).or_default() += 1;
    }
    let len = keys.len() as f64;
    let total = stats.total_sentences as f64;
    let values = keys
        .iter()
        .map(|k| {
            let tf = local[k.as_str()] as f64 / len;
            let df = stats.doc_freq.get(k).copied().unwrap_or(0) as f64;
            tf * (total / (df + 1.0)).ln()
        })
        .collect();
    ScoreVector::new(sentence.id(), values)
}

/// `1 / f(word, D_train)`; unseen words score 1.
pub fn word_count_baseline(sentence: &Sentence, stats: &TrainStats) -> ScoreVector {
    let values = sentence
        .surfaces()
        .map(|w| match stats.term_count.get(&stats.key(w)) {
            Some(&c) if c > 0 => 1.0 / c as f64,
            _ => 1.0,
        })
        .collect();
    ScoreVector::new(sentence.id(), values)
}

/// Uniform `[0, 1)` scores keyed by `(seed, sentence id, position)`.
///
/// The generator is ChaCha8 seeded with
/// `SHA-256(seed as 8 little-endian bytes || sentence id as UTF-8)`; word
/// `t` reads stream `t`, and its score is the top 53 bits of the first
/// `u64` of that stream scaled by `2^-53`. Scores therefore do not depend on
/// the order sentences are visited in.
pub fn random_baseline(sentence: &Sentence, seed: u64) -> ScoreVector {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(sentence.id().as_bytes());
    let key: [u8; 32] = hasher.finalize().into();
    let mut rng = ChaCha8Rng::from_seed(key);
    let values = (0..sentence.len())
        .map(|t| {
            rng.set_stream(t as u64);
            rng.set_word_pos(0);
            (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
        })
        .collect();
    ScoreVector::new(sentence.id(), values)
}
