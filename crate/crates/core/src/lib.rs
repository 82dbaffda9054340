// SPDX-License-Identifier: MIT OR Apache-2.0

//! # attnmark
//!
//! Zero-shot word emphasis selection from pre-extracted transformer
//! attention maps.
//!
//! The pipeline reads annotated sentences ([`corpus`]), reads attention
//! archives produced by an external extractor ([`attention_store`]), turns
//! one attention head into per-word emphasis scores ([`scoring`]), and
//! evaluates rankings against annotator gold data ([`evaluation`]). The
//! [`head_search`] module sweeps every `(layer, head, method)` configuration
//! of a model and picks the best one; [`baselines`] provides the random,
//! word-count and TF-IDF reference scorers.
//!
//! Layer and head numbers are 1-based everywhere in the public API.

#![forbid(unsafe_code)]

pub mod attention_store;
pub mod baselines;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod fmt;
pub mod head_search;
pub mod scoring;

pub use attention_store::{
    read_archive, word_level_map, write_archive, AggregationMode, AttentionArchive,
    AttentionRecord, AttentionTensor, GroupRole, SpecialKind, TokenRole, WordLevelMap,
};
pub use baselines::{
    build_train_stats, random_baseline, tfidf_baseline, word_count_baseline, TrainStats,
};
pub use corpus::{
    gold_e_freq, parse_corpus, top_m_set, write_corpus, Corpus, RankedSet, Sentence, Split,
    TiePolicy, Word,
};
pub use error::{Error, Result};
pub use evaluation::{
    evaluate_corpus, match_m, ranking_score, sentence_report, Granularity, MatchReport,
};
pub use head_search::{
    ensemble, grid_search, layerwise_report, select_best, EnsembleMember, EnsembleSpec,
    Normalization, SearchOptions, SearchResult,
};
pub use scoring::{
    score_with_config, special2target, words2target, Configuration, Method, ScoreVector,
};
