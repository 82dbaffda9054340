// SPDX-License-Identifier: MIT OR Apache-2.0

//! Match_m and Ranking Score.
//!
//! For one sentence, `Match_m = |S_m ∩ Ŝ_m| / m`, where `S_m` is the gold
//! top-m set with ties expanded and `Ŝ_m` the predicted top-m set cut
//! strictly (ties broken by position). Corpus scores average over labeled
//! sentences, and the Ranking Score is the mean of `Match_1..Match_4`.
//! Sentences shorter than `m` still divide by `m`.

use std::collections::HashMap;
use std::io::Write;

use num_rational::Ratio;

use crate::corpus::{rank_positions, top_m_set, Corpus, RankKey, RankedSet, Sentence, TiePolicy};
use crate::error::{Error, Result};
use crate::fmt::round_half_up;
use crate::scoring::ScoreVector;

/// The evaluated cut-offs, `m = 1..=4`.
pub const CUTOFFS: [usize; 4] = [1, 2, 3, 4];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Granularity {
    Sentence,
    Corpus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchReport {
    /// `Match_1..Match_4`.
    pub matches: [f64; 4],
    pub ranking_score: f64,
    pub granularity: Granularity,
    pub sentences: usize,
}

impl MatchReport {
    /// Builds a report from summed intersection sizes over `sentences`
    /// sentences.
    pub fn from_hits(hits: [u64; 4], sentences: usize, granularity: Granularity) -> Self {
        let mut matches = [0f64; 4];
        for (i, m) in CUTOFFS.iter().enumerate() {
            matches[i] = hits[i] as f64 / (m * sentences) as f64;
        }
        Self {
            matches,
            ranking_score: ranking_score(matches),
            granularity,
            sentences,
        }
    }

    pub fn match_at(&self, m: usize) -> f64 {
        self.matches[m - 1]
    }

    /// `m<TAB>score` lines followed by a `ranking_score` line, 4 decimals.
    pub fn write_tsv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "m\tscore")?;
        for (m, v) in CUTOFFS.iter().zip(self.matches) {
            writeln!(out, "{m}\t{}", round_half_up(v, 4))?;
        }
        writeln!(out, "ranking_score\t{}", round_half_up(self.ranking_score, 4))
    }
}

pub fn ranking_score(matches: [f64; 4]) -> f64 {
    matches.iter().sum::<f64>() / 4.0
}

/// Gold top-m sets of one sentence, computed once and reused across many
/// predictions.
#[derive(Debug, Clone)]
pub struct GoldSets {
    n: usize,
    sets: [RankedSet; 4],
}

impl GoldSets {
    pub fn new<G: RankKey>(gold: &[G]) -> Self {
        Self {
            n: gold.len(),
            sets: CUTOFFS.map(|m| top_m_set(gold, m, TiePolicy::ExpandTies)),
        }
    }

    pub fn from_sentence(sentence: &Sentence) -> Option<Self> {
        sentence.gold_e_freq().map(Self::new::<Ratio<u32>>)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn set(&self, m: usize) -> &RankedSet {
        &self.sets[m - 1]
    }

    /// `|S_m ∩ Ŝ_m|` for `m = 1..=4`.
    pub fn hits(&self, predicted: &[f64]) -> [u64; 4] {
        let order = rank_positions(predicted);
        let mut hits = [0u64; 4];
        for (i, m) in CUTOFFS.iter().enumerate() {
            let cut = (*m).min(order.len());
            hits[i] = order[..cut]
                .iter()
                .filter(|p| self.sets[i].contains(**p))
                .count() as u64;
        }
        hits
    }
}

/// Sentence-level `Match_m`.
pub fn match_m<G: RankKey>(gold: &[G], predicted: &[f64], m: usize) -> Result<f64> {
    if gold.len() != predicted.len() {
        return Err(Error::Invalid(format!(
            "gold has {} words, prediction has {}",
            gold.len(),
            predicted.len()
        )));
    }
    if m == 0 {
        return Err(Error::Invalid("m must be at least 1".into()));
    }
    let gold_set = top_m_set(gold, m, TiePolicy::ExpandTies);
    let pred_set = top_m_set(predicted, m, TiePolicy::Strict);
    Ok(pred_set.intersection_size(&gold_set) as f64 / m as f64)
}

/// Scores one labeled sentence.
pub fn sentence_report(sentence: &Sentence, predicted: &ScoreVector) -> Result<MatchReport> {
    let gold = GoldSets::from_sentence(sentence).ok_or(Error::Unlabeled)?;
    check_len(sentence, predicted)?;
    Ok(MatchReport::from_hits(gold.hits(&predicted.values), 1, Granularity::Sentence))
}

fn check_len(sentence: &Sentence, predicted: &ScoreVector) -> Result<()> {
    if sentence.len() != predicted.len() {
        return Err(Error::mismatch(
            sentence.id(),
            format!("{} scores for {} words", predicted.len(), sentence.len()),
        ));
    }
    Ok(())
}

/// Pairs predictions with corpus sentences by id. Every labeled sentence
/// needs exactly one prediction; predictions for unknown ids are errors.
pub fn align_predictions<'a>(
    gold: &'a Corpus,
    predictions: &'a [ScoreVector],
) -> Result<Vec<(&'a Sentence, &'a ScoreVector)>> {
    let mut by_id: HashMap<&str, &ScoreVector> = HashMap::with_capacity(predictions.len());
    for p in predictions {
        if gold.get(&p.sentence_id).is_none() {
            return Err(Error::mismatch(&p.sentence_id, "prediction for unknown sentence"));
        }
        if by_id.insert(&p.sentence_id, p).is_some() {
            return Err(Error::mismatch(&p.sentence_id, "duplicate prediction"));
        }
    }
    let mut pairs = Vec::new();
    for sentence in gold.labeled() {
        let p = by_id
            .get(sentence.id())
            .ok_or_else(|| Error::mismatch(sentence.id(), "missing prediction"))?;
        check_len(sentence, p)?;
        pairs.push((sentence, *p));
    }
    if pairs.is_empty() {
        return Err(Error::Unlabeled);
    }
    Ok(pairs)
}

pub fn evaluate_corpus(gold: &Corpus, predictions: &[ScoreVector]) -> Result<MatchReport> {
    let pairs = align_predictions(gold, predictions)?;
    let mut hits = [0u64; 4];
    for (sentence, p) in &pairs {
        let gold_sets = GoldSets::from_sentence(sentence).expect("labeled");
        for (acc, h) in hits.iter_mut().zip(gold_sets.hits(&p.values)) {
            *acc += h;
        }
    }
    Ok(MatchReport::from_hits(hits, pairs.len(), Granularity::Corpus))
}

/// Top-4 words with competition ranks, as `word(rank), …`.
fn describe_top<G: RankKey>(sentence: &Sentence, scores: &[G], set: &RankedSet) -> String {
    let mut out = Vec::with_capacity(set.len());
    let mut rank = 0;
    for (i, &p) in set.members.iter().enumerate() {
        if i == 0 || scores[p].rank_cmp(&scores[set.members[i - 1]]) != std::cmp::Ordering::Equal {
            rank = i + 1;
        }
        out.push(format!("{}({rank})", sentence.words()[p].surface));
    }
    out.join(", ")
}

/// Per-sentence table: id, gold top-4, predicted top-4, Match_1..4, R.
pub fn write_sentence_reports<W: Write>(
    out: &mut W,
    gold: &Corpus,
    predictions: &[ScoreVector],
) -> Result<()> {
    let pairs = align_predictions(gold, predictions)?;
    let io = |e| Error::io("<output>", e);
    writeln!(out, "sentence_id\tgold\tpredicted\tmatch1\tmatch2\tmatch3\tmatch4\tranking_score")
        .map_err(io)?;
    for (sentence, p) in pairs {
        let report = sentence_report(sentence, p)?;
        let gold_scores = sentence.gold_e_freq().expect("labeled");
        let gold_top = describe_top(sentence, gold_scores, &top_m_set(gold_scores, 4, TiePolicy::ExpandTies));
        let pred_top = describe_top(sentence, &p.values, &top_m_set(&p.values, 4, TiePolicy::Strict));
        write!(out, "{}\t{gold_top}\t{pred_top}", sentence.id()).map_err(io)?;
        for v in report.matches {
            write!(out, "\t{}", round_half_up(v, 4)).map_err(io)?;
        }
        writeln!(out, "\t{}", round_half_up(report.ranking_score, 4)).map_err(io)?;
    }
    Ok(())
}
