// SPDX-License-Identifier: MIT OR Apache-2.0

//! Per-word emphasis scores from a word-level attention map.
//!
//! Three readings of one head are supported:
//!
//! - [`Method::Words2Target`]: mean of the target word's column over every
//!   group row, special tokens and the word itself included.
//! - [`Method::Cls2Target`] / [`Method::Sep2Target`]: the special token's
//!   row entry at the target word's column.
//!
//! None of these read gold labels.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::attention_store::{word_level_map, AggregationMode, AttentionRecord, SpecialKind, WordLevelMap};
use crate::corpus::Corpus;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "Words2Target", alias = "Word2Target")]
    Words2Target,
    #[serde(rename = "CLS2Target")]
    Cls2Target,
    #[serde(rename = "SEP2Target")]
    Sep2Target,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Words2Target, Method::Cls2Target, Method::Sep2Target];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Words2Target => "Words2Target",
            Method::Cls2Target => "CLS2Target",
            Method::Sep2Target => "SEP2Target",
        }
    }

    /// The special token a method reads, if any.
    pub fn special(self) -> Option<SpecialKind> {
        match self {
            Method::Words2Target => None,
            Method::Cls2Target => Some(SpecialKind::Cls),
            Method::Sep2Target => Some(SpecialKind::Sep),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "words2target" | "word2target" => Ok(Method::Words2Target),
            "cls2target" => Ok(Method::Cls2Target),
            "sep2target" => Ok(Method::Sep2Target),
            _ => Err(Error::Invalid(format!("unknown method {s:?}"))),
        }
    }
}

/// One candidate scorer: a head of a model read through one method.
/// `layer` and `head` are 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Configuration {
    pub model_id: String,
    pub layer: usize,
    pub head: usize,
    pub method: Method,
    pub mode: AggregationMode,
}

impl Configuration {
    pub fn new(model_id: impl Into<String>, layer: usize, head: usize, method: Method) -> Self {
        Self {
            model_id: model_id.into(),
            layer,
            head,
            method,
            mode: AggregationMode::default(),
        }
    }

    pub fn with_mode(mut self, mode: AggregationMode) -> Self {
        self.mode = mode;
        self
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} L{} H{} {} ({})",
            self.model_id, self.layer, self.head, self.method, self.mode
        )
    }
}

/// Emphasis scores for the words of one sentence, in word order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    pub sentence_id: String,
    pub values: Vec<f64>,
}

impl ScoreVector {
    pub fn new(sentence_id: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            sentence_id: sentence_id.into(),
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn words2target(map: &WordLevelMap) -> Vec<f64> {
    let size = map.size();
    (0..map.num_words())
        .map(|t| column_mean(map, map.word_group(t), size))
        .collect()
}

/// Words2Target over every group, specials included, in group order.
pub fn words2target_groups(map: &WordLevelMap) -> Vec<f64> {
    let size = map.size();
    (0..size).map(|to| column_mean(map, to, size)).collect()
}

// Neumaier summation keeps a uniform map at exactly 1/size.
fn column_mean(map: &WordLevelMap, to: usize, size: usize) -> f64 {
    let (mut sum, mut carry) = (0f64, 0f64);
    for from in 0..size {
        let v = map.get(from, to);
        let t = sum + v;
        if sum.abs() >= v.abs() {
            carry += (sum - t) + v;
        } else {
            carry += (v - t) + sum;
        }
        sum = t;
    }
    (sum + carry) / size as f64
}

/// Reads the special token's row at each word column. `None` when the map
/// has no such token.
pub fn special2target(map: &WordLevelMap, kind: SpecialKind) -> Option<Vec<f64>> {
    let row = map.row(map.special_group(kind)?);
    Some((0..map.num_words()).map(|t| row[map.word_group(t)]).collect())
}

/// Applies `method` to an aggregated map.
pub fn score_map(map: &WordLevelMap, method: Method) -> Option<Vec<f64>> {
    match method.special() {
        None => Some(words2target(map)),
        Some(kind) => special2target(map, kind),
    }
}

pub fn score_with_config(record: &AttentionRecord, config: &Configuration) -> Result<ScoreVector> {
    let map = word_level_map(record, config.layer, config.head, config.mode)?;
    let values = score_map(&map, config.method).ok_or_else(|| Error::MethodUnavailable {
        model_id: config.model_id.clone(),
        method: config.method.as_str(),
        token: match config.method {
            Method::Cls2Target => "CLS",
            _ => "SEP",
        },
    })?;
    Ok(ScoreVector::new(record.sentence_id(), values))
}

/// Writes `sentence_id<TAB>position<TAB>surface<TAB>score` lines. Scores use
/// the shortest decimal that round-trips.
pub fn write_scores_tsv<W: Write>(
    out: &mut W,
    corpus: &Corpus,
    scores: &[ScoreVector],
) -> Result<()> {
    for sv in scores {
        let sentence = corpus
            .get(&sv.sentence_id)
            .ok_or_else(|| Error::mismatch(&sv.sentence_id, "not in corpus"))?;
        if sentence.len() != sv.len() {
            return Err(Error::mismatch(
                &sv.sentence_id,
                format!("{} scores for {} words", sv.len(), sentence.len()),
            ));
        }
        for (word, score) in sentence.words().iter().zip(&sv.values) {
            writeln!(
                out,
                "{}\t{}\t{}\t{}",
                sv.sentence_id, word.position, word.surface, score
            )
            .map_err(|e| Error::io("<output>", e))?;
        }
    }
    Ok(())
}

/// Reads the format written by [`write_scores_tsv`]. Rows of one sentence
/// must be consecutive with positions `0..n` in order.
pub fn read_scores_tsv<R: BufRead>(input: R) -> Result<Vec<ScoreVector>> {
    let mut out: Vec<ScoreVector> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (idx, line) in input.lines().enumerate() {
        let line_no = idx + 1;
        let parse_err = |message: String| Error::Parse {
            line: line_no,
            message,
        };
        let line = line.map_err(|e| parse_err(e.to_string()))?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(parse_err(format!("expected 4 columns, found {}", fields.len())));
        }
        let position: usize = fields[1]
            .parse()
            .map_err(|_| parse_err(format!("bad position {:?}", fields[1])))?;
        let score: f64 = fields[3]
            .parse()
            .map_err(|_| parse_err(format!("bad score {:?}", fields[3])))?;
        if !score.is_finite() {
            return Err(parse_err(format!("non-finite score {}", fields[3])));
        }
        let id = fields[0];
        match out.last_mut() {
            Some(sv) if sv.sentence_id == id => {
                if position != sv.values.len() {
                    return Err(parse_err(format!(
                        "position {position}, expected {}",
                        sv.values.len()
                    )));
                }
                sv.values.push(score);
            }
            _ => {
                if !seen.insert(id.to_string()) {
                    return Err(parse_err(format!("rows of sentence {id} are not consecutive")));
                }
                if position != 0 {
                    return Err(parse_err(format!("sentence {id} starts at position {position}")));
                }
                out.push(ScoreVector::new(id, vec![score]));
            }
        }
    }
    Ok(out)
}
