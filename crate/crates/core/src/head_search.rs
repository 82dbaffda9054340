// SPDX-License-Identifier: MIT OR Apache-2.0

//! Exhaustive configuration search, layer-wise reports and ensembles.

use std::cmp::Ordering;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attention_store::{word_level_map, AggregationMode, AttentionArchive, AttentionRecord};
use crate::corpus::{Corpus, Sentence};
use crate::error::{Error, Result};
use crate::evaluation::{GoldSets, Granularity, MatchReport};
use crate::scoring::{score_map, score_with_config, Configuration, Method, ScoreVector};

#[derive(Debug, Clone, Default)]
pub struct SearchOptions {
    pub mode: AggregationMode,
    /// Worker threads; `None` uses the ambient rayon pool, `Some(1)` runs
    /// serially.
    pub threads: Option<usize>,
}

/// Every feasible configuration of one model with its corpus report, best
/// first.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub entries: Vec<(Configuration, MatchReport)>,
}

/// Descending ranking score, then layer, head and method ascending.
pub fn config_order(a: &(Configuration, MatchReport), b: &(Configuration, MatchReport)) -> Ordering {
    b.1.ranking_score
        .total_cmp(&a.1.ranking_score)
        .then(a.0.layer.cmp(&b.0.layer))
        .then(a.0.head.cmp(&b.0.head))
        .then(a.0.method.cmp(&b.0.method))
        .then_with(|| a.0.model_id.cmp(&b.0.model_id))
}

impl SearchResult {
    pub fn from_entries(mut entries: Vec<(Configuration, MatchReport)>) -> Self {
        entries.sort_by(config_order);
        Self { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `model_id,layer,head,method,match1,…,match4,ranking_score`, scores in
    /// shortest round-trip form.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| Error::Invalid(format!("csv: {e}"));
        w.write_record([
            "model_id", "layer", "head", "method", "match1", "match2", "match3", "match4",
            "ranking_score",
        ])
        .map_err(csv_err)?;
        for (config, report) in &self.entries {
            let mut row = vec![
                config.model_id.clone(),
                config.layer.to_string(),
                config.head.to_string(),
                config.method.to_string(),
            ];
            row.extend(report.matches.iter().map(|v| v.to_string()));
            row.push(report.ranking_score.to_string());
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io("<output>", e))?;
        Ok(())
    }

    /// Reads a CSV written by [`SearchResult::write_csv`].
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(input);
        let mut entries = Vec::new();
        for (i, row) in reader.records().enumerate() {
            let line = i + 2;
            let row = row.map_err(|e| Error::Parse {
                line,
                message: e.to_string(),
            })?;
            if row.len() != 9 {
                return Err(Error::Parse {
                    line,
                    message: format!("expected 9 fields, found {}", row.len()),
                });
            }
            let bad = |field: &str| Error::Parse {
                line,
                message: format!("bad {field} value"),
            };
            let layer = row[1].parse().map_err(|_| bad("layer"))?;
            let head = row[2].parse().map_err(|_| bad("head"))?;
            let method: Method = row[3].parse().map_err(|_| bad("method"))?;
            let mut matches = [0f64; 4];
            for (k, m) in matches.iter_mut().enumerate() {
                *m = row[4 + k].parse().map_err(|_| bad("match"))?;
            }
            let ranking_score: f64 = row[8].parse().map_err(|_| bad("ranking_score"))?;
            entries.push((
                Configuration::new(&row[0], layer, head, method),
                MatchReport {
                    matches,
                    ranking_score,
                    granularity: Granularity::Corpus,
                    sentences: 0,
                },
            ));
        }
        Ok(Self::from_entries(entries))
    }
}

/// Methods computable for every record of `archive`.
pub fn feasible_methods(archive: &AttentionArchive) -> Vec<Method> {
    let mut methods = vec![Method::Words2Target];
    if archive.has_cls() {
        methods.push(Method::Cls2Target);
    }
    if archive.has_sep() {
        methods.push(Method::Sep2Target);
    }
    methods
}

/// Labeled sentences paired with their attention records.
fn align<'a>(
    archive: &'a AttentionArchive,
    corpus: &'a Corpus,
) -> Result<Vec<(&'a AttentionRecord, GoldSets)>> {
    if !corpus.is_labeled() {
        return Err(Error::Unlabeled);
    }
    for record in archive.records() {
        if corpus.get(record.sentence_id()).is_none() {
            return Err(Error::mismatch(record.sentence_id(), "record has no corpus sentence"));
        }
    }
    corpus
        .labeled()
        .map(|sentence| {
            let record = record_for(archive, sentence)?;
            Ok((record, GoldSets::from_sentence(sentence).expect("labeled")))
        })
        .collect()
}

fn record_for<'a>(archive: &'a AttentionArchive, sentence: &Sentence) -> Result<&'a AttentionRecord> {
    let record = archive.get(sentence.id()).ok_or_else(|| {
        Error::mismatch(
            sentence.id(),
            format!("no attention record in archive {}", archive.model_id()),
        )
    })?;
    if record.num_words() != sentence.len() {
        return Err(Error::mismatch(
            sentence.id(),
            format!(
                "record has {} words, corpus sentence has {}",
                record.num_words(),
                sentence.len()
            ),
        ));
    }
    Ok(record)
}

/// Scores every `(layer, head, method)` of `archive` on the labeled
/// sentences of `corpus`. Methods needing a special token the archive lacks
/// are skipped. Output order does not depend on the thread count.
pub fn grid_search(
    archive: &AttentionArchive,
    corpus: &Corpus,
    options: &SearchOptions,
) -> Result<SearchResult> {
    let aligned = align(archive, corpus)?;
    let methods = feasible_methods(archive);
    let heads: Vec<(usize, usize)> = (1..=archive.num_layers())
        .flat_map(|l| (1..=archive.num_heads()).map(move |h| (l, h)))
        .collect();

    let evaluate_head = |&(layer, head): &(usize, usize)| -> Result<Vec<(Configuration, MatchReport)>> {
        let mut hits = vec![[0u64; 4]; methods.len()];
        for (record, gold) in &aligned {
            let map = word_level_map(record, layer, head, options.mode)?;
            for (method, acc) in methods.iter().zip(hits.iter_mut()) {
                let scores = score_map(&map, *method).expect("feasible method");
                for (a, h) in acc.iter_mut().zip(gold.hits(&scores)) {
                    *a += h;
                }
            }
        }
        Ok(methods
            .iter()
            .zip(hits)
            .map(|(method, h)| {
                (
                    Configuration::new(archive.model_id(), layer, head, *method).with_mode(options.mode),
                    MatchReport::from_hits(h, aligned.len(), Granularity::Corpus),
                )
            })
            .collect())
    };

    let per_head: Vec<Vec<(Configuration, MatchReport)>> = match options.threads {
        Some(1) => heads.iter().map(evaluate_head).collect::<Result<_>>()?,
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Invalid(format!("thread pool: {e}")))?
            .install(|| heads.par_iter().map(evaluate_head).collect::<Result<_>>())?,
        None => heads.par_iter().map(evaluate_head).collect::<Result<_>>()?,
    };
    Ok(SearchResult::from_entries(per_head.into_iter().flatten().collect()))
}

pub fn select_best(result: &SearchResult) -> Result<&Configuration> {
    result
        .entries
        .first()
        .map(|(c, _)| c)
        .ok_or_else(|| Error::Invalid("search result is empty".into()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerwisePoint {
    pub layer: usize,
    pub head: usize,
    pub method: Method,
    pub ranking_score: f64,
}

/// Configurations scoring strictly above `floor`, ordered by layer, head,
/// method.
pub fn layerwise_report(result: &SearchResult, floor: f64) -> Vec<LayerwisePoint> {
    let mut points: Vec<LayerwisePoint> = result
        .entries
        .iter()
        .filter(|(_, r)| r.ranking_score > floor)
        .map(|(c, r)| LayerwisePoint {
            layer: c.layer,
            head: c.head,
            method: c.method,
            ranking_score: r.ranking_score,
        })
        .collect();
    points.sort_by_key(|p| (p.layer, p.head, p.method));
    points
}

pub fn write_layerwise_csv<W: Write>(out: &mut W, points: &[LayerwisePoint]) -> std::io::Result<()> {
    writeln!(out, "layer,head,method,ranking_score")?;
    for p in points {
        writeln!(out, "{},{},{},{}", p.layer, p.head, p.method, p.ranking_score)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Average scores as produced.
    #[default]
    Raw,
    /// Scale each member's vector to sum to 1 within a sentence first.
    PerSentenceSum1,
}

impl std::fmt::Display for Normalization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Normalization::Raw => "raw",
            Normalization::PerSentenceSum1 => "per_sentence_sum1",
        })
    }
}

impl std::str::FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(Normalization::Raw),
            "per_sentence_sum1" => Ok(Normalization::PerSentenceSum1),
            _ => Err(Error::Invalid(format!("unknown normalization {s:?}"))),
        }
    }
}

/// Ensemble description as stored on disk. Archive paths are relative to
/// the spec file.
///
/// ```json
/// {
///   "normalization": "raw",
///   "members": [
///     {"archive": "model-a.json", "layer": 3, "head": 7, "method": "Words2Target"},
///     {"archive": "model-b.json", "layer": 2, "head": 1, "method": "CLS2Target"}
///   ]
/// }
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSpec {
    #[serde(default)]
    pub normalization: Normalization,
    #[serde(default)]
    pub mode: AggregationMode,
    pub members: Vec<EnsembleSpecMember>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSpecMember {
    pub archive: PathBuf,
    pub layer: usize,
    pub head: usize,
    pub method: Method,
}

impl EnsembleSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        if spec.members.len() < 2 {
            return Err(Error::Invalid(format!(
                "ensemble needs at least 2 members, spec lists {}",
                spec.members.len()
            )));
        }
        Ok(spec)
    }

    /// Member archive paths resolved against `spec_dir`.
    pub fn archive_paths(&self, spec_dir: &Path) -> Vec<PathBuf> {
        self.members.iter().map(|m| spec_dir.join(&m.archive)).collect()
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleMember<'a> {
    pub archive: &'a AttentionArchive,
    pub config: Configuration,
}

/// Per-word mean of the members' scores for every sentence of `corpus`.
pub fn ensemble(
    members: &[EnsembleMember<'_>],
    normalization: Normalization,
    corpus: &Corpus,
) -> Result<Vec<ScoreVector>> {
    if members.is_empty() {
        return Err(Error::Invalid("ensemble has no members".into()));
    }
    corpus
        .sentences()
        .iter()
        .map(|sentence| {
            let mut sum = vec![0f64; sentence.len()];
            for member in members {
                let record = record_for(member.archive, sentence)?;
                let mut scores = score_with_config(record, &member.config)?.values;
                if normalization == Normalization::PerSentenceSum1 {
                    let total: f64 = scores.iter().sum();
                    if total > 0.0 {
                        scores.iter_mut().for_each(|v| *v /= total);
                    }
                }
                for (s, v) in sum.iter_mut().zip(&scores) {
                    *s += v;
                }
            }
            let k = members.len() as f64;
            Ok(ScoreVector::new(sentence.id(), sum.into_iter().map(|s| s / k).collect()))
        })
        .collect()
}
