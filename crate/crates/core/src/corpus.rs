// SPDX-License-Identifier: MIT OR Apache-2.0

//! Annotated sentences, gold emphasis frequencies and top-m word sets.
//!
//! Corpus files are UTF-8 and tab-separated, one word per line:
//!
//! ```text
//! # id=honor
//! In     O  I  O  O  O  O  O  O  I
//! honor  I  I  O  O  I  I  I  I  I
//! ```
//!
//! Each row is `surface<TAB>label_1<TAB>…<TAB>label_A` with labels in
//! `{I, O}`. A blank line ends a sentence. The `# id=` line is optional; a
//! block without one gets its 0-based ordinal in the file as id. Rows with
//! only a surface column make an unlabeled sentence.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use num_rational::Ratio;

use crate::error::{Error, Result};

/// Number of annotators in the emphasis-selection dataset.
pub const DEFAULT_ANNOTATORS: usize = 9;

const ID_PREFIX: &str = "# id=";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Word {
    pub position: usize,
    pub surface: String,
}

/// One pre-tokenized sentence with optional annotator labels.
///
/// `labels[a][t]` is annotator `a`'s decision for word `t`. Gold emphasis
/// frequencies are derived from the labels on construction and kept as
/// exact rationals.
#[derive(Debug, Clone, PartialEq)]
pub struct Sentence {
    id: String,
    words: Vec<Word>,
    labels: Option<Vec<Vec<bool>>>,
    gold: Option<Vec<Ratio<u32>>>,
}

impl Sentence {
    /// Unlabeled sentence.
    pub fn new<S: Into<String>>(
        id: impl Into<String>,
        surfaces: impl IntoIterator<Item = S>,
    ) -> Result<Self> {
        let id = id.into();
        let words = build_words(&id, surfaces)?;
        Ok(Self {
            id,
            words,
            labels: None,
            gold: None,
        })
    }

    /// Labeled sentence; `labels` holds one row per annotator.
    pub fn with_labels<S: Into<String>>(
        id: impl Into<String>,
        surfaces: impl IntoIterator<Item = S>,
        labels: Vec<Vec<bool>>,
    ) -> Result<Self> {
        let mut sentence = Self::new(id, surfaces)?;
        if labels.is_empty() {
            return Err(Error::mismatch(&sentence.id, "no annotator rows"));
        }
        let n = sentence.words.len();
        if let Some(row) = labels.iter().position(|r| r.len() != n) {
            return Err(Error::mismatch(
                &sentence.id,
                format!(
                    "annotator row {row} has {} labels, expected {n}",
                    labels[row].len()
                ),
            ));
        }
        let gold = (0..n)
            .map(|t| gold_e_freq(labels.iter().map(|r| r[t])))
            .collect();
        sentence.labels = Some(labels);
        sentence.gold = Some(gold);
        Ok(sentence)
    }

    /// Labeled sentence from exact gold frequencies, without annotator rows.
    ///
    /// Useful for fixtures whose source only publishes the frequencies.
    pub fn with_gold<S: Into<String>>(
        id: impl Into<String>,
        surfaces: impl IntoIterator<Item = S>,
        gold: Vec<Ratio<u32>>,
    ) -> Result<Self> {
        let mut sentence = Self::new(id, surfaces)?;
        if gold.len() != sentence.words.len() {
            return Err(Error::mismatch(
                &sentence.id,
                format!("{} gold values for {} words", gold.len(), sentence.len()),
            ));
        }
        if gold.iter().any(|g| *g > Ratio::from_integer(1)) {
            return Err(Error::mismatch(&sentence.id, "gold value above 1"));
        }
        sentence.gold = Some(gold);
        Ok(sentence)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn words(&self) -> &[Word] {
        &self.words
    }

    pub fn surfaces(&self) -> impl Iterator<Item = &str> {
        self.words.iter().map(|w| w.surface.as_str())
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn labels(&self) -> Option<&[Vec<bool>]> {
        self.labels.as_deref()
    }

    pub fn gold_e_freq(&self) -> Option<&[Ratio<u32>]> {
        self.gold.as_deref()
    }

    pub fn is_labeled(&self) -> bool {
        self.gold.is_some()
    }
}

fn build_words<S: Into<String>>(
    id: &str,
    surfaces: impl IntoIterator<Item = S>,
) -> Result<Vec<Word>> {
    let words: Vec<Word> = surfaces
        .into_iter()
        .enumerate()
        .map(|(position, s)| Word {
            position,
            surface: s.into(),
        })
        .collect();
    if words.is_empty() {
        return Err(Error::mismatch(id, "sentence has no words"));
    }
    if let Some(w) = words.iter().find(|w| w.surface.is_empty()) {
        return Err(Error::mismatch(
            id,
            format!("empty surface at position {}", w.position),
        ));
    }
    Ok(words)
}

/// Exact mean of one word's binary annotator labels.
pub fn gold_e_freq(labels_column: impl IntoIterator<Item = bool>) -> Ratio<u32> {
    let (marked, total) = labels_column
        .into_iter()
        .fold((0u32, 0u32), |(m, t), l| (m + u32::from(l), t + 1));
    if total == 0 {
        return Ratio::from_integer(0);
    }
    Ratio::new(marked, total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Split {
    Train,
    Dev,
    Test,
    #[default]
    Other,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
            Split::Other => "other",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            "other" => Ok(Split::Other),
            _ => Err(Error::Invalid(format!("unknown split {s:?}"))),
        }
    }
}

/// An ordered collection of sentences with unique ids. Immutable once built.
#[derive(Debug, Clone)]
pub struct Corpus {
    split: Split,
    sentences: Vec<Sentence>,
    index: HashMap<String, usize>,
}

impl Corpus {
    pub fn new(split: Split, sentences: Vec<Sentence>) -> Result<Self> {
        let mut index = HashMap::with_capacity(sentences.len());
        for (i, s) in sentences.iter().enumerate() {
            if index.insert(s.id.clone(), i).is_some() {
                return Err(Error::mismatch(&s.id, "duplicate sentence id"));
            }
        }
        Ok(Self {
            split,
            sentences,
            index,
        })
    }

    /// Reads a corpus file with [`parse_corpus`].
    pub fn read_path(path: &Path, annotator_count: usize, split: Split) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let corpus = parse_corpus(std::io::BufReader::new(file), annotator_count)?;
        Ok(corpus.with_split(split))
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn sentences(&self) -> &[Sentence] {
        &self.sentences
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Sentence> {
        self.index.get(id).map(|&i| &self.sentences[i])
    }

    pub fn labeled(&self) -> impl Iterator<Item = &Sentence> {
        self.sentences.iter().filter(|s| s.is_labeled())
    }

    pub fn is_labeled(&self) -> bool {
        self.sentences.iter().any(Sentence::is_labeled)
    }
}

struct Block {
    id: Option<String>,
    id_line: usize,
    rows: Vec<(usize, String, Option<Vec<bool>>)>,
}

/// Parses the TAB-separated corpus format described in the module docs.
///
/// Every labeled row must carry exactly `annotator_count` labels; errors
/// carry the 1-based line number.
pub fn parse_corpus<R: BufRead>(input: R, annotator_count: usize) -> Result<Corpus> {
    if annotator_count == 0 {
        return Err(Error::Invalid("annotator count must be at least 1".into()));
    }
    let mut sentences = Vec::new();
    let mut block: Option<Block> = None;
    let mut last_line = 0;

    for (idx, line) in input.lines().enumerate() {
        let line_no = idx + 1;
        last_line = line_no;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let line = line.strip_suffix('\r').unwrap_or(&line);

        if line.trim().is_empty() {
            if let Some(b) = block.take() {
                sentences.push(finish_block(b, sentences.len(), line_no)?);
            }
            continue;
        }

        if let Some(id) = line.strip_prefix(ID_PREFIX) {
            if block.as_ref().is_some_and(|b| !b.rows.is_empty()) {
                return Err(Error::Parse {
                    line: line_no,
                    message: "id comment inside a sentence block".into(),
                });
            }
            if block.as_ref().is_some_and(|b| b.id.is_some()) {
                return Err(Error::Parse {
                    line: line_no,
                    message: "sentence block has two id comments".into(),
                });
            }
            let id = id.trim();
            if id.is_empty() {
                return Err(Error::Parse {
                    line: line_no,
                    message: "empty sentence id".into(),
                });
            }
            block = Some(Block {
                id: Some(id.to_string()),
                id_line: line_no,
                rows: Vec::new(),
            });
            continue;
        }

        let mut fields = line.split('\t');
        let surface = fields.next().unwrap_or_default();
        if surface.is_empty() {
            return Err(Error::Parse {
                line: line_no,
                message: "empty word surface".into(),
            });
        }
        let labels: Vec<&str> = fields.collect();
        let labels = if labels.is_empty() {
            None
        } else if labels.len() != annotator_count {
            return Err(Error::Parse {
                line: line_no,
                message: format!(
                    "expected {} columns ({annotator_count} labels), found {}",
                    annotator_count + 1,
                    labels.len() + 1
                ),
            });
        } else {
            let parsed = labels
                .iter()
                .map(|l| match *l {
                    "I" => Ok(true),
                    "O" => Ok(false),
                    other => Err(Error::Parse {
                        line: line_no,
                        message: format!("label {other:?} is not I or O"),
                    }),
                })
                .collect::<Result<Vec<bool>>>()?;
            Some(parsed)
        };

        let b = block.get_or_insert_with(|| Block {
            id: None,
            id_line: line_no,
            rows: Vec::new(),
        });
        if let Some((first_line, _, first_labels)) = b.rows.first() {
            if first_labels.is_some() != labels.is_some() {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!(
                        "labeled and unlabeled rows mixed in one sentence (block starts at line {first_line})"
                    ),
                });
            }
        }
        b.rows.push((line_no, surface.to_string(), labels));
    }

    if let Some(b) = block.take() {
        sentences.push(finish_block(b, sentences.len(), last_line + 1)?);
    }
    if sentences.is_empty() {
        return Err(Error::Parse {
            line: last_line.max(1),
            message: "input contains no sentences".into(),
        });
    }

    Corpus::new(Split::Other, sentences).map_err(|e| match e {
        Error::Mismatch { sentence, message } => Error::Invalid(format!("{sentence}: {message}")),
        other => other,
    })
}

fn finish_block(block: Block, ordinal: usize, end_line: usize) -> Result<Sentence> {
    if block.rows.is_empty() {
        return Err(Error::Parse {
            line: block.id_line,
            message: format!("empty sentence block (ends at line {end_line})"),
        });
    }
    let id = block.id.unwrap_or_else(|| ordinal.to_string());
    let labeled = block.rows[0].2.is_some();
    let mut surfaces = Vec::with_capacity(block.rows.len());
    let mut columns = Vec::with_capacity(block.rows.len());
    for (_, surface, labels) in block.rows {
        surfaces.push(surface);
        if let Some(l) = labels {
            columns.push(l);
        }
    }
    if labeled {
        let annotators = columns[0].len();
        let labels = (0..annotators)
            .map(|a| columns.iter().map(|c| c[a]).collect())
            .collect();
        Sentence::with_labels(id, surfaces, labels)
    } else {
        Sentence::new(id, surfaces)
    }
}

/// Writes a corpus in the format read by [`parse_corpus`].
pub fn write_corpus<W: Write>(corpus: &Corpus, mut out: W) -> std::io::Result<()> {
    for sentence in corpus.sentences() {
        writeln!(out, "{ID_PREFIX}{}", sentence.id())?;
        for (t, word) in sentence.words().iter().enumerate() {
            out.write_all(word.surface.as_bytes())?;
            if let Some(labels) = sentence.labels() {
                for row in labels {
                    out.write_all(if row[t] { b"\tI" } else { b"\tO" })?;
                }
            }
            out.write_all(b"\n")?;
        }
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Total order used to rank scores. Equal values compare equal, so ties are
/// visible to [`top_m_set`].
pub trait RankKey {
    fn rank_cmp(&self, other: &Self) -> Ordering;
}

impl RankKey for f64 {
    fn rank_cmp(&self, other: &Self) -> Ordering {
        if self == other {
            Ordering::Equal
        } else {
            self.total_cmp(other)
        }
    }
}

impl RankKey for f32 {
    fn rank_cmp(&self, other: &Self) -> Ordering {
        if self == other {
            Ordering::Equal
        } else {
            self.total_cmp(other)
        }
    }
}

impl RankKey for Ratio<u32> {
    fn rank_cmp(&self, other: &Self) -> Ordering {
        self.cmp(other)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TiePolicy {
    /// Keep every position tied with the m-th ranked score.
    ExpandTies,
    /// Cut at exactly `min(m, n)`, breaking ties by ascending position.
    Strict,
}

/// A top-m set of word positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankedSet {
    pub m: usize,
    /// Positions in rank order: descending score, then ascending position.
    pub members: Vec<usize>,
    pub tie_expanded: bool,
}

impl RankedSet {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, position: usize) -> bool {
        self.members.contains(&position)
    }

    pub fn intersection_size(&self, other: &RankedSet) -> usize {
        self.members.iter().filter(|p| other.contains(**p)).count()
    }
}

/// Positions sorted by descending score, ties by ascending position.
pub fn rank_positions<T: RankKey>(scores: &[T]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].rank_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

pub fn top_m_set<T: RankKey>(scores: &[T], m: usize, policy: TiePolicy) -> RankedSet {
    let order = rank_positions(scores);
    let cut = m.min(order.len());
    let members = match policy {
        TiePolicy::Strict => order[..cut].to_vec(),
        TiePolicy::ExpandTies if cut == 0 => Vec::new(),
        TiePolicy::ExpandTies => {
            let threshold = &scores[order[cut - 1]];
            order
                .into_iter()
                .take_while(|&p| scores[p].rank_cmp(threshold) != Ordering::Less)
                .collect()
        }
    };
    RankedSet {
        m,
        members,
        tie_expanded: policy == TiePolicy::ExpandTies,
    }
}
