// SPDX-License-Identifier: MIT OR Apache-2.0

//! Attention archives and subword-to-word aggregation.
//!
//! An archive is a JSON manifest plus one or more raw payload files. Each
//! sentence entry points at `l * a * T * T` little-endian `f32` values laid
//! out row-major as `[layer][head][from_token][to_token]`, with no header or
//! padding. Entries are concatenated at their declared `byte_offset`s.
//!
//! ```json
//! {
//!   "format_version": 1,
//!   "model_id": "bert-base-uncased",
//!   "num_layers": 12, "num_heads": 12, "cased": false,
//!   "sentences": [{
//!     "id": "honor", "num_tokens": 7, "num_words": 5,
//!     "token_to_word": [-1, 0, 1, 2, 3, 4, -1],
//!     "cls_index": 0, "sep_index": 6,
//!     "payload_file": "bert-base-uncased.bin", "byte_offset": 0
//!   }]
//! }
//! ```
//!
//! `-1` in `token_to_word` marks a special token. An optional `sha256`
//! (lowercase hex of the sentence's payload bytes) is verified when present.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

/// Maximum deviation of an attention row sum from 1.
pub const ROW_SUM_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenRole {
    Word(usize),
    Special,
}

impl TokenRole {
    fn from_code(code: i64) -> Option<Self> {
        match code {
            -1 => Some(TokenRole::Special),
            c if c >= 0 => Some(TokenRole::Word(c as usize)),
            _ => None,
        }
    }

    fn code(self) -> i64 {
        match self {
            TokenRole::Word(w) => w as i64,
            TokenRole::Special => -1,
        }
    }
}

/// Dense `[layers][heads][tokens][tokens]` attention probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionTensor {
    layers: usize,
    heads: usize,
    tokens: usize,
    data: Vec<f32>,
}

impl AttentionTensor {
    pub fn new(layers: usize, heads: usize, tokens: usize, data: Vec<f32>) -> Result<Self> {
        let expected = layers * heads * tokens * tokens;
        if data.len() != expected {
            return Err(Error::Format(format!(
                "tensor has {} values, shape {layers}x{heads}x{tokens}x{tokens} needs {expected}",
                data.len()
            )));
        }
        Ok(Self {
            layers,
            heads,
            tokens,
            data,
        })
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn tokens(&self) -> usize {
        self.tokens
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    /// The `T x T` map of one head, 0-based indices.
    pub fn slice(&self, layer: usize, head: usize) -> &[f32] {
        let size = self.tokens * self.tokens;
        let start = (layer * self.heads + head) * size;
        &self.data[start..start + size]
    }

    fn byte_len(&self) -> usize {
        self.data.len() * 4
    }
}

/// One sentence's attention maps with its token-to-word alignment.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionRecord {
    sentence_id: String,
    token_to_word: Vec<TokenRole>,
    cls_index: Option<usize>,
    sep_index: Option<usize>,
    tensor: AttentionTensor,
    groups: Vec<Range<usize>>,
    roles: Vec<GroupRole>,
    num_words: usize,
}

impl AttentionRecord {
    /// Builds a record, checking the alignment and that every row of every
    /// head is a probability distribution.
    pub fn new(
        sentence_id: impl Into<String>,
        token_to_word: Vec<TokenRole>,
        cls_index: Option<usize>,
        sep_index: Option<usize>,
        tensor: AttentionTensor,
    ) -> Result<Self> {
        let sentence_id = sentence_id.into();
        let invalid = |message: String| Error::InvalidRecord {
            record: sentence_id.clone(),
            message,
        };
        let tokens = token_to_word.len();
        if tokens == 0 {
            return Err(invalid("record has no tokens".into()));
        }
        if tensor.tokens != tokens {
            return Err(invalid(format!(
                "tensor has {} tokens, alignment has {tokens}",
                tensor.tokens
            )));
        }
        for (name, idx) in [("cls_index", cls_index), ("sep_index", sep_index)] {
            if let Some(i) = idx {
                match token_to_word.get(i) {
                    None => return Err(invalid(format!("{name} {i} out of range 0..{tokens}"))),
                    Some(TokenRole::Word(_)) => {
                        return Err(invalid(format!("{name} {i} is not a special token")))
                    }
                    Some(TokenRole::Special) => {}
                }
            }
        }
        if cls_index.is_some() && cls_index == sep_index {
            return Err(invalid("cls_index and sep_index coincide".into()));
        }

        let (groups, group_words) = group_tokens(&token_to_word);
        let num_words = group_words.iter().flatten().count();
        let mut seen = vec![false; num_words];
        for w in group_words.iter().flatten() {
            if *w >= num_words {
                return Err(invalid(format!(
                    "word indices are not contiguous: {w} with {num_words} words"
                )));
            }
            if std::mem::replace(&mut seen[*w], true) {
                return Err(invalid(format!(
                    "tokens of word {w} are not consecutive"
                )));
            }
        }
        if num_words == 0 {
            return Err(invalid("record has no word tokens".into()));
        }
        let roles = groups
            .iter()
            .zip(&group_words)
            .map(|(range, word)| match word {
                Some(w) => GroupRole::Word(*w),
                None if Some(range.start) == cls_index => GroupRole::Special(SpecialKind::Cls),
                None if Some(range.start) == sep_index => GroupRole::Special(SpecialKind::Sep),
                None => GroupRole::Special(SpecialKind::Other),
            })
            .collect();

        let record = Self {
            sentence_id,
            token_to_word,
            cls_index,
            sep_index,
            tensor,
            groups,
            roles,
            num_words,
        };
        record.validate_attention()?;
        Ok(record)
    }

    fn validate_attention(&self) -> Result<()> {
        let t = self.tensor.tokens;
        for layer in 0..self.tensor.layers {
            for head in 0..self.tensor.heads {
                let slice = self.tensor.slice(layer, head);
                for (row, values) in slice.chunks_exact(t).enumerate() {
                    let err = |message: String| Error::InvalidAttention {
                        record: self.sentence_id.clone(),
                        layer: layer + 1,
                        head: head + 1,
                        row,
                        message,
                    };
                    if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
                        return Err(err(format!("invalid attention weight {v}")));
                    }
                    let sum: f64 = values.iter().map(|&v| f64::from(v)).sum();
                    if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                        return Err(err(format!("row sums to {sum}, expected 1")));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn sentence_id(&self) -> &str {
        &self.sentence_id
    }

    pub fn token_to_word(&self) -> &[TokenRole] {
        &self.token_to_word
    }

    pub fn cls_index(&self) -> Option<usize> {
        self.cls_index
    }

    pub fn sep_index(&self) -> Option<usize> {
        self.sep_index
    }

    pub fn tensor(&self) -> &AttentionTensor {
        &self.tensor
    }

    pub fn num_tokens(&self) -> usize {
        self.token_to_word.len()
    }

    pub fn num_words(&self) -> usize {
        self.num_words
    }

    /// Token ranges of the word-level groups, in token order.
    pub fn groups(&self) -> &[Range<usize>] {
        &self.groups
    }

    pub fn group_roles(&self) -> &[GroupRole] {
        &self.roles
    }

    /// Same record under another sentence id.
    pub fn renamed(&self, sentence_id: impl Into<String>) -> Self {
        Self {
            sentence_id: sentence_id.into(),
            ..self.clone()
        }
    }
}

/// Splits tokens into groups: each special token alone, each run of tokens
/// sharing a word index together.
fn group_tokens(token_to_word: &[TokenRole]) -> (Vec<Range<usize>>, Vec<Option<usize>>) {
    let mut groups: Vec<Range<usize>> = Vec::new();
    let mut words = Vec::new();
    for (i, role) in token_to_word.iter().enumerate() {
        match role {
            TokenRole::Word(w) if words.last() == Some(&Some(*w)) => {
                groups.last_mut().expect("group exists").end = i + 1;
            }
            TokenRole::Word(w) => {
                groups.push(i..i + 1);
                words.push(Some(*w));
            }
            TokenRole::Special => {
                groups.push(i..i + 1);
                words.push(None);
            }
        }
    }
    (groups, words)
}

/// All attention maps one model produced over a corpus.
#[derive(Debug, Clone)]
pub struct AttentionArchive {
    model_id: String,
    num_layers: usize,
    num_heads: usize,
    cased: bool,
    records: Vec<AttentionRecord>,
    index: HashMap<String, usize>,
}

impl AttentionArchive {
    pub fn new(
        model_id: impl Into<String>,
        num_layers: usize,
        num_heads: usize,
        cased: bool,
        records: Vec<AttentionRecord>,
    ) -> Result<Self> {
        if num_layers == 0 || num_heads == 0 {
            return Err(Error::Format("archive needs at least one layer and head".into()));
        }
        let mut index = HashMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if r.tensor.layers != num_layers || r.tensor.heads != num_heads {
                return Err(Error::InvalidRecord {
                    record: r.sentence_id.clone(),
                    message: format!(
                        "tensor has {}x{} layers x heads, archive declares {num_layers}x{num_heads}",
                        r.tensor.layers, r.tensor.heads
                    ),
                });
            }
            if index.insert(r.sentence_id.clone(), i).is_some() {
                return Err(Error::InvalidRecord {
                    record: r.sentence_id.clone(),
                    message: "duplicate sentence id".into(),
                });
            }
        }
        Ok(Self {
            model_id: model_id.into(),
            num_layers,
            num_heads,
            cased,
            records,
            index,
        })
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn num_layers(&self) -> usize {
        self.num_layers
    }

    pub fn num_heads(&self) -> usize {
        self.num_heads
    }

    pub fn cased(&self) -> bool {
        self.cased
    }

    pub fn records(&self) -> &[AttentionRecord] {
        &self.records
    }

    pub fn get(&self, sentence_id: &str) -> Option<&AttentionRecord> {
        self.index.get(sentence_id).map(|&i| &self.records[i])
    }

    /// True when every record has a CLS token.
    pub fn has_cls(&self) -> bool {
        !self.records.is_empty() && self.records.iter().all(|r| r.cls_index.is_some())
    }

    /// True when every record has a SEP token.
    pub fn has_sep(&self) -> bool {
        !self.records.is_empty() && self.records.iter().all(|r| r.sep_index.is_some())
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format_version: u32,
    model_id: String,
    num_layers: usize,
    num_heads: usize,
    cased: bool,
    sentences: Vec<ManifestSentence>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestSentence {
    id: String,
    num_tokens: usize,
    num_words: usize,
    token_to_word: Vec<i64>,
    cls_index: Option<usize>,
    sep_index: Option<usize>,
    payload_file: String,
    byte_offset: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sha256: Option<String>,
}

/// Reads and fully validates an archive. Payload paths resolve relative to
/// the manifest's directory.
pub fn read_archive(manifest_path: &Path) -> Result<AttentionArchive> {
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "format_version {} unsupported, expected {FORMAT_VERSION}",
            manifest.format_version
        )));
    }
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let (l, a) = (manifest.num_layers, manifest.num_heads);

    let mut payloads: BTreeMap<&str, Vec<u8>> = BTreeMap::new();
    for entry in &manifest.sentences {
        if !payloads.contains_key(entry.payload_file.as_str()) {
            let path = base.join(&entry.payload_file);
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            payloads.insert(&entry.payload_file, bytes);
        }
    }
    check_tiling(&manifest, &payloads)?;

    let mut records = Vec::with_capacity(manifest.sentences.len());
    for entry in &manifest.sentences {
        let invalid = |message: String| Error::InvalidRecord {
            record: entry.id.clone(),
            message,
        };
        if entry.token_to_word.len() != entry.num_tokens {
            return Err(invalid(format!(
                "token_to_word has {} entries, num_tokens is {}",
                entry.token_to_word.len(),
                entry.num_tokens
            )));
        }
        let roles = entry
            .token_to_word
            .iter()
            .map(|&c| TokenRole::from_code(c))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| invalid("token_to_word codes must be -1 or word indices".into()))?;
        let bytes = &payloads[entry.payload_file.as_str()];
        let len = tensor_bytes(l, a, entry.num_tokens);
        let start = entry.byte_offset as usize;
        let chunk = &bytes[start..start + len];
        if let Some(expected) = &entry.sha256 {
            let actual = hex::encode(Sha256::digest(chunk));
            if !actual.eq_ignore_ascii_case(expected) {
                return Err(invalid(format!(
                    "sha256 mismatch: manifest {expected}, payload {actual}"
                )));
            }
        }
        let data = chunk
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let tensor = AttentionTensor::new(l, a, entry.num_tokens, data)?;
        let record = AttentionRecord::new(
            entry.id.clone(),
            roles,
            entry.cls_index,
            entry.sep_index,
            tensor,
        )?;
        if record.num_words() != entry.num_words {
            return Err(invalid(format!(
                "alignment covers {} words, num_words is {}",
                record.num_words(),
                entry.num_words
            )));
        }
        records.push(record);
    }
    AttentionArchive::new(manifest.model_id, l, a, manifest.cased, records)
}

fn tensor_bytes(l: usize, a: usize, t: usize) -> usize {
    l * a * t * t * 4
}

/// Every payload file must be covered exactly by its sentences' byte ranges.
fn check_tiling(manifest: &Manifest, payloads: &BTreeMap<&str, Vec<u8>>) -> Result<()> {
    let mut by_file: BTreeMap<&str, Vec<(u64, usize, &str)>> = BTreeMap::new();
    for entry in &manifest.sentences {
        let len = tensor_bytes(manifest.num_layers, manifest.num_heads, entry.num_tokens);
        by_file
            .entry(&entry.payload_file)
            .or_default()
            .push((entry.byte_offset, len, &entry.id));
    }
    for (file, mut ranges) in by_file {
        ranges.sort();
        let file_len = payloads[file].len() as u64;
        let mut cursor = 0u64;
        for (offset, len, id) in ranges {
            let invalid = |message: String| Error::InvalidRecord {
                record: id.to_string(),
                message,
            };
            if offset != cursor {
                return Err(invalid(format!(
                    "byte_offset {offset} in {file}: expected {cursor} (payload must be contiguous)"
                )));
            }
            let end = offset + len as u64;
            if end > file_len {
                return Err(invalid(format!(
                    "payload needs {len} bytes at offset {offset}, {file} has only {} left",
                    file_len.saturating_sub(offset)
                )));
            }
            cursor = end;
        }
        if cursor != file_len {
            return Err(Error::Format(format!(
                "{file}: {} trailing bytes not referenced by any sentence",
                file_len - cursor
            )));
        }
    }
    Ok(())
}

/// Writes `archive` as a manifest at `manifest_path` and a single payload
/// file next to it, named after the manifest with a `.bin` extension.
pub fn write_archive(archive: &AttentionArchive, manifest_path: &Path) -> Result<()> {
    let payload_path: PathBuf = manifest_path.with_extension("bin");
    let payload_name = payload_path
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::Invalid(format!("bad manifest path {}", manifest_path.display())))?
        .to_string();

    let total: usize = archive.records.iter().map(|r| r.tensor.byte_len()).sum();
    let mut payload = Vec::with_capacity(total);
    let mut sentences = Vec::with_capacity(archive.records.len());
    for record in &archive.records {
        let offset = payload.len();
        for v in &record.tensor.data {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        sentences.push(ManifestSentence {
            id: record.sentence_id.clone(),
            num_tokens: record.num_tokens(),
            num_words: record.num_words,
            token_to_word: record.token_to_word.iter().map(|r| r.code()).collect(),
            cls_index: record.cls_index,
            sep_index: record.sep_index,
            payload_file: payload_name.clone(),
            byte_offset: offset as u64,
            sha256: Some(hex::encode(Sha256::digest(&payload[offset..]))),
        });
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        model_id: archive.model_id.clone(),
        num_layers: archive.num_layers,
        num_heads: archive.num_heads,
        cased: archive.cased,
        sentences,
    };
    fs::write(&payload_path, &payload).map_err(|e| Error::io(&payload_path, e))?;
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(manifest_path, json + "\n").map_err(|e| Error::io(manifest_path, e))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpecialKind {
    Cls,
    Sep,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GroupRole {
    Word(usize),
    Special(SpecialKind),
}

/// How token-level attention collapses onto words.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationMode {
    /// Sum attention *to* a word's tokens, average attention *from* them.
    /// Keeps rows stochastic.
    #[default]
    Clark,
    /// Average in both directions.
    MeanMean,
}

impl fmt::Display for AggregationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AggregationMode::Clark => "clark",
            AggregationMode::MeanMean => "mean_mean",
        })
    }
}

impl FromStr for AggregationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clark" => Ok(AggregationMode::Clark),
            "mean_mean" => Ok(AggregationMode::MeanMean),
            _ => Err(Error::Invalid(format!("unknown aggregation mode {s:?}"))),
        }
    }
}

/// Square attention map over word groups (words plus special tokens).
#[derive(Debug, Clone, PartialEq)]
pub struct WordLevelMap {
    size: usize,
    data: Vec<f64>,
    roles: Vec<GroupRole>,
    word_groups: Vec<usize>,
}

impl WordLevelMap {
    /// Builds a map directly from group-level values (row-major).
    pub fn from_groups(roles: Vec<GroupRole>, data: Vec<f64>) -> Result<Self> {
        let size = roles.len();
        if data.len() != size * size {
            return Err(Error::Invalid(format!(
                "{} values for a {size}x{size} map",
                data.len()
            )));
        }
        let mut word_groups = vec![usize::MAX; size];
        let mut n = 0;
        for (g, role) in roles.iter().enumerate() {
            if let GroupRole::Word(w) = role {
                if *w >= size || word_groups[*w] != usize::MAX {
                    return Err(Error::Invalid(format!("bad word index {w}")));
                }
                word_groups[*w] = g;
                n += 1;
            }
        }
        word_groups.truncate(n);
        if word_groups.contains(&usize::MAX) {
            return Err(Error::Invalid("word indices are not contiguous".into()));
        }
        Ok(Self {
            size,
            data,
            roles,
            word_groups,
        })
    }

    /// Number of groups, `n + s`.
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn num_words(&self) -> usize {
        self.word_groups.len()
    }

    pub fn num_specials(&self) -> usize {
        self.size - self.word_groups.len()
    }

    pub fn roles(&self) -> &[GroupRole] {
        &self.roles
    }

    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.data[from * self.size + to]
    }

    pub fn row(&self, from: usize) -> &[f64] {
        &self.data[from * self.size..(from + 1) * self.size]
    }

    /// Group index of word `position`.
    pub fn word_group(&self, position: usize) -> usize {
        self.word_groups[position]
    }

    pub fn special_group(&self, kind: SpecialKind) -> Option<usize> {
        self.roles
            .iter()
            .position(|r| *r == GroupRole::Special(kind))
    }
}

/// Collapses one head's token map to word level. `layer` and `head` are
/// 1-based.
pub fn word_level_map(
    record: &AttentionRecord,
    layer: usize,
    head: usize,
    mode: AggregationMode,
) -> Result<WordLevelMap> {
    let tensor = &record.tensor;
    if layer == 0 || layer > tensor.layers {
        return Err(Error::OutOfRange {
            what: "layer",
            value: layer,
            max: tensor.layers,
        });
    }
    if head == 0 || head > tensor.heads {
        return Err(Error::OutOfRange {
            what: "head",
            value: head,
            max: tensor.heads,
        });
    }
    let t = tensor.tokens;
    let slice = tensor.slice(layer - 1, head - 1);
    let groups = &record.groups;
    let g = groups.len();

    // Columns first: T x g.
    let mut cols = vec![0f64; t * g];
    for row in 0..t {
        let src = &slice[row * t..(row + 1) * t];
        let dst = &mut cols[row * g..(row + 1) * g];
        for (gi, range) in groups.iter().enumerate() {
            let sum: f64 = src[range.clone()].iter().map(|&v| f64::from(v)).sum();
            dst[gi] = match mode {
                AggregationMode::Clark => sum,
                AggregationMode::MeanMean => sum / range.len() as f64,
            };
        }
    }
    // Then rows: mean over the tokens of each from-group.
    let mut data = vec![0f64; g * g];
    for (gi, range) in groups.iter().enumerate() {
        let dst = &mut data[gi * g..(gi + 1) * g];
        for row in range.clone() {
            for (d, v) in dst.iter_mut().zip(&cols[row * g..(row + 1) * g]) {
                *d += v;
            }
        }
        let k = range.len() as f64;
        dst.iter_mut().for_each(|d| *d /= k);
    }

    let word_groups = {
        let mut wg = vec![0; record.num_words];
        for (gi, role) in record.roles.iter().enumerate() {
            if let GroupRole::Word(w) = role {
                wg[*w] = gi;
            }
        }
        wg
    };
    Ok(WordLevelMap {
        size: g,
        data,
        roles: record.roles.clone(),
        word_groups,
    })
}
