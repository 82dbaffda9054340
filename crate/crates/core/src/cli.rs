// SPDX-License-Identifier: MIT OR Apache-2.0

//! The `attnmark` command line.
//!
//! Exit status is 0 on success, 1 for data errors and 2 for usage errors.
//! `ATTNMARK_THREADS` caps the worker count of `search`.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::attention_store::{read_archive, AggregationMode};
use crate::baselines::{build_train_stats, random_baseline, tfidf_baseline, word_count_baseline};
use crate::corpus::{Corpus, Split, DEFAULT_ANNOTATORS};
use crate::error::Error;
use crate::evaluation::{evaluate_corpus, write_sentence_reports, Granularity, MatchReport};
use crate::head_search::{
    ensemble, grid_search, layerwise_report, write_layerwise_csv, EnsembleMember, EnsembleSpec,
    SearchOptions, SearchResult,
};
use crate::scoring::{read_scores_tsv, write_scores_tsv, Configuration, ScoreVector};

pub const THREADS_ENV: &str = "ATTNMARK_THREADS";

#[derive(Debug, Parser)]
#[command(name = "attnmark", version, about = "Zero-shot word emphasis selection from attention maps")]
struct Cli {
    /// Leave the wall-clock timestamp out of run manifests.
    #[arg(long, global = true)]
    no_timestamp: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Score every (layer, head, method) of one archive and rank them.
    Search {
        #[arg(long)]
        archive: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = ModeArg::Clark)]
        mode: ModeArg,
        /// Configurations listed in best.json.
        #[arg(long, default_value_t = 5)]
        top: usize,
        #[arg(long, default_value_t = DEFAULT_ANNOTATORS)]
        annotators: usize,
    },
    /// Run a statistical baseline over an evaluation corpus.
    Baseline {
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        eval: PathBuf,
        #[arg(long, value_enum)]
        method: BaselineArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Random baseline only: average the report over seeds
        /// `seed..seed+repeats`.
        #[arg(long, default_value_t = 1)]
        repeats: u64,
        #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
        fold_case: bool,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_ANNOTATORS)]
        annotators: usize,
    },
    /// Average the scores of several configurations.
    Ensemble {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_ANNOTATORS)]
        annotators: usize,
    },
    /// Layer-wise CSV of configurations scoring above a floor.
    Report {
        #[arg(long)]
        search_csv: PathBuf,
        #[arg(long, default_value_t = f64::NEG_INFINITY, allow_negative_numbers = true)]
        floor: f64,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a predictions TSV against a labeled corpus.
    Evaluate {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        /// Output directory; the report goes to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_ANNOTATORS)]
        annotators: usize,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Clark,
    MeanMean,
}

impl From<ModeArg> for AggregationMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Clark => AggregationMode::Clark,
            ModeArg::MeanMean => AggregationMode::MeanMean,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BaselineArg {
    Random,
    Count,
    Tfidf,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Data(e)
    }
}

type CliResult<T = ()> = Result<T, CliError>;

/// Everything needed to repeat a run, written next to its outputs.
#[derive(Debug, Serialize)]
struct RunManifest {
    command: &'static str,
    inputs: BTreeMap<&'static str, String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mode: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    normalization: Option<String>,
    flags: BTreeMap<String, String>,
    tool_version: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    timestamp: Option<u64>,
}

impl RunManifest {
    fn new(command: &'static str, with_timestamp: bool) -> Self {
        let timestamp = with_timestamp.then(|| {
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0)
        });
        Self {
            command,
            inputs: BTreeMap::new(),
            seed: None,
            mode: None,
            normalization: None,
            flags: BTreeMap::new(),
            tool_version: env!("CARGO_PKG_VERSION"),
            timestamp,
        }
    }

    fn input(mut self, name: &'static str, path: &Path) -> Self {
        let resolved = fs::canonicalize(path).unwrap_or_else(|_| path.to_path_buf());
        self.inputs.insert(name, resolved.display().to_string());
        self
    }

    fn flag(mut self, name: &'static str, value: impl ToString) -> Self {
        self.flags.insert(name.to_string(), value.to_string());
        self
    }

    fn write(&self, path: &Path) -> CliResult {
        let json = serde_json::to_string_pretty(self).map_err(Error::from)?;
        write_file(path, (json + "\n").as_bytes())
    }
}

/// Runs the CLI on `args` (including the program name) and returns the exit
/// status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("run `attnmark --help` for usage");
            2
        }
        Err(CliError::Data(e)) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn dispatch(cli: Cli) -> CliResult {
    let stamp = !cli.no_timestamp;
    match cli.command {
        Command::Search {
            archive,
            corpus,
            out,
            mode,
            top,
            annotators,
        } => cmd_search(&archive, &corpus, &out, mode.into(), top, annotators, stamp),
        Command::Baseline {
            train,
            eval,
            method,
            seed,
            repeats,
            fold_case,
            out,
            annotators,
        } => cmd_baseline(
            train.as_deref(),
            &eval,
            method,
            seed,
            repeats,
            fold_case,
            &out,
            annotators,
            stamp,
        ),
        Command::Ensemble {
            spec,
            corpus,
            out,
            annotators,
        } => cmd_ensemble(&spec, &corpus, &out, annotators, stamp),
        Command::Report {
            search_csv,
            floor,
            out,
        } => cmd_report(&search_csv, floor, out.as_deref(), stamp),
        Command::Evaluate {
            corpus,
            predictions,
            out,
            annotators,
        } => cmd_evaluate(&corpus, &predictions, out.as_deref(), annotators, stamp),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult {
    fs::write(path, bytes).map_err(|e| CliError::Data(Error::io(path, e)))
}

fn ensure_dir(dir: &Path) -> CliResult {
    fs::create_dir_all(dir).map_err(|e| CliError::Data(Error::io(dir, e)))
}

fn threads_from_env() -> CliResult<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(0) | Err(_) => Err(CliError::Usage(format!(
                "{THREADS_ENV} must be a positive integer, got {v:?}"
            ))),
            Ok(n) => Ok(Some(n)),
        },
    }
}

fn report_bytes(report: &MatchReport) -> Vec<u8> {
    let mut buf = Vec::new();
    report.write_tsv(&mut buf).expect("write to memory");
    buf
}

#[derive(Serialize)]
struct BestEntry {
    rank: usize,
    layer: usize,
    head: usize,
    method: String,
    mode: String,
    matches: [f64; 4],
    ranking_score: f64,
}

#[derive(Serialize)]
struct BestFile {
    model_id: String,
    configurations: usize,
    top: Vec<BestEntry>,
}

fn cmd_search(
    archive_path: &Path,
    corpus_path: &Path,
    out: &Path,
    mode: AggregationMode,
    top: usize,
    annotators: usize,
    stamp: bool,
) -> CliResult {
    let corpus = Corpus::read_path(corpus_path, annotators, Split::Other)?;
    if !corpus.is_labeled() {
        return Err(Error::Unlabeled.into());
    }
    let archive = read_archive(archive_path)?;
    let options = SearchOptions {
        mode,
        threads: threads_from_env()?,
    };
    let result = grid_search(&archive, &corpus, &options)?;

    ensure_dir(out)?;
    let mut csv = Vec::new();
    result.write_csv(&mut csv)?;
    write_file(&out.join("search.csv"), &csv)?;

    let best = BestFile {
        model_id: archive.model_id().to_string(),
        configurations: result.len(),
        top: result
            .entries
            .iter()
            .take(top)
            .enumerate()
            .map(|(i, (c, r))| BestEntry {
                rank: i + 1,
                layer: c.layer,
                head: c.head,
                method: c.method.to_string(),
                mode: c.mode.to_string(),
                matches: r.matches,
                ranking_score: r.ranking_score,
            })
            .collect(),
    };
    let json = serde_json::to_string_pretty(&best).map_err(Error::from)?;
    write_file(&out.join("best.json"), (json + "\n").as_bytes())?;

    let mut manifest = RunManifest::new("search", stamp)
        .input("archive", archive_path)
        .input("corpus", corpus_path)
        .flag("top", top)
        .flag("annotators", annotators);
    manifest.mode = Some(mode.to_string());
    manifest.write(&out.join("manifest.json"))?;

    if let Some((c, r)) = result.entries.first() {
        eprintln!(
            "{} configurations; best {c}: ranking score {}",
            result.len(),
            crate::fmt::round_half_up(r.ranking_score, 4)
        );
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_baseline(
    train_path: Option<&Path>,
    eval_path: &Path,
    method: BaselineArg,
    seed: u64,
    repeats: u64,
    fold_case: bool,
    out: &Path,
    annotators: usize,
    stamp: bool,
) -> CliResult {
    if method != BaselineArg::Random && train_path.is_none() {
        return Err(CliError::Usage(format!(
            "--method {} requires --train",
            method.to_possible_value().expect("value").get_name()
        )));
    }
    if repeats == 0 {
        return Err(CliError::Usage("--repeats must be at least 1".into()));
    }
    let eval = Corpus::read_path(eval_path, annotators, Split::Dev)?;
    let predictions: Vec<ScoreVector> = match method {
        BaselineArg::Random => eval.sentences().iter().map(|s| random_baseline(s, seed)).collect(),
        BaselineArg::Count | BaselineArg::Tfidf => {
            let path = train_path.expect("checked above");
            let train = Corpus::read_path(path, annotators, Split::Train)?;
            let stats = build_train_stats(&train, fold_case)?;
            eval.sentences()
                .iter()
                .map(|s| match method {
                    BaselineArg::Count => word_count_baseline(s, &stats),
                    _ => tfidf_baseline(s, &stats),
                })
                .collect()
        }
    };

    ensure_dir(out)?;
    let mut preds = Vec::new();
    write_scores_tsv(&mut preds, &eval, &predictions)?;
    write_file(&out.join("predictions.tsv"), &preds)?;

    if eval.is_labeled() {
        let report = if method == BaselineArg::Random && repeats > 1 {
            averaged_random_report(&eval, seed, repeats)?
        } else {
            evaluate_corpus(&eval, &predictions)?
        };
        write_file(&out.join("report.tsv"), &report_bytes(&report))?;
        let mut sentences = Vec::new();
        write_sentence_reports(&mut sentences, &eval, &predictions)?;
        write_file(&out.join("sentences.tsv"), &sentences)?;
        std::io::stdout()
            .write_all(&report_bytes(&report))
            .map_err(|e| CliError::Data(Error::io("<stdout>", e)))?;
    }

    let name = method.to_possible_value().expect("value").get_name().to_string();
    let mut manifest = RunManifest::new("baseline", stamp)
        .input("eval", eval_path)
        .flag("method", name)
        .flag("fold_case", fold_case)
        .flag("repeats", repeats)
        .flag("annotators", annotators);
    if let Some(p) = train_path {
        manifest = manifest.input("train", p);
    }
    manifest.seed = Some(seed);
    manifest.write(&out.join("manifest.json"))?;
    Ok(())
}

/// Mean of corpus reports over seeds `seed..seed + repeats`.
fn averaged_random_report(eval: &Corpus, seed: u64, repeats: u64) -> CliResult<MatchReport> {
    let mut sums = [0f64; 4];
    let mut sentences = 0;
    for k in 0..repeats {
        let s = seed.wrapping_add(k);
        let preds: Vec<ScoreVector> = eval.sentences().iter().map(|x| random_baseline(x, s)).collect();
        let report = evaluate_corpus(eval, &preds)?;
        sentences = report.sentences;
        for (acc, v) in sums.iter_mut().zip(report.matches) {
            *acc += v;
        }
    }
    let matches = sums.map(|s| s / repeats as f64);
    Ok(MatchReport {
        matches,
        ranking_score: crate::evaluation::ranking_score(matches),
        granularity: Granularity::Corpus,
        sentences,
    })
}

fn cmd_ensemble(
    spec_path: &Path,
    corpus_path: &Path,
    out: &Path,
    annotators: usize,
    stamp: bool,
) -> CliResult {
    let text = fs::read_to_string(spec_path).map_err(|e| CliError::Data(Error::io(spec_path, e)))?;
    if text.trim().is_empty() {
        return Err(CliError::Usage(format!(
            "ensemble spec {} is empty",
            spec_path.display()
        )));
    }
    let spec = EnsembleSpec::from_json(&text).map_err(|e| CliError::Usage(format!(
        "invalid ensemble spec {}: {e}",
        spec_path.display()
    )))?;
    let corpus = Corpus::read_path(corpus_path, annotators, Split::Other)?;

    let base = spec_path.parent().unwrap_or_else(|| Path::new("."));
    let paths = spec.archive_paths(base);
    let mut archives = Vec::with_capacity(paths.len());
    for path in &paths {
        let archive = read_archive(path).map_err(|e| {
            Error::Invalid(format!("ensemble member {}: {e}", path.display()))
        })?;
        archives.push(archive);
    }
    let members: Vec<EnsembleMember<'_>> = spec
        .members
        .iter()
        .zip(&archives)
        .map(|(m, archive)| EnsembleMember {
            archive,
            config: Configuration::new(archive.model_id(), m.layer, m.head, m.method)
                .with_mode(spec.mode),
        })
        .collect();
    let predictions = ensemble(&members, spec.normalization, &corpus)?;

    ensure_dir(out)?;
    let mut preds = Vec::new();
    write_scores_tsv(&mut preds, &corpus, &predictions)?;
    write_file(&out.join("predictions.tsv"), &preds)?;
    if corpus.is_labeled() {
        let report = evaluate_corpus(&corpus, &predictions)?;
        write_file(&out.join("report.tsv"), &report_bytes(&report))?;
        let mut sentences = Vec::new();
        write_sentence_reports(&mut sentences, &corpus, &predictions)?;
        write_file(&out.join("sentences.tsv"), &sentences)?;
        std::io::stdout()
            .write_all(&report_bytes(&report))
            .map_err(|e| CliError::Data(Error::io("<stdout>", e)))?;
    }

    let mut manifest = RunManifest::new("ensemble", stamp)
        .input("spec", spec_path)
        .input("corpus", corpus_path)
        .flag("annotators", annotators);
    for (i, p) in paths.iter().enumerate() {
        let resolved = fs::canonicalize(p).unwrap_or_else(|_| p.clone());
        manifest
            .flags
            .insert(format!("member{i}"), resolved.display().to_string());
    }
    manifest.mode = Some(spec.mode.to_string());
    manifest.normalization = Some(spec.normalization.to_string());
    manifest.write(&out.join("manifest.json"))?;
    Ok(())
}

fn cmd_report(search_csv: &Path, floor: f64, out: Option<&Path>, stamp: bool) -> CliResult {
    if floor.is_nan() {
        return Err(CliError::Usage("--floor must be a number".into()));
    }
    let file = fs::File::open(search_csv).map_err(|e| CliError::Data(Error::io(search_csv, e)))?;
    let result = SearchResult::read_csv(std::io::BufReader::new(file))?;
    let points = layerwise_report(&result, floor);
    let mut buf = Vec::new();
    write_layerwise_csv(&mut buf, &points).expect("write to memory");
    match out {
        Some(path) => {
            write_file(path, &buf)?;
            let mut manifest_path = path.as_os_str().to_owned();
            manifest_path.push(".manifest.json");
            RunManifest::new("report", stamp)
                .input("search_csv", search_csv)
                .flag("floor", floor)
                .write(Path::new(&manifest_path))?;
        }
        None => std::io::stdout()
            .write_all(&buf)
            .map_err(|e| CliError::Data(Error::io("<stdout>", e)))?,
    }
    Ok(())
}

fn cmd_evaluate(
    corpus_path: &Path,
    predictions_path: &Path,
    out: Option<&Path>,
    annotators: usize,
    stamp: bool,
) -> CliResult {
    let corpus = Corpus::read_path(corpus_path, annotators, Split::Other)?;
    let file = fs::File::open(predictions_path)
        .map_err(|e| CliError::Data(Error::io(predictions_path, e)))?;
    let predictions = read_scores_tsv(std::io::BufReader::new(file))?;
    let report = evaluate_corpus(&corpus, &predictions)?;
    let bytes = report_bytes(&report);
    match out {
        Some(dir) => {
            ensure_dir(dir)?;
            write_file(&dir.join("report.tsv"), &bytes)?;
            let mut sentences = Vec::new();
            write_sentence_reports(&mut sentences, &corpus, &predictions)?;
            write_file(&dir.join("sentences.tsv"), &sentences)?;
            RunManifest::new("evaluate", stamp)
                .input("corpus", corpus_path)
                .input("predictions", predictions_path)
                .flag("annotators", annotators)
                .write(&dir.join("manifest.json"))?;
        }
        None => std::io::stdout()
            .write_all(&bytes)
            .map_err(|e| CliError::Data(Error::io("<stdout>", e)))?,
    }
    Ok(())
}
