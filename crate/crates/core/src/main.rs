//! Command-line front-end wiring the library modules into pipelines:
//! decode logits into a raw run, post-process it, append verse
//! recommendations, fuse two runs, and evaluate against gold records.
//!
//! Every subcommand is a pure function of its inputs and flags: identical
//! inputs produce byte-identical outputs.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand};
use serde::Deserialize;

use verseqa::dataset::{
    self, read_qrcd, read_run, read_squad_family, write_records, write_run, QuestionRecord,
    RankedAnswer, RunEntry, Source, RUN_ANSWER_CAP,
};
use verseqa::decoder::{decode_topn, read_logits_file, LogitBundle, SpanPrediction, TokenizedContext};
use verseqa::metrics::evaluate_run;
use verseqa::postprocess::{extend_answer, fuse_runs, merge_overlaps};
use verseqa::qtype::{
    classify_question, compute_type_stats, lookup_avg_length, whitespace_token_count,
    TypeStatsTable, FALLBACK_TYPE,
};
use verseqa::recommend::{
    append_recommendation, load_embeddings, most_similar_verse, verse_span_prediction,
    EmbeddingStore,
};
use verseqa::textnorm::{
    format_fatwa, format_quran, format_tafseer, split_corpus, write_corpus, CorpusBlock,
    NormalizationConfig,
};

const EXIT_VALIDATION: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Debug)]
enum CliError {
    Validation(String),
    Io(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) | CliError::Io(m) => write!(f, "{m}"),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<dataset::DatasetError> for CliError {
    fn from(e: dataset::DatasetError) -> Self {
        match e {
            dataset::DatasetError::Io(io) => CliError::Io(io.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<verseqa::decoder::DecodeError> for CliError {
    fn from(e: verseqa::decoder::DecodeError) -> Self {
        match e {
            verseqa::decoder::DecodeError::Io(io) => CliError::Io(io.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<verseqa::recommend::RecommendError> for CliError {
    fn from(e: verseqa::recommend::RecommendError) -> Self {
        match e {
            verseqa::recommend::RecommendError::Io(io) => CliError::Io(io.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<verseqa::qtype::TypingError> for CliError {
    fn from(e: verseqa::qtype::TypingError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<verseqa::metrics::MetricsError> for CliError {
    fn from(e: verseqa::metrics::MetricsError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<verseqa::textnorm::TextnormError> for CliError {
    fn from(e: verseqa::textnorm::TextnormError) -> Self {
        match e {
            verseqa::textnorm::TextnormError::Io(io) => CliError::Io(io.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

/// Optional JSON config file; CLI flags take precedence over it, it takes
/// precedence over built-in defaults.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    n: Option<usize>,
    max_span_len: Option<usize>,
    cap: Option<usize>,
    seed: Option<u64>,
    train_fraction: Option<f64>,
}

fn load_config(path: Option<&Path>) -> CliResult<ConfigFile> {
    match path {
        None => Ok(ConfigFile::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Validation(format!("config {}: {e}", p.display())))
        }
    }
}

#[derive(Debug, Args)]
struct CommonOpts {
    /// JSON config file (flags > config > defaults)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Parser)]
#[command(name = "verseqa", version, about = "Span decoding, post-processing and evaluation for verse-structured Arabic QA")]
struct Cli {
    #[command(flatten)]
    common: CommonOpts,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decode a logits file into a raw ranked-run file
    Decode {
        #[arg(long)]
        logits: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Answers per question
        #[arg(long)]
        n: Option<usize>,
        #[arg(long = "max-span-len")]
        max_span_len: Option<usize>,
    },
    /// Extend short answers by question type and merge overlaps
    Postprocess {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        logits: PathBuf,
        /// Question-type statistics file (JSON, `stats` output shape)
        #[arg(long)]
        stats: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        cap: Option<usize>,
    },
    /// Append the most similar verse as a last-rank answer
    Recommend {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        logits: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        cap: Option<usize>,
    },
    /// Fuse two runs, removing overlapping answers
    Fuse {
        #[arg(long = "run-a")]
        run_a: PathBuf,
        #[arg(long = "run-b")]
        run_b: PathBuf,
        #[arg(long)]
        logits: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        cap: Option<usize>,
    },
    /// Question-type frequency and answer-length statistics
    Stats {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Harmonize a SQuAD-family file (or re-validate JSON-lines records)
    Convert {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        format: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a run file against gold records
    Evaluate {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also print a one-row CSV summary to stdout
        #[arg(long, action = ArgAction::SetTrue)]
        csv: bool,
    },
    /// Build a pretraining corpus from raw fatwa/tafseer/quran records
    Corpus {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Train fraction for an optional train/validation split
        #[arg(long = "train-fraction")]
        train_fraction: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = true, action = ArgAction::Set)]
        strip_diacritics: bool,
        #[arg(long, default_value_t = true, action = ArgAction::Set)]
        strip_punctuation: bool,
        #[arg(long, default_value_t = true, action = ArgAction::Set)]
        strip_non_arabic: bool,
        #[arg(long, default_value_t = true, action = ArgAction::Set)]
        collapse_whitespace: bool,
    },
    /// decode + postprocess + recommend + evaluate in one shot
    RunAll {
        #[arg(long)]
        logits: PathBuf,
        #[arg(long)]
        stats: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long = "out-dir")]
        out_dir: PathBuf,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long = "max-span-len")]
        max_span_len: Option<usize>,
        #[arg(long)]
        cap: Option<usize>,
    },
}

fn answer_from_span(span: &SpanPrediction) -> RankedAnswer {
    RankedAnswer {
        text: span.text.clone(),
        rank: span.rank,
        score: span.score,
        span: Some((span.start_tok, span.end_tok)),
        recommended: span.recommended,
    }
}

fn span_from_answer(answer: &RankedAnswer, pq_id: &str) -> CliResult<SpanPrediction> {
    let (start_tok, end_tok) = answer.span.ok_or_else(|| {
        CliError::Validation(format!(
            "run entry `{pq_id}` lacks token coordinates; produce it with `decode`"
        ))
    })?;
    Ok(SpanPrediction {
        start_tok,
        end_tok,
        score: answer.score,
        text: answer.text.clone(),
        rank: answer.rank,
        recommended: answer.recommended,
    })
}

fn contexts_by_id(
    logits_path: &Path,
) -> CliResult<BTreeMap<String, (TokenizedContext, LogitBundle)>> {
    let mut map = BTreeMap::new();
    for (ctx, bundle) in read_logits_file(logits_path)? {
        if map.insert(ctx.pq_id.clone(), (ctx, bundle)).is_some() {
            return Err(CliError::Validation(
                "duplicate pq_id in logits file".to_string(),
            ));
        }
    }
    Ok(map)
}

fn cmd_decode(logits: &Path, out: &Path, n: usize, max_span_len: usize) -> CliResult {
    let mut entries = Vec::new();
    for (ctx, bundle) in read_logits_file(logits)? {
        let spans = decode_topn(&ctx, &bundle, n, max_span_len)?;
        entries.push(RunEntry {
            pq_id: ctx.pq_id.clone(),
            answers: spans.iter().map(answer_from_span).collect(),
        });
    }
    entries.sort_by(|a, b| a.pq_id.cmp(&b.pq_id));
    write_run(&entries, out)?;
    Ok(())
}

fn load_stats(path: &Path) -> CliResult<TypeStatsTable> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Validation(format!("stats {}: {e}", path.display())))
}

fn postprocess_entries(
    entries: &[RunEntry],
    contexts: &BTreeMap<String, (TokenizedContext, LogitBundle)>,
    stats: &TypeStatsTable,
    cap: usize,
) -> CliResult<Vec<RunEntry>> {
    let mut out = Vec::new();
    for entry in entries {
        let (ctx, _) = contexts.get(&entry.pq_id).ok_or_else(|| {
            CliError::Validation(format!("pq_id `{}` missing from logits file", entry.pq_id))
        })?;
        let qtype = ctx
            .question
            .as_deref()
            .map(classify_question)
            .unwrap_or(FALLBACK_TYPE);
        let avg_len = lookup_avg_length(qtype, stats)?;
        let spans: Vec<SpanPrediction> = entry
            .answers
            .iter()
            .map(|a| span_from_answer(a, &entry.pq_id))
            .collect::<CliResult<_>>()?;
        let extended: Vec<SpanPrediction> = spans
            .iter()
            .map(|s| extend_answer(s, ctx, avg_len))
            .collect();
        let mut merged = merge_overlaps(&extended, ctx);
        merged.truncate(cap);
        out.push(RunEntry {
            pq_id: entry.pq_id.clone(),
            answers: merged.iter().map(answer_from_span).collect(),
        });
    }
    Ok(out)
}

fn cmd_postprocess(run: &Path, logits: &Path, stats: &Path, out: &Path, cap: usize) -> CliResult {
    let entries = read_run(run)?;
    let contexts = contexts_by_id(logits)?;
    let stats = load_stats(stats)?;
    let processed = postprocess_entries(&entries, &contexts, &stats, cap)?;
    write_run(&processed, out)?;
    Ok(())
}

fn recommend_entries(
    entries: &[RunEntry],
    contexts: &BTreeMap<String, (TokenizedContext, LogitBundle)>,
    store: &EmbeddingStore,
    cap: usize,
) -> CliResult<Vec<RunEntry>> {
    let mut out = Vec::new();
    for entry in entries {
        let (ctx, _) = contexts.get(&entry.pq_id).ok_or_else(|| {
            CliError::Validation(format!("pq_id `{}` missing from logits file", entry.pq_id))
        })?;
        let spans: Vec<SpanPrediction> = entry
            .answers
            .iter()
            .map(|a| span_from_answer(a, &entry.pq_id))
            .collect::<CliResult<_>>()?;
        let question_vec = store.get(&entry.pq_id);
        let verse_vecs = store.verse_vectors(&entry.pq_id);
        let appended = match question_vec {
            // Questions without embeddings pass through unchanged.
            Some(q) if !verse_vecs.is_empty() => {
                let idx = most_similar_verse(q, &verse_vecs)?;
                match verse_span_prediction(ctx, idx) {
                    Some(verse) => append_recommendation(&spans, &verse),
                    None => spans,
                }
            }
            _ => spans,
        };
        let mut answers: Vec<RankedAnswer> =
            appended.iter().map(answer_from_span).collect();
        answers.truncate(cap);
        out.push(RunEntry {
            pq_id: entry.pq_id.clone(),
            answers,
        });
    }
    Ok(out)
}

fn cmd_recommend(run: &Path, logits: &Path, embeddings: &Path, out: &Path, cap: usize) -> CliResult {
    let entries = read_run(run)?;
    let contexts = contexts_by_id(logits)?;
    let store = load_embeddings(embeddings)?;
    let recommended = recommend_entries(&entries, &contexts, &store, cap)?;
    write_run(&recommended, out)?;
    Ok(())
}

fn cmd_fuse(run_a: &Path, run_b: &Path, logits: &Path, out: &Path, cap: usize) -> CliResult {
    let a = read_run(run_a)?;
    let b = read_run(run_b)?;
    let contexts = contexts_by_id(logits)?;
    let by_id = |entries: &[RunEntry]| -> BTreeMap<String, Vec<RankedAnswer>> {
        entries
            .iter()
            .map(|e| (e.pq_id.clone(), e.answers.clone()))
            .collect()
    };
    let map_a = by_id(&a);
    let map_b = by_id(&b);
    let empty: Vec<RankedAnswer> = Vec::new();
    let mut fused_entries = Vec::new();
    let ids: std::collections::BTreeSet<&String> = map_a.keys().chain(map_b.keys()).collect();
    for pq_id in ids {
        let (ctx, _) = contexts.get(pq_id).ok_or_else(|| {
            CliError::Validation(format!("pq_id `{pq_id}` missing from logits file"))
        })?;
        let to_spans = |answers: &Vec<RankedAnswer>| -> CliResult<Vec<SpanPrediction>> {
            answers.iter().map(|x| span_from_answer(x, pq_id)).collect()
        };
        let spans_a = to_spans(map_a.get(pq_id).unwrap_or(&empty))?;
        let spans_b = to_spans(map_b.get(pq_id).unwrap_or(&empty))?;
        let fused = fuse_runs(&spans_a, &spans_b, cap, ctx);
        fused_entries.push(RunEntry {
            pq_id: pq_id.clone(),
            answers: fused.iter().map(answer_from_span).collect(),
        });
    }
    write_run(&fused_entries, out)?;
    Ok(())
}

fn print_stats_table(stats: &TypeStatsTable) {
    println!("{:<14} {:>6} {:>5} {:>5} {:>5}", "type", "N", "min", "avg", "max");
    for row in &stats.rows {
        println!(
            "{:<14} {:>6} {:>5} {:>5} {:>5}",
            format!("{:?}", row.type_id),
            row.count,
            row.min,
            row.avg,
            row.max
        );
    }
}

fn cmd_stats(dataset_path: &Path, out: &Path) -> CliResult {
    let records = read_qrcd(dataset_path)?;
    let stats = compute_type_stats(&records, whitespace_token_count)?;
    let mut json = serde_json::to_string_pretty(&stats).map_err(std::io::Error::from)?;
    json.push('\n');
    std::fs::write(out, json)?;
    print_stats_table(&stats);
    Ok(())
}

fn cmd_convert(input: &Path, format: &str, out: &Path) -> CliResult {
    let records: Vec<QuestionRecord> = match format {
        "qrcd" => read_qrcd(input)?,
        "squad" | "mlqa" | "xquad" => {
            let source = match format {
                "squad" => Source::Squad,
                "mlqa" => Source::Mlqa,
                _ => Source::Xquad,
            };
            let harmonized = read_squad_family(input, source)?;
            println!(
                "dropped {} unanswerable question(s)",
                harmonized.dropped_unanswerable
            );
            harmonized.records
        }
        other => {
            return Err(CliError::Validation(format!(
                "unknown format `{other}` (expected qrcd, squad, mlqa or xquad)"
            )))
        }
    };
    write_records(&records, out)?;
    println!("wrote {} record(s)", records.len());
    Ok(())
}

fn cmd_evaluate(run: &Path, gold: &Path, out: &Path, csv: bool) -> CliResult {
    let entries = read_run(run)?;
    let records = read_qrcd(gold)?;
    let report = evaluate_run(&entries, &records)?;
    let mut json = serde_json::to_string_pretty(&report).map_err(std::io::Error::from)?;
    json.push('\n');
    std::fs::write(out, json)?;
    if csv {
        print!("{}", report.csv_row());
    } else {
        println!(
            "n={} pRR={:.4} EM={:.4} F1@1={:.4} (missing: {})",
            report.n_questions,
            report.aggregate.prr,
            report.aggregate.em,
            report.aggregate.f1_at_1,
            report.missing.len()
        );
    }
    Ok(())
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum RawCorpusRecord {
    Fatwa { question: String, answer: String },
    Tafseer {
        context: String,
        question: String,
        explanation: String,
    },
    Quran { text: String },
}

#[allow(clippy::too_many_arguments)]
fn cmd_corpus(
    input: &Path,
    out: &Path,
    manifest: &Path,
    cfg: NormalizationConfig,
    train_fraction: Option<f64>,
    seed: u64,
) -> CliResult {
    let text = std::fs::read_to_string(input)?;
    let mut blocks: Vec<CorpusBlock> = Vec::new();
    let mut skipped = 0usize;
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawCorpusRecord = serde_json::from_str(line).map_err(|e| {
            CliError::Validation(format!("corpus input line {}: {e}", idx + 1))
        })?;
        let block = match raw {
            RawCorpusRecord::Fatwa { question, answer } => format_fatwa(&question, &answer, &cfg),
            RawCorpusRecord::Tafseer {
                context,
                question,
                explanation,
            } => format_tafseer(&context, &question, &explanation, &cfg),
            RawCorpusRecord::Quran { text } => format_quran(&text, &cfg),
        };
        match block {
            Ok(b) => blocks.push(b),
            // Blocks that normalize to empty are dropped, never emitted.
            Err(verseqa::textnorm::TextnormError::EmptyField(_)) => skipped += 1,
            Err(e) => return Err(e.into()),
        }
    }
    write_corpus(&blocks, out, manifest)?;
    println!("wrote {} block(s), dropped {skipped} empty", blocks.len());
    if let Some(fraction) = train_fraction {
        let (train, val) = split_corpus(&blocks, fraction, seed)?;
        let side = |suffix: &str| {
            let mut p = out.as_os_str().to_owned();
            p.push(suffix);
            PathBuf::from(p)
        };
        write_corpus(&train, &side(".train"), &side(".train.manifest"))?;
        write_corpus(&val, &side(".val"), &side(".val.manifest"))?;
        println!("split: {} train / {} validation", train.len(), val.len());
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_run_all(
    logits: &Path,
    stats: &Path,
    embeddings: &Path,
    gold: &Path,
    out_dir: &Path,
    n: usize,
    max_span_len: usize,
    cap: usize,
) -> CliResult {
    std::fs::create_dir_all(out_dir)?;
    let raw_run = out_dir.join("raw_run.json");
    let post_run = out_dir.join("post_run.json");
    let rec_run = out_dir.join("rec_run.json");
    let report = out_dir.join("report.json");
    cmd_decode(logits, &raw_run, n, max_span_len)?;
    cmd_postprocess(&raw_run, logits, stats, &post_run, cap)?;
    cmd_recommend(&post_run, logits, embeddings, &rec_run, cap)?;
    cmd_evaluate(&rec_run, gold, &report, false)?;
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    let config = load_config(cli.common.config.as_deref())?;
    let pick = |flag: Option<usize>, from_config: Option<usize>, default: usize| {
        flag.or(from_config).unwrap_or(default)
    };
    match cli.command {
        Command::Decode {
            logits,
            out,
            n,
            max_span_len,
        } => cmd_decode(
            &logits,
            &out,
            pick(n, config.n, RUN_ANSWER_CAP),
            pick(max_span_len, config.max_span_len, 64),
        ),
        Command::Postprocess {
            run,
            logits,
            stats,
            out,
            cap,
        } => cmd_postprocess(
            &run,
            &logits,
            &stats,
            &out,
            pick(cap, config.cap, RUN_ANSWER_CAP),
        ),
        Command::Recommend {
            run,
            logits,
            embeddings,
            out,
            cap,
        } => cmd_recommend(
            &run,
            &logits,
            &embeddings,
            &out,
            pick(cap, config.cap, RUN_ANSWER_CAP),
        ),
        Command::Fuse {
            run_a,
            run_b,
            logits,
            out,
            cap,
        } => cmd_fuse(
            &run_a,
            &run_b,
            &logits,
            &out,
            pick(cap, config.cap, RUN_ANSWER_CAP),
        ),
        Command::Stats { dataset, out } => cmd_stats(&dataset, &out),
        Command::Convert { input, format, out } => cmd_convert(&input, &format, &out),
        Command::Evaluate {
            run,
            gold,
            out,
            csv,
        } => cmd_evaluate(&run, &gold, &out, csv),
        Command::Corpus {
            input,
            out,
            manifest,
            train_fraction,
            seed,
            strip_diacritics,
            strip_punctuation,
            strip_non_arabic,
            collapse_whitespace,
        } => cmd_corpus(
            &input,
            &out,
            &manifest,
            NormalizationConfig {
                strip_diacritics,
                strip_punctuation,
                strip_non_arabic,
                collapse_whitespace,
            },
            train_fraction.or(config.train_fraction),
            seed.or(config.seed).unwrap_or(0),
        ),
        Command::RunAll {
            logits,
            stats,
            embeddings,
            gold,
            out_dir,
            n,
            max_span_len,
            cap,
        } => cmd_run_all(
            &logits,
            &stats,
            &embeddings,
            &gold,
            &out_dir,
            pick(n, config.n, RUN_ANSWER_CAP),
            pick(max_span_len, config.max_span_len, 64),
            pick(cap, config.cap, RUN_ANSWER_CAP),
        ),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = writeln!(std::io::stderr(), "error: {e}");
            match e {
                CliError::Validation(_) => ExitCode::from(EXIT_VALIDATION),
                CliError::Io(_) => ExitCode::from(EXIT_IO),
            }
        }
    }
}
