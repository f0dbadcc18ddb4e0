//! The `posr` command line.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use posr_core::analysis::{insertion_language_compare, quartile_language_compare, talk_time};
use posr_core::metrics::{cost_per_100, evaluate, Price, PriceTable, TokenUsage};
use posr_core::model::{spans_to_labeling, GapPolicy, Labeling, Session};
use posr_core::retrieval::{Method, RetrieverConfig, TopKNorm};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::agreement::{boundary_matrix, cochran_q};
use crate::experiment::{
    accuracy_by_transcript, calibrate, link_segments, predict_segmentations, retrieval_on_gold, segmentation_rows,
    ExternalScores, SegmentationMethod,
};
use crate::io::{
    import_bundled, load_corpus, load_spans, read_json, save_spans, write_corpus, write_json, Corpus, Split,
};
use crate::llm::{
    run_posr_llm, run_retrieval_llm, run_segmentation_llm, CallSettings, Cassette, CassetteClient, ChatClient,
    HttpClient, LlmConfig, LlmRun, PosrMode, RateLimited, RetryingClient, RunStatus,
};
use crate::report::{summarize, write_csv, RunManifest, SummaryRow};
use crate::stats::corpus_stats;
use crate::synth::{generate_synthetic, SyntheticSpec};

#[derive(Debug, Parser)]
#[command(
    name = "posr",
    version,
    about = "Problem-oriented segmentation and retrieval for tutoring transcripts"
)]
pub struct Cli {
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a seeded synthetic corpus with train and test manifests.
    GenCorpus(GenCorpusArgs),
    /// Segment transcripts and score the segmentations.
    Segment(SegmentArgs),
    /// Link annotated segments to problems and report accuracy.
    Retrieve(RetrieveArgs),
    /// Cross-validate retrieval thresholds on a training split.
    Calibrate(CalibrateArgs),
    /// Segment and link, then report every metric.
    Posr(PosrArgs),
    /// Talk time, log-odds comparisons and annotator agreement.
    Analyze(AnalyzeArgs),
    /// Corpus summary statistics.
    Stats(StatsArgs),
    /// Converts a bundled JSON-lines dump into the canonical corpus layout.
    Import(ImportArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct GenCorpusArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 20)]
    pub transcripts: usize,
    #[arg(long, default_value_t = 16)]
    pub problems: usize,
    #[arg(long, default_value_t = 0.0)]
    pub vocab_overlap: f64,
    #[arg(long, default_value_t = 0.2)]
    pub null_fraction: f64,
    #[arg(long, default_value_t = 3)]
    pub min_lines: usize,
    #[arg(long, default_value_t = 20)]
    pub max_lines: usize,
    #[arg(long, default_value_t = 4)]
    pub min_segments: usize,
    #[arg(long, default_value_t = 12)]
    pub max_segments: usize,
    /// Share of transcripts placed in the training split.
    #[arg(long, default_value_t = 0.1)]
    pub train_fraction: f64,
}

#[derive(Debug, Args, Serialize, Clone, Default)]
pub struct LlmArgs {
    /// Endpoint settings (JSON).
    #[arg(long)]
    pub llm_config: Option<PathBuf>,
    /// Model name; defaults to the one in the endpoint settings.
    #[arg(long)]
    pub model: Option<String>,
    /// Record/replay file of model responses.
    #[arg(long)]
    pub cassette: Option<PathBuf>,
    /// Call the endpoint on cassette misses and save the responses.
    #[arg(long)]
    pub record: bool,
    /// Price table (JSON): model -> {input_usd_per_1k, output_usd_per_1k}.
    #[arg(long)]
    pub prices: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize, Clone, Default)]
pub struct RetrievalArgs {
    /// Fixed decision threshold.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Calibrated thresholds (JSON method -> threshold).
    #[arg(long)]
    pub thresholds: Option<PathBuf>,
    /// External score files `<transcript id>.jsonl`.
    #[arg(long)]
    pub scores_dir: Option<PathBuf>,
    /// Top-10 normalization.
    #[arg(long, value_enum)]
    pub norm: Option<NormArg>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, PartialEq, Eq)]
pub enum NormArg {
    Minmax,
    Sum,
    None,
}

#[derive(Debug, Args, Serialize)]
pub struct SegmentArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// texttiling, top10, top20, boundary-words, per-line, whole, gold, spans or llm.
    #[arg(long)]
    pub method: String,
    /// Boundary-word count for `boundary-words`.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub train_manifest: Option<PathBuf>,
    #[arg(long)]
    pub spans_dir: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub llm: LlmArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct RetrieveArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// jaccard, tfidf, bm25, external or llm.
    #[arg(long)]
    pub method: String,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub retrieval: RetrievalArgs,
    #[command(flatten)]
    pub llm: LlmArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct CalibrateArgs {
    /// Training manifest.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Comma-separated methods, or `all` for the lexical scorers.
    #[arg(long, default_value = "all")]
    pub method: String,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub scores_dir: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub norm: Option<NormArg>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct PosrArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// `SEGMENTER+RETRIEVER` (e.g. `texttiling+jaccard`, `llm+llm`), a
    /// segmenter alone when it already carries links (`gold`, `spans`), or
    /// `llm-joint`.
    #[arg(long)]
    pub method: String,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub train_manifest: Option<PathBuf>,
    #[arg(long)]
    pub spans_dir: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub retrieval: RetrievalArgs,
    #[command(flatten)]
    pub llm: LlmArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Predicted span files; gold labelings are used when absent.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// Problems to contrast long and short segments for (repeatable).
    #[arg(long)]
    pub problem: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct ImportArgs {
    /// One `{transcript_id, worksheet, lines}` record per line.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitArg {
    Train,
    Test,
}

#[derive(Debug, Args, Serialize)]
pub struct StatsArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenCorpus(a) => gen_corpus(&a),
        Command::Segment(a) => segment(&a),
        Command::Retrieve(a) => retrieve(&a),
        Command::Calibrate(a) => calibrate_cmd(&a),
        Command::Posr(a) => posr(&a),
        Command::Analyze(a) => analyze(&a),
        Command::Stats(a) => stats(&a),
        Command::Import(a) => import(&a),
    }
}

fn config_json<T: Serialize>(args: &T) -> serde_json::Value {
    serde_json::to_value(args).expect("arguments serialize")
}

fn load(manifest: &Path) -> Result<Corpus> {
    let corpus = load_corpus(manifest).with_context(|| format!("loading {}", manifest.display()))?;
    if corpus.sessions.is_empty() {
        bail!("{} lists no transcripts", manifest.display());
    }
    Ok(corpus)
}

fn gen_corpus(a: &GenCorpusArgs) -> Result<()> {
    let spec = SyntheticSpec {
        n_transcripts: a.transcripts,
        lines_per_segment: (a.min_lines, a.max_lines),
        segments_per_transcript: (a.min_segments, a.max_segments),
        n_problems: a.problems,
        vocab_overlap: a.vocab_overlap,
        null_fraction: a.null_fraction,
        seed: a.seed,
    };
    if !(0.0..=1.0).contains(&a.train_fraction) {
        bail!("--train-fraction must lie in [0, 1]");
    }
    let corpus = generate_synthetic(&spec)?;
    let n = corpus.sessions.len();
    let mut n_train = (a.train_fraction * n as f64).round() as usize;
    if a.train_fraction > 0.0 && n > 1 {
        n_train = n_train.clamp(1, n - 1);
    }
    let (train, test) = corpus.sessions.split_at(n_train.min(n));
    let mut run = RunManifest::new("gen-corpus", a.seed, config_json(a));
    for (name, sessions, split) in [("train", train, Split::Train), ("test", test, Split::Test)] {
        let dir = a.out.join(name);
        let manifest = write_corpus(&dir, sessions, split)?;
        manifest.save(&dir.join("manifest.json"))?;
        run.outputs.push(format!("{name}/manifest.json"));
    }
    write_json(&a.out.join("spec.json"), &spec)?;
    run.outputs.push("spec.json".into());
    run.save(&a.out)?;
    println!(
        "wrote {} train and {} test transcripts to {}",
        train.len(),
        test.len(),
        a.out.display()
    );
    Ok(())
}

/// Client stack from the command line, plus the cassette to save afterwards.
struct LlmSetup {
    client: Arc<dyn ChatClient>,
    settings: CallSettings,
    recorder: Option<(Arc<CassetteClient>, PathBuf)>,
}

impl LlmSetup {
    fn from_args(args: &LlmArgs) -> Result<Self> {
        let config: Option<LlmConfig> = args
            .llm_config
            .as_deref()
            .map(read_json)
            .transpose()
            .context("reading --llm-config")?;
        let model = args
            .model
            .clone()
            .or_else(|| config.as_ref().map(|c| c.model.clone()))
            .ok_or_else(|| anyhow!("LLM methods need --model or --llm-config"))?;
        let mut settings = CallSettings::new(model);
        if let Some(c) = &config {
            settings.max_tokens = c.max_tokens;
            settings.temperature = c.temperature;
        }
        let upstream = config
            .as_ref()
            .map(|c| -> Result<Arc<dyn ChatClient>> {
                let http = HttpClient::from_config(c)?;
                Ok(match c.requests_per_minute {
                    Some(rpm) => Arc::new(RetryingClient::new(RateLimited::per_minute(http, rpm))),
                    None => Arc::new(RetryingClient::new(http)),
                })
            })
            .transpose()?;
        match (&args.cassette, upstream) {
            (Some(path), upstream) => {
                let existing = if path.exists() {
                    Cassette::load(path)?
                } else if args.record {
                    Cassette::default()
                } else {
                    bail!("cassette {} does not exist", path.display());
                };
                if args.record {
                    let up = upstream.ok_or_else(|| anyhow!("--record needs --llm-config"))?;
                    let rec = Arc::new(CassetteClient::record(existing, Box::new(up)));
                    Ok(Self {
                        client: rec.clone(),
                        settings,
                        recorder: Some((rec, path.clone())),
                    })
                } else {
                    Ok(Self {
                        client: Arc::new(CassetteClient::replay(existing)),
                        settings,
                        recorder: None,
                    })
                }
            }
            (None, Some(up)) => Ok(Self {
                client: up,
                settings,
                recorder: None,
            }),
            (None, None) => bail!("LLM methods need --llm-config or --cassette"),
        }
    }

    fn finish(&self) -> Result<()> {
        if let Some((rec, path)) = &self.recorder {
            rec.snapshot().save(path)?;
        }
        Ok(())
    }
}

fn load_prices(path: &Path) -> Result<PriceTable> {
    #[derive(Deserialize)]
    struct Entry {
        input_usd_per_1k: f64,
        output_usd_per_1k: f64,
    }
    let raw: BTreeMap<String, Entry> = read_json(path)?;
    Ok(PriceTable {
        models: raw
            .into_iter()
            .map(|(k, e)| {
                (
                    k,
                    Price {
                        input_usd_per_1k: e.input_usd_per_1k,
                        output_usd_per_1k: e.output_usd_per_1k,
                    },
                )
            })
            .collect(),
    })
}

fn flag_runs(run: &mut RunManifest, ids: impl Iterator<Item = String>, runs: &[&LlmRun]) {
    for (id, r) in ids.zip(runs) {
        if r.status.is_flagged() {
            run.flagged.push(format!("{id}: {}", describe(&r.status)));
        }
    }
}

fn describe(status: &RunStatus) -> String {
    match status {
        RunStatus::Ok => "ok".into(),
        RunStatus::ParseFallback(f) => format!("parse fallback ({})", f.join("; ")),
        RunStatus::Failed(e) => format!("failed ({e})"),
    }
}

fn write_predictions(dir: &Path, sessions: &[Session], labelings: &[Labeling]) -> Result<()> {
    for (s, l) in sessions.iter().zip(labelings) {
        save_spans(&dir.join(format!("{}.json", s.transcript.id())), &l.spans())?;
    }
    Ok(())
}

fn segment(a: &SegmentArgs) -> Result<()> {
    let corpus = load(&a.manifest)?;
    let mut run = RunManifest::new("segment", a.seed, config_json(a));
    let labelings = if a.method.eq_ignore_ascii_case("llm") {
        let llm = LlmSetup::from_args(&a.llm)?;
        let runs: Vec<LlmRun> = corpus
            .sessions
            .par_iter()
            .map(|s| run_segmentation_llm(&*llm.client, &llm.settings, &s.transcript))
            .collect();
        llm.finish()?;
        flag_runs(
            &mut run,
            corpus.sessions.iter().map(|s| s.transcript.id().to_string()),
            &runs.iter().collect::<Vec<_>>(),
        );
        runs.into_iter().map(|r| r.labeling).collect()
    } else {
        let method = SegmentationMethod::parse(&a.method, a.k, a.spans_dir.as_deref())?;
        let train = match &a.train_manifest {
            Some(p) => Some(load(p)?),
            None => None,
        };
        let (l, warnings) =
            predict_segmentations(&method, &corpus.sessions, train.as_ref().map(|c| c.sessions.as_slice()))?;
        run.warnings.extend(warnings);
        l
    };
    let labelings: Vec<Labeling> = labelings.iter().map(Labeling::without_references).collect();
    write_predictions(&a.out.join("predictions"), &corpus.sessions, &labelings)?;
    run.outputs.push("predictions/".into());
    if corpus.is_annotated() {
        let rows = segmentation_rows(&corpus.sessions, &labelings)?;
        write_csv(&a.out.join("segmentation.csv"), &rows)?;
        let col = |f: fn(&crate::experiment::SegmentationRow) -> f64| rows.iter().map(f).collect::<Vec<_>>();
        let summary = summarize(
            &a.method,
            &[
                ("line_pk", col(|r| r.line_pk)),
                ("time_pk", col(|r| r.time_pk)),
                ("line_wd", col(|r| r.line_wd)),
                ("time_wd", col(|r| r.time_wd)),
                ("seg_count_diff", col(|r| r.seg_count_diff as f64)),
            ],
        );
        write_csv(&a.out.join("summary.csv"), &summary)?;
        print_summary(&summary);
        run.outputs.extend(["segmentation.csv".into(), "summary.csv".into()]);
    } else {
        log::warn!("corpus has no annotations; metrics skipped");
        run.warnings.push("no annotations; metrics skipped".into());
    }
    run.save(&a.out)?;
    Ok(())
}

fn norm_of(norm: Option<NormArg>, config: &mut RetrieverConfig) {
    match norm {
        Some(NormArg::Minmax) => {
            config.normalize_top10 = true;
            config.normalization = TopKNorm::MinMax;
        }
        Some(NormArg::Sum) => {
            config.normalize_top10 = true;
            config.normalization = TopKNorm::Sum;
        }
        Some(NormArg::None) => config.normalize_top10 = false,
        None => {}
    }
}

fn retriever(method: Method, args: &RetrievalArgs) -> Result<RetrieverConfig> {
    let mut config = RetrieverConfig::new(method);
    norm_of(args.norm, &mut config);
    if let Some(path) = &args.thresholds {
        let table: BTreeMap<String, f64> = read_json(path)?;
        let t = table
            .iter()
            .find(|(k, _)| Method::from_name(k) == Some(method))
            .map(|(_, t)| *t)
            .ok_or_else(|| anyhow!("{} has no threshold for {}", path.display(), method.name()))?;
        config.threshold = t;
    }
    if let Some(t) = args.threshold {
        config.threshold = t;
    }
    if !(0.0..=1.0).contains(&config.threshold) {
        bail!("threshold {} outside [0, 1]", config.threshold);
    }
    Ok(config)
}

fn parse_method(name: &str) -> Result<Method> {
    Method::from_name(name).ok_or_else(|| anyhow!("unknown retrieval method {name:?}"))
}

fn external_scores(method: Method, dir: Option<&Path>, sessions: &[Session]) -> Result<Option<ExternalScores>> {
    match (method, dir) {
        (Method::External, None) => bail!("the external method needs --scores-dir"),
        (_, Some(d)) => Ok(Some(ExternalScores::load(d, sessions)?)),
        _ => Ok(None),
    }
}

#[derive(Serialize)]
struct AccuracyRow {
    transcript_id: String,
    accuracy: f64,
}

fn retrieve(a: &RetrieveArgs) -> Result<()> {
    let corpus = load(&a.manifest)?;
    if !corpus.is_annotated() {
        bail!("retrieval evaluation needs annotated segments for every transcript");
    }
    let mut run = RunManifest::new("retrieve", a.seed, config_json(a));
    let rows = if a.method.eq_ignore_ascii_case("llm") {
        let llm = LlmSetup::from_args(&a.llm)?;
        let runs: Vec<LlmRun> = corpus
            .sessions
            .par_iter()
            .map(|s| {
                let gold = s.gold.as_ref().expect("checked annotated");
                run_retrieval_llm(
                    &*llm.client,
                    &llm.settings,
                    &s.transcript,
                    &gold.without_references(),
                    &s.worksheet,
                )
            })
            .collect();
        llm.finish()?;
        flag_runs(
            &mut run,
            corpus.sessions.iter().map(|s| s.transcript.id().to_string()),
            &runs.iter().collect::<Vec<_>>(),
        );
        let mut rows = Vec::new();
        for (s, r) in corpus.sessions.iter().zip(&runs) {
            let gold = s.gold.as_ref().expect("checked annotated");
            for (i, span) in gold.spans().into_iter().enumerate() {
                let p = r.labeling.reference(span.start_line);
                rows.push(crate::experiment::DecisionRow {
                    transcript_id: s.transcript.id().to_string(),
                    segment: i,
                    start_line: span.start_line,
                    end_line: span.end_line,
                    gold: span.reference.to_string(),
                    predicted: p.to_string(),
                    correct: *p == span.reference,
                });
            }
        }
        rows
    } else {
        let method = parse_method(&a.method)?;
        let config = retriever(method, &a.retrieval)?;
        let ext = external_scores(method, a.retrieval.scores_dir.as_deref(), &corpus.sessions)?;
        run.config["effective_threshold"] = json!(config.threshold);
        retrieval_on_gold(&config, ext.as_ref(), &corpus.sessions)?
    };
    write_csv(&a.out.join("decisions.csv"), &rows)?;
    let acc: Vec<AccuracyRow> = accuracy_by_transcript(&rows)
        .into_iter()
        .map(|(transcript_id, accuracy)| AccuracyRow {
            transcript_id,
            accuracy,
        })
        .collect();
    write_csv(&a.out.join("accuracy.csv"), &acc)?;
    let summary = summarize(&a.method, &[("accuracy", acc.iter().map(|r| r.accuracy).collect())]);
    write_csv(&a.out.join("summary.csv"), &summary)?;
    print_summary(&summary);
    run.outputs
        .extend(["decisions.csv".into(), "accuracy.csv".into(), "summary.csv".into()]);
    run.save(&a.out)?;
    Ok(())
}

#[derive(Serialize)]
struct CalibrationRecord {
    threshold: f64,
    per_fold: Vec<f64>,
    folds: usize,
    warnings: Vec<String>,
}

fn calibrate_cmd(a: &CalibrateArgs) -> Result<()> {
    let corpus = load(&a.manifest)?;
    if a.folds == 0 {
        bail!("--folds must be positive");
    }
    let methods: Vec<Method> = if a.method.eq_ignore_ascii_case("all") {
        let mut m = vec![Method::Jaccard, Method::TfIdf, Method::Bm25];
        if a.scores_dir.is_some() {
            m.push(Method::External);
        }
        m
    } else {
        a.method
            .split(',')
            .map(|m| parse_method(m.trim()))
            .collect::<Result<_>>()?
    };
    let mut run = RunManifest::new("calibrate", a.seed, config_json(a));
    let mut thresholds = BTreeMap::new();
    let mut details = BTreeMap::new();
    for method in methods {
        let mut config = RetrieverConfig::new(method);
        norm_of(a.norm, &mut config);
        let ext = external_scores(method, a.scores_dir.as_deref(), &corpus.sessions)?;
        let cal = calibrate(&config, ext.as_ref(), &corpus.sessions, a.folds, a.seed)?;
        for w in &cal.warnings {
            log::warn!("{}: {w}", method.name());
        }
        run.warnings
            .extend(cal.warnings.iter().map(|w| format!("{}: {w}", method.name())));
        println!("{:<10} {:.4}", method.name(), cal.threshold);
        thresholds.insert(method.name().to_string(), cal.threshold);
        details.insert(
            method.name().to_string(),
            CalibrationRecord {
                threshold: cal.threshold,
                per_fold: cal.per_fold,
                folds: cal.folds,
                warnings: cal.warnings,
            },
        );
    }
    write_json(&a.out.join("thresholds.json"), &thresholds)?;
    write_json(&a.out.join("calibration.json"), &details)?;
    run.outputs
        .extend(["thresholds.json".into(), "calibration.json".into()]);
    run.save(&a.out)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
enum SegChoice {
    Classic(SegmentationMethod),
    Llm,
}

#[derive(Debug, Clone, PartialEq)]
enum RetChoice {
    Scorer(Method),
    Llm,
    Keep,
}

#[derive(Debug, Clone, PartialEq)]
enum PosrPlan {
    Joint,
    Pipeline(SegChoice, RetChoice),
}

fn parse_plan(a: &PosrArgs) -> Result<PosrPlan> {
    let lower = a.method.to_ascii_lowercase();
    if matches!(lower.as_str(), "llm-joint" | "joint") {
        return Ok(PosrPlan::Joint);
    }
    let (seg, ret) = match lower.split_once('+') {
        Some((s, r)) => (s.trim(), Some(r.trim())),
        None => (lower.as_str(), None),
    };
    let seg = if seg == "llm" {
        SegChoice::Llm
    } else {
        SegChoice::Classic(SegmentationMethod::parse(seg, a.k, a.spans_dir.as_deref())?)
    };
    let ret = match ret {
        Some("llm") => RetChoice::Llm,
        Some(r) => RetChoice::Scorer(parse_method(r)?),
        None => match &seg {
            SegChoice::Classic(SegmentationMethod::Gold | SegmentationMethod::Spans(_)) => RetChoice::Keep,
            _ => bail!("method {:?} needs a retriever, e.g. {}+jaccard", a.method, a.method),
        },
    };
    Ok(PosrPlan::Pipeline(seg, ret))
}

#[derive(Debug, Serialize)]
struct PosrRow {
    transcript_id: String,
    line_pk: f64,
    time_pk: f64,
    line_wd: f64,
    time_wd: f64,
    line_srs: f64,
    time_srs: f64,
    seg_count_diff: i64,
    input_tokens: u64,
    output_tokens: u64,
    status: String,
}

fn posr(a: &PosrArgs) -> Result<()> {
    let corpus = load(&a.manifest)?;
    let plan = parse_plan(a)?;
    let mut run = RunManifest::new("posr", a.seed, config_json(a));
    let uses_llm = matches!(plan, PosrPlan::Joint)
        || matches!(&plan, PosrPlan::Pipeline(s, r) if *s == SegChoice::Llm || *r == RetChoice::Llm);
    let llm = if uses_llm {
        Some(LlmSetup::from_args(&a.llm)?)
    } else {
        None
    };
    let sessions = &corpus.sessions;
    let n = sessions.len();

    let mut usage = vec![TokenUsage::default(); n];
    let mut status = vec![RunStatus::Ok; n];
    let absorb = |i: usize, r: &LlmRun, usage: &mut Vec<TokenUsage>, status: &mut Vec<RunStatus>| {
        usage[i] += r.usage;
        if r.status.is_flagged() && !status[i].is_flagged() {
            status[i] = r.status.clone();
        }
    };

    let predictions: Vec<Labeling> = match &plan {
        PosrPlan::Joint => {
            let llm = llm.as_ref().expect("llm configured");
            let runs: Vec<LlmRun> = sessions
                .par_iter()
                .map(|s| {
                    run_posr_llm(
                        &*llm.client,
                        &llm.settings,
                        &s.transcript,
                        &s.worksheet,
                        PosrMode::Joint,
                    )
                })
                .collect();
            for (i, r) in runs.iter().enumerate() {
                absorb(i, r, &mut usage, &mut status);
            }
            runs.into_iter().map(|r| r.labeling).collect()
        }
        PosrPlan::Pipeline(seg, ret) => {
            let segmentations: Vec<Labeling> = match seg {
                SegChoice::Llm => {
                    let llm = llm.as_ref().expect("llm configured");
                    let runs: Vec<LlmRun> = sessions
                        .par_iter()
                        .map(|s| run_segmentation_llm(&*llm.client, &llm.settings, &s.transcript))
                        .collect();
                    for (i, r) in runs.iter().enumerate() {
                        absorb(i, r, &mut usage, &mut status);
                    }
                    runs.into_iter().map(|r| r.labeling).collect()
                }
                SegChoice::Classic(method) => {
                    let train = match &a.train_manifest {
                        Some(p) => Some(load(p)?),
                        None => None,
                    };
                    let (l, w) =
                        predict_segmentations(method, sessions, train.as_ref().map(|c| c.sessions.as_slice()))?;
                    run.warnings.extend(w);
                    l
                }
            };
            match ret {
                RetChoice::Keep => segmentations,
                RetChoice::Llm => {
                    let llm = llm.as_ref().expect("llm configured");
                    let runs: Vec<LlmRun> = sessions
                        .par_iter()
                        .zip(&segmentations)
                        .map(|(s, seg)| {
                            run_retrieval_llm(&*llm.client, &llm.settings, &s.transcript, seg, &s.worksheet)
                        })
                        .collect();
                    for (i, r) in runs.iter().enumerate() {
                        absorb(i, r, &mut usage, &mut status);
                    }
                    runs.into_iter().map(|r| r.labeling).collect()
                }
                RetChoice::Scorer(method) => {
                    let config = retriever(*method, &a.retrieval)?;
                    run.config["effective_threshold"] = json!(config.threshold);
                    let ext = external_scores(*method, a.retrieval.scores_dir.as_deref(), sessions)?;
                    sessions
                        .par_iter()
                        .zip(&segmentations)
                        .map(|(s, seg)| link_segments(&config, ext.as_ref(), s, seg))
                        .collect::<Result<_, _>>()?
                }
            }
        }
    };
    if let Some(l) = &llm {
        l.finish()?;
    }
    for (s, st) in sessions.iter().zip(&status) {
        if st.is_flagged() {
            run.flagged.push(format!("{}: {}", s.transcript.id(), describe(st)));
        }
    }
    write_predictions(&a.out.join("predictions"), sessions, &predictions)?;
    run.outputs.push("predictions/".into());

    let cost = match (&a.llm.prices, &llm) {
        (Some(p), Some(l)) => {
            let table = load_prices(p)?;
            Some(cost_per_100(&usage, &table.get(&l.settings.model)?))
        }
        (Some(_), None) => Some(0.0),
        _ => None,
    };
    if corpus.is_annotated() {
        let mut rows = Vec::with_capacity(n);
        for (i, s) in sessions.iter().enumerate() {
            let gold = s.gold.as_ref().expect("checked annotated");
            let r = evaluate(&predictions[i], gold, &s.transcript, None)?;
            rows.push(PosrRow {
                transcript_id: s.transcript.id().to_string(),
                line_pk: r.pk_line,
                time_pk: r.pk_time,
                line_wd: r.wd_line,
                time_wd: r.wd_time,
                line_srs: r.srs_line,
                time_srs: r.srs_time,
                seg_count_diff: r.seg_count_diff,
                input_tokens: usage[i].input_tokens,
                output_tokens: usage[i].output_tokens,
                status: describe(&status[i]),
            });
        }
        write_csv(&a.out.join("posr.csv"), &rows)?;
        let col = |f: fn(&PosrRow) -> f64| rows.iter().map(f).collect::<Vec<_>>();
        let mut summary = summarize(
            &a.method,
            &[
                ("line_pk", col(|r| r.line_pk)),
                ("time_pk", col(|r| r.time_pk)),
                ("line_wd", col(|r| r.line_wd)),
                ("time_wd", col(|r| r.time_wd)),
                ("line_srs", col(|r| r.line_srs)),
                ("time_srs", col(|r| r.time_srs)),
                ("seg_count_diff", col(|r| r.seg_count_diff as f64)),
            ],
        );
        if let Some(c) = cost {
            summary.push(SummaryRow {
                method: a.method.clone(),
                metric: "cost_usd_per_100".into(),
                mean: c,
                std: None,
                n,
            });
        }
        write_csv(&a.out.join("summary.csv"), &summary)?;
        print_summary(&summary);
        run.outputs.extend(["posr.csv".into(), "summary.csv".into()]);
    } else {
        run.warnings.push("no annotations; metrics skipped".into());
    }
    if let Some(c) = cost {
        run.config["cost_usd_per_100"] = json!(c);
    }
    run.save(&a.out)?;
    Ok(())
}

#[derive(Serialize)]
struct TalkTimeRow {
    problem_id: String,
    transcript_id: String,
    minutes: f64,
}

#[derive(Serialize)]
struct TalkSummaryRow {
    problem_id: String,
    transcripts: usize,
    mean_min: f64,
    min_min: f64,
    q1_min: f64,
    median_min: f64,
    q3_min: f64,
    max_min: f64,
}

#[derive(Serialize)]
struct LogOddsRow {
    rank: usize,
    bigram: String,
    z: f64,
}

#[derive(Serialize)]
struct AgreementRow {
    transcript_id: String,
    annotators: usize,
    positions: usize,
    q: f64,
    df: usize,
    p_value: f64,
}

fn log_odds_rows(ranked: &[(String, f64)]) -> Vec<LogOddsRow> {
    ranked
        .iter()
        .enumerate()
        .map(|(i, (bigram, z))| LogOddsRow {
            rank: i + 1,
            bigram: bigram.clone(),
            z: *z,
        })
        .collect()
}

fn analyze(a: &AnalyzeArgs) -> Result<()> {
    let corpus = load(&a.manifest)?;
    let mut run = RunManifest::new("analyze", a.seed, config_json(a));
    let labelings: Vec<Labeling> = match &a.predictions {
        Some(dir) => corpus
            .sessions
            .iter()
            .map(|s| {
                let spans = load_spans(&dir.join(format!("{}.json", s.transcript.id())))?;
                Ok(spans_to_labeling(&spans, s.transcript.len(), GapPolicy::OwnSegment).labeling)
            })
            .collect::<Result<_>>()?,
        None => corpus
            .sessions
            .iter()
            .map(|s| {
                s.gold
                    .clone()
                    .ok_or_else(|| anyhow!("{} has no annotations; pass --predictions", s.transcript.id()))
            })
            .collect::<Result<_>>()?,
    };
    let pairs = || corpus.sessions.iter().zip(&labelings).map(|(s, l)| (&s.transcript, l));

    let table = talk_time(pairs());
    let rows: Vec<TalkTimeRow> = table
        .seconds
        .iter()
        .map(|((p, t), s)| TalkTimeRow {
            problem_id: p.clone(),
            transcript_id: t.clone(),
            minutes: s / 60.0,
        })
        .collect();
    write_csv(&a.out.join("talk_time.csv"), &rows)?;
    let summary: Vec<TalkSummaryRow> = table
        .summaries()
        .into_iter()
        .map(|(p, d)| TalkSummaryRow {
            problem_id: p,
            transcripts: d.count,
            mean_min: d.mean / 60.0,
            min_min: d.min / 60.0,
            q1_min: d.q1 / 60.0,
            median_min: d.median / 60.0,
            q3_min: d.q3 / 60.0,
            max_min: d.max / 60.0,
        })
        .collect();
    write_csv(&a.out.join("talk_time_summary.csv"), &summary)?;
    run.outputs
        .extend(["talk_time.csv".into(), "talk_time_summary.csv".into()]);

    for problem in &a.problem {
        match quartile_language_compare(pairs(), problem) {
            Ok(cmp) => {
                let name = format!("log_odds_{}.csv", sanitize(problem));
                write_csv(&a.out.join(&name), &log_odds_rows(&cmp.ranked))?;
                println!(
                    "problem {problem}: long >= {:.1}s, short <= {:.1}s",
                    cmp.q3_ms / 1000.0,
                    cmp.q1_ms / 1000.0
                );
                for (b, z) in cmp.ranked.iter().take(5) {
                    println!("  {b:<24} {z:+.2}");
                }
                run.outputs.push(name);
            }
            Err(e) => {
                log::warn!("problem {problem}: {e}");
                run.warnings.push(format!("problem {problem}: {e}"));
            }
        }
    }

    if a.predictions.is_some() && corpus.is_annotated() {
        let triples = corpus
            .sessions
            .iter()
            .zip(&labelings)
            .map(|(s, p)| (&s.transcript, p, s.gold.as_ref().expect("checked annotated")));
        match insertion_language_compare(triples) {
            Ok(ranked) => {
                write_csv(&a.out.join("insertion_log_odds.csv"), &log_odds_rows(&ranked))?;
                run.outputs.push("insertion_log_odds.csv".into());
            }
            Err(e) => run.warnings.push(format!("insertion comparison: {e}")),
        }
    }

    let mut agreement = Vec::new();
    for s in &corpus.sessions {
        let Some(extra) = corpus.extra_annotations.get(s.transcript.id()) else {
            continue;
        };
        let mut annotators: Vec<&Labeling> = s.gold.iter().collect();
        annotators.extend(extra);
        match cochran_q(&boundary_matrix(&annotators)) {
            Ok(r) => agreement.push(AgreementRow {
                transcript_id: s.transcript.id().to_string(),
                annotators: annotators.len(),
                positions: s.transcript.len().saturating_sub(1),
                q: r.q,
                df: r.df,
                p_value: r.p_value,
            }),
            Err(e) => run.warnings.push(format!("agreement for {}: {e}", s.transcript.id())),
        }
    }
    if agreement.is_empty() {
        println!("no transcript has multiple annotators; agreement skipped");
        run.warnings.push("agreement skipped: single annotator".into());
    } else {
        write_csv(&a.out.join("agreement.csv"), &agreement)?;
        run.outputs.push("agreement.csv".into());
    }
    run.save(&a.out)?;
    Ok(())
}

fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

#[derive(Serialize)]
struct StatRow {
    statistic: &'static str,
    value: String,
}

fn stats(a: &StatsArgs) -> Result<()> {
    let corpus = load(&a.manifest)?;
    let s = corpus_stats(&corpus.sessions);
    for n in &s.notices {
        println!("note: {n}");
    }
    let rows = s.rows();
    for (k, v) in &rows {
        println!("{k:<32} {v}");
    }
    if let Some(out) = &a.out {
        let rows: Vec<StatRow> = rows
            .into_iter()
            .map(|(statistic, value)| StatRow { statistic, value })
            .collect();
        write_csv(&out.join("stats.csv"), &rows)?;
        let mut run = RunManifest::new("stats", 0, config_json(a));
        run.outputs.push("stats.csv".into());
        run.warnings = s.notices.clone();
        run.save(out)?;
    }
    Ok(())
}

fn import(a: &ImportArgs) -> Result<()> {
    let sessions = import_bundled(&a.input).with_context(|| format!("importing {}", a.input.display()))?;
    let split = match a.split {
        SplitArg::Train => Split::Train,
        SplitArg::Test => Split::Test,
    };
    let manifest = write_corpus(&a.out, &sessions, split)?;
    manifest.save(&a.out.join("manifest.json"))?;
    let mut run = RunManifest::new("import", 0, config_json(a));
    run.outputs.push("manifest.json".into());
    run.save(&a.out)?;
    let annotated = sessions.iter().filter(|s| s.gold.is_some()).count();
    println!(
        "imported {} transcripts ({annotated} annotated) into {}",
        sessions.len(),
        a.out.display()
    );
    Ok(())
}

fn print_summary(rows: &[SummaryRow]) {
    for r in rows {
        match r.std {
            Some(sd) => println!("{:<16} {:.4} ± {:.4}", r.metric, r.mean, sd),
            None => println!("{:<16} {:.4}", r.metric, r.mean),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn posr_args(method: &str) -> PosrArgs {
        PosrArgs {
            manifest: PathBuf::new(),
            method: method.into(),
            k: None,
            train_manifest: None,
            spans_dir: None,
            out: PathBuf::new(),
            seed: 0,
            retrieval: RetrievalArgs::default(),
            llm: LlmArgs::default(),
        }
    }

    #[test]
    fn plans() {
        assert_eq!(parse_plan(&posr_args("llm-joint")).unwrap(), PosrPlan::Joint);
        assert_eq!(
            parse_plan(&posr_args("texttiling+bm25")).unwrap(),
            PosrPlan::Pipeline(
                SegChoice::Classic(SegmentationMethod::TextTiling),
                RetChoice::Scorer(Method::Bm25)
            )
        );
        assert_eq!(
            parse_plan(&posr_args("llm+llm")).unwrap(),
            PosrPlan::Pipeline(SegChoice::Llm, RetChoice::Llm)
        );
        assert_eq!(
            parse_plan(&posr_args("gold")).unwrap(),
            PosrPlan::Pipeline(SegChoice::Classic(SegmentationMethod::Gold), RetChoice::Keep)
        );
        assert!(parse_plan(&posr_args("texttiling")).is_err());
        assert!(parse_plan(&posr_args("texttiling+nope")).is_err());
    }

    #[test]
    fn cli_parses() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
