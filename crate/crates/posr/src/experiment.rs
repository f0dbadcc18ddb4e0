//! Corpus-level workflows shared by the command line and the test suites.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use posr_core::metrics::{evaluate, MetricError};
use posr_core::model::{spans_to_labeling, GapPolicy, Labeling, SegmentSpan, Session};
use posr_core::retrieval::{
    calibrate_threshold, calibration_items, calibration_items_with, folds_from_order, retrieve_labeling,
    retrieve_labeling_with, Calibration, Method, RetrievalError, RetrieverConfig,
};
use posr_core::segmentation::{fit_boundary_words, PerLine, Segmenter, TextTiling, Whole};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::io::{load_spans, IoError};

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error("{0}")]
    Usage(String),
}

/// How a transcript is split into segments.
#[derive(Debug, Clone, PartialEq)]
pub enum SegmentationMethod {
    TextTiling,
    /// Top-`k` opening words learned from annotated training transcripts.
    BoundaryWords(usize),
    PerLine,
    Whole,
    /// The annotated segmentation.
    Gold,
    /// Span files `<transcript id>.json` from another system.
    Spans(PathBuf),
}

impl SegmentationMethod {
    /// `texttiling`, `top10`, `top20`, `boundary-words` (with `k`),
    /// `per-line`, `whole`, `gold`, or `spans` (with `spans_dir`).
    pub fn parse(name: &str, k: Option<usize>, spans_dir: Option<&Path>) -> Result<Self, ExperimentError> {
        let lower = name.to_ascii_lowercase();
        Ok(match lower.as_str() {
            "texttiling" => Self::TextTiling,
            "boundary-words" | "boundary_words" => Self::BoundaryWords(k.unwrap_or(10)),
            "per-line" | "perline" => Self::PerLine,
            "whole" => Self::Whole,
            "gold" => Self::Gold,
            "spans" => Self::Spans(
                spans_dir
                    .ok_or_else(|| ExperimentError::Usage("spans segmentation needs --spans-dir".into()))?
                    .to_path_buf(),
            ),
            other => match other.strip_prefix("top").and_then(|n| n.parse().ok()) {
                Some(n) if n > 0 => Self::BoundaryWords(n),
                _ => return Err(ExperimentError::Usage(format!("unknown segmentation method {name:?}"))),
            },
        })
    }

    pub fn needs_training(&self) -> bool {
        matches!(self, Self::BoundaryWords(_))
    }
}

/// Predicted segmentations, one per session, in session order.
pub fn predict_segmentations(
    method: &SegmentationMethod,
    sessions: &[Session],
    train: Option<&[Session]>,
) -> Result<(Vec<Labeling>, Vec<String>), ExperimentError> {
    let mut warnings = Vec::new();
    let labelings = match method {
        SegmentationMethod::TextTiling => run_segmenter(&TextTiling::default(), sessions),
        SegmentationMethod::PerLine => run_segmenter(&PerLine, sessions),
        SegmentationMethod::Whole => run_segmenter(&Whole, sessions),
        SegmentationMethod::BoundaryWords(k) => {
            let train = train.filter(|t| t.iter().any(|s| s.gold.is_some())).ok_or_else(|| {
                ExperimentError::Usage("boundary-word segmentation needs an annotated --train-manifest".into())
            })?;
            let pairs = train.iter().filter_map(|s| s.gold.as_ref().map(|g| (&s.transcript, g)));
            let model = fit_boundary_words(pairs, *k).map_err(|e| ExperimentError::Usage(e.to_string()))?;
            run_segmenter(&model, sessions)
        }
        SegmentationMethod::Gold => sessions
            .iter()
            .map(|s| {
                s.gold.clone().ok_or_else(|| {
                    ExperimentError::Usage(format!("transcript {} has no annotations", s.transcript.id()))
                })
            })
            .collect::<Result<_, _>>()?,
        SegmentationMethod::Spans(dir) => {
            let mut out = Vec::with_capacity(sessions.len());
            for s in sessions {
                let spans = load_spans(&dir.join(format!("{}.json", s.transcript.id())))?;
                let repair = spans_to_labeling(&spans, s.transcript.len(), GapPolicy::OwnSegment);
                warnings.extend(
                    repair
                        .warnings
                        .into_iter()
                        .map(|w| format!("{}: {w}", s.transcript.id())),
                );
                out.push(repair.labeling);
            }
            out
        }
    };
    Ok((labelings, warnings))
}

fn run_segmenter<S: Segmenter + Sync>(segmenter: &S, sessions: &[Session]) -> Vec<Labeling> {
    sessions.par_iter().map(|s| segmenter.segment(&s.transcript)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegmentationRow {
    pub transcript_id: String,
    pub line_pk: f64,
    pub time_pk: f64,
    pub line_wd: f64,
    pub time_wd: f64,
    pub pred_segments: usize,
    pub gold_segments: usize,
    pub seg_count_diff: i64,
}

/// Segmentation metrics against gold for every annotated session.
pub fn segmentation_rows(
    sessions: &[Session],
    predictions: &[Labeling],
) -> Result<Vec<SegmentationRow>, ExperimentError> {
    let mut rows = Vec::new();
    for (s, pred) in sessions.iter().zip(predictions) {
        let Some(gold) = &s.gold else { continue };
        let r = evaluate(pred, gold, &s.transcript, None)?;
        rows.push(SegmentationRow {
            transcript_id: s.transcript.id().to_string(),
            line_pk: r.pk_line,
            time_pk: r.pk_time,
            line_wd: r.wd_line,
            time_wd: r.wd_time,
            pred_segments: pred.num_segments(),
            gold_segments: gold.num_segments(),
            seg_count_diff: r.seg_count_diff,
        });
    }
    Ok(rows)
}

/// Line `{start_line, end_line, scores}` of an external score file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub start_line: usize,
    pub end_line: usize,
    pub scores: Vec<f64>,
}

/// Caller-supplied retrieval scores keyed by transcript and span.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExternalScores {
    by_transcript: BTreeMap<String, BTreeMap<(usize, usize), Vec<f64>>>,
}

impl ExternalScores {
    /// Reads `<transcript id>.jsonl` for every session from `dir`.
    pub fn load(dir: &Path, sessions: &[Session]) -> Result<Self, ExperimentError> {
        let mut out = Self::default();
        for s in sessions {
            let path = dir.join(format!("{}.jsonl", s.transcript.id()));
            let text = std::fs::read_to_string(&path).map_err(|source| IoError::Io {
                path: path.clone(),
                source,
            })?;
            for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                let rec: ScoreRecord = serde_json::from_str(line).map_err(|e| IoError::Parse {
                    path: path.clone(),
                    line: i + 1,
                    message: e.to_string(),
                })?;
                out.insert(s.transcript.id(), rec.start_line, rec.end_line, rec.scores);
            }
        }
        Ok(out)
    }

    pub fn insert(&mut self, transcript: &str, start: usize, end: usize, scores: Vec<f64>) {
        self.by_transcript
            .entry(transcript.to_string())
            .or_default()
            .insert((start, end), scores);
    }

    pub fn get(&self, transcript: &str, span: &SegmentSpan) -> Option<&[f64]> {
        self.by_transcript
            .get(transcript)?
            .get(&(span.start_line, span.end_line))
            .map(Vec::as_slice)
    }

    fn require(&self, session: &Session, spans: &[SegmentSpan]) -> Result<(), ExperimentError> {
        match spans.iter().find(|sp| self.get(session.transcript.id(), sp).is_none()) {
            Some(sp) => Err(ExperimentError::Usage(format!(
                "no external scores for {} lines {}..={}",
                session.transcript.id(),
                sp.start_line,
                sp.end_line
            ))),
            None => Ok(()),
        }
    }
}

/// Links every segment of `segmentation` to a problem of the session's
/// worksheet.
pub fn link_segments(
    config: &RetrieverConfig,
    external: Option<&ExternalScores>,
    session: &Session,
    segmentation: &Labeling,
) -> Result<Labeling, ExperimentError> {
    match (config.method, external) {
        (Method::External, None) => Err(RetrievalError::ExternalScoresRequired.into()),
        (Method::External, Some(scores)) => {
            scores.require(session, &segmentation.spans())?;
            let id = session.transcript.id();
            Ok(retrieve_labeling_with(
                config,
                &session.transcript,
                segmentation,
                &session.worksheet,
                |_, span, _| scores.get(id, span).map(<[f64]>::to_vec).unwrap_or_default(),
            )?)
        }
        _ => Ok(retrieve_labeling(
            config,
            &session.transcript,
            segmentation,
            &session.worksheet,
        )?),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecisionRow {
    pub transcript_id: String,
    pub segment: usize,
    pub start_line: usize,
    pub end_line: usize,
    pub gold: String,
    pub predicted: String,
    pub correct: bool,
}

/// Retrieval decisions on the annotated segments of every session.
pub fn retrieval_on_gold(
    config: &RetrieverConfig,
    external: Option<&ExternalScores>,
    sessions: &[Session],
) -> Result<Vec<DecisionRow>, ExperimentError> {
    let per_session = sessions
        .par_iter()
        .filter_map(|s| s.gold.as_ref().map(|g| (s, g)))
        .map(|(s, gold)| {
            let predicted = link_segments(config, external, s, &gold.without_references())?;
            Ok(gold
                .spans()
                .into_iter()
                .enumerate()
                .map(|(i, span)| {
                    let p = predicted.reference(span.start_line);
                    DecisionRow {
                        transcript_id: s.transcript.id().to_string(),
                        segment: i,
                        start_line: span.start_line,
                        end_line: span.end_line,
                        gold: span.reference.to_string(),
                        predicted: p.to_string(),
                        correct: *p == span.reference,
                    }
                })
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>, ExperimentError>>()?;
    Ok(per_session.into_iter().flatten().collect())
}

/// Fraction of correct decisions per transcript, in first-seen order.
pub fn accuracy_by_transcript(rows: &[DecisionRow]) -> Vec<(String, f64)> {
    let mut order: Vec<String> = Vec::new();
    let mut tally: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for r in rows {
        let e = tally.entry(&r.transcript_id).or_insert_with(|| {
            order.push(r.transcript_id.clone());
            (0, 0)
        });
        e.0 += usize::from(r.correct);
        e.1 += 1;
    }
    order
        .into_iter()
        .map(|id| {
            let (c, n) = tally[id.as_str()];
            let acc = c as f64 / n as f64;
            (id, acc)
        })
        .collect()
}

/// Fold of each session: a seeded shuffle dealt round-robin.
pub fn seeded_folds(n_sessions: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n_sessions).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    folds_from_order(&order, folds)
}

/// Cross-validated threshold over the annotated segments of `sessions`.
pub fn calibrate(
    config: &RetrieverConfig,
    external: Option<&ExternalScores>,
    sessions: &[Session],
    folds: usize,
    seed: u64,
) -> Result<Calibration, ExperimentError> {
    let items = match (config.method, external) {
        (Method::External, None) => return Err(RetrievalError::ExternalScoresRequired.into()),
        (Method::External, Some(scores)) => {
            for s in sessions {
                if let Some(g) = &s.gold {
                    scores.require(s, &g.spans())?;
                }
            }
            calibration_items_with(config, sessions, |group, span, _| {
                scores
                    .get(sessions[group].transcript.id(), span)
                    .map(<[f64]>::to_vec)
                    .unwrap_or_default()
            })?
        }
        _ => calibration_items(config, sessions)?,
    };
    let annotated = sessions.iter().filter(|s| s.gold.is_some()).count();
    if annotated == 0 {
        return Err(ExperimentError::Usage("calibration needs annotated transcripts".into()));
    }
    let fold_of = seeded_folds(sessions.len(), folds, seed);
    Ok(calibrate_threshold(&items, &fold_of, folds))
}
