//! Segment-as-query retrieval over a worksheet.
//!
//! Each segment's concatenated utterances are scored against every problem.
//! The best problem is accepted when its score (after top-10 normalization
//! for unbounded scorers) reaches the configured threshold; otherwise the
//! segment is linked to nothing.

mod calibrate;
mod scoring;

pub use calibrate::{
    calibrate_threshold, calibration_items, calibration_items_with, folds_from_order, grid_accuracy, Calibration,
    CalibrationItem, GRID_STEPS,
};
pub use scoring::{Lexical, LexicalIndex};

use alloc::vec::Vec;

use crate::model::{Labeling, RefLabel, SegmentSpan, Transcript, Worksheet};
use crate::text::tokenize;

/// Number of top candidates used by score normalization.
pub const TOP_K: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Jaccard,
    TfIdf,
    Bm25,
    /// Scores supplied from outside, e.g. a neural retriever.
    External,
}

impl Method {
    /// Thresholds reported for the LessonLink training split.
    pub fn published_threshold(self) -> f64 {
        match self {
            Method::Jaccard => 0.11,
            Method::TfIdf => 0.40,
            Method::Bm25 => 0.19,
            Method::External => 0.14,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Jaccard => "jaccard",
            Method::TfIdf => "tfidf",
            Method::Bm25 => "bm25",
            Method::External => "external",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "jaccard" => Some(Method::Jaccard),
            "tfidf" | "tf-idf" => Some(Method::TfIdf),
            "bm25" | "bm-25" => Some(Method::Bm25),
            "external" | "colbert" => Some(Method::External),
            _ => None,
        }
    }
}

/// How the top-10 scores are rescaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TopKNorm {
    /// `(s - min) / (max - min)` within the top 10.
    #[default]
    MinMax,
    /// `s / sum` within the top 10.
    Sum,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetrieverConfig {
    pub method: Method,
    pub threshold: f64,
    pub normalize_top10: bool,
    pub normalization: TopKNorm,
    pub bm25_k1: f64,
    pub bm25_b: f64,
}

impl RetrieverConfig {
    /// Published threshold, normalization on for unbounded scorers.
    pub fn new(method: Method) -> Self {
        Self {
            method,
            threshold: method.published_threshold(),
            normalize_top10: matches!(method, Method::Bm25 | Method::External),
            normalization: TopKNorm::MinMax,
            bm25_k1: 1.5,
            bm25_b: 0.75,
        }
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }

    pub fn lexical(&self) -> Option<Lexical> {
        match self.method {
            Method::Jaccard => Some(Lexical::Jaccard),
            Method::TfIdf => Some(Lexical::TfIdf),
            Method::Bm25 => Some(Lexical::Bm25 {
                k1: self.bm25_k1,
                b: self.bm25_b,
            }),
            Method::External => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RetrievalError {
    #[error("the external method needs caller-supplied scores")]
    ExternalScoresRequired,
    #[error("expected {expected} scores, got {found}")]
    ScoreCount { expected: usize, found: usize },
    #[error("threshold {0} outside [0, 1]")]
    Threshold(f64),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
}

/// Scores for every problem of a worksheet plus the resulting decision.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredCandidates {
    pub raw: Vec<f64>,
    pub normalized: Option<Vec<f64>>,
    pub decision: RefLabel,
}

impl ScoredCandidates {
    /// Scores the decision is taken on.
    pub fn effective(&self) -> &[f64] {
        self.normalized.as_deref().unwrap_or(&self.raw)
    }

    /// Index and score of the best problem; ties go to the earlier problem.
    pub fn best(&self) -> Option<(usize, f64)> {
        best_of(self.effective())
    }
}

fn best_of(scores: &[f64]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &s) in scores.iter().enumerate() {
        match best {
            Some((_, b)) if s <= b => {}
            _ => best = Some((i, s)),
        }
    }
    best
}

/// Rescales the 10 best scores; every other score becomes 0.
pub fn normalize_top_k(raw: &[f64], norm: TopKNorm) -> Vec<f64> {
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&a, &b| raw[b].total_cmp(&raw[a]));
    order.truncate(TOP_K);
    let mut out = alloc::vec![0.0; raw.len()];
    if order.is_empty() {
        return out;
    }
    let top: Vec<f64> = order.iter().map(|&i| raw[i]).collect();
    let max = top.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = top.iter().copied().fold(f64::INFINITY, f64::min);
    match norm {
        TopKNorm::MinMax => {
            for &i in &order {
                out[i] = if max > min {
                    (raw[i] - min) / (max - min)
                } else if max > 0.0 {
                    1.0
                } else {
                    0.0
                };
            }
        }
        TopKNorm::Sum => {
            let sum: f64 = top.iter().sum();
            if sum > 0.0 {
                for &i in &order {
                    out[i] = raw[i] / sum;
                }
            }
        }
    }
    out
}

/// Argmax problem if its score reaches the threshold, else `Null`.
pub fn decide(config: &RetrieverConfig, candidates: &ScoredCandidates, worksheet: &Worksheet) -> RefLabel {
    match candidates.best() {
        Some((i, s)) if s >= config.threshold => RefLabel::Problem(worksheet.problems()[i].id.clone()),
        _ => RefLabel::Null,
    }
}

/// Normalizes (when configured) and decides on caller-supplied raw scores.
pub fn score_raw(
    config: &RetrieverConfig,
    raw: Vec<f64>,
    worksheet: &Worksheet,
) -> Result<ScoredCandidates, RetrievalError> {
    if raw.len() != worksheet.len() {
        return Err(RetrievalError::ScoreCount {
            expected: worksheet.len(),
            found: raw.len(),
        });
    }
    let normalized = config
        .normalize_top10
        .then(|| normalize_top_k(&raw, config.normalization));
    let mut scored = ScoredCandidates {
        raw,
        normalized,
        decision: RefLabel::Null,
    };
    scored.decision = decide(config, &scored, worksheet);
    Ok(scored)
}

fn score_with_index(
    config: &RetrieverConfig,
    index: &LexicalIndex,
    segment_text: &str,
    worksheet: &Worksheet,
) -> Result<ScoredCandidates, RetrievalError> {
    let query = tokenize(segment_text);
    if query.is_empty() {
        return Ok(ScoredCandidates {
            raw: alloc::vec![0.0; worksheet.len()],
            normalized: config.normalize_top10.then(|| alloc::vec![0.0; worksheet.len()]),
            decision: RefLabel::Null,
        });
    }
    score_raw(config, index.scores(&query), worksheet)
}

/// Scores one segment's text against every problem.
pub fn score_segment(
    config: &RetrieverConfig,
    segment_text: &str,
    worksheet: &Worksheet,
) -> Result<ScoredCandidates, RetrievalError> {
    if !(0.0..=1.0).contains(&config.threshold) {
        return Err(RetrievalError::Threshold(config.threshold));
    }
    let lexical = config.lexical().ok_or(RetrievalError::ExternalScoresRequired)?;
    let index = LexicalIndex::fit(lexical, worksheet);
    score_with_index(config, &index, segment_text, worksheet)
}

/// Links every segment of `segmentation` to a problem, filling the
/// reference uniformly within each segment.
pub fn retrieve_labeling(
    config: &RetrieverConfig,
    transcript: &Transcript,
    segmentation: &Labeling,
    worksheet: &Worksheet,
) -> Result<Labeling, RetrievalError> {
    if !(0.0..=1.0).contains(&config.threshold) {
        return Err(RetrievalError::Threshold(config.threshold));
    }
    segmentation.check_length(transcript)?;
    let lexical = config.lexical().ok_or(RetrievalError::ExternalScoresRequired)?;
    let index = LexicalIndex::fit(lexical, worksheet);
    let refs = segmentation
        .spans()
        .iter()
        .map(|span| {
            let text = transcript.text_of(span.start_line, span.end_line);
            score_with_index(config, &index, &text, worksheet).map(|s| s.decision)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(segmentation.with_segment_references(&refs))
}

/// Like [`retrieve_labeling`] with raw scores from `scorer`, called once
/// per segment in order with the segment index, span and text.
pub fn retrieve_labeling_with<F>(
    config: &RetrieverConfig,
    transcript: &Transcript,
    segmentation: &Labeling,
    worksheet: &Worksheet,
    mut scorer: F,
) -> Result<Labeling, RetrievalError>
where
    F: FnMut(usize, &SegmentSpan, &str) -> Vec<f64>,
{
    segmentation.check_length(transcript)?;
    let refs = segmentation
        .spans()
        .iter()
        .enumerate()
        .map(|(i, span)| {
            let text = transcript.text_of(span.start_line, span.end_line);
            score_raw(config, scorer(i, span, &text), worksheet).map(|s| s.decision)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(segmentation.with_segment_references(&refs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Line, Problem};
    use alloc::format;
    use alloc::vec;

    fn ws(n: usize) -> Worksheet {
        Worksheet::new(
            "w",
            (0..n)
                .map(|i| Problem::new(format!("P{i}"), format!("word{i} shared{i}")))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn decide_threshold_rules() {
        let w = ws(3);
        let cfg = RetrieverConfig::new(Method::Jaccard);
        let s = score_raw(&cfg, vec![0.1, 0.25, 0.05], &w).unwrap();
        assert_eq!(s.decision, RefLabel::problem("P1"));

        let cfg = RetrieverConfig::new(Method::TfIdf);
        let s = score_raw(&cfg, vec![0.35, 0.1, 0.0], &w).unwrap();
        assert_eq!(s.decision, RefLabel::Null);

        let s = score_raw(&cfg, vec![0.5, 0.7, 0.7], &w).unwrap();
        assert_eq!(s.decision, RefLabel::problem("P1"));
    }

    #[test]
    fn disjoint_query_is_null() {
        let w = ws(4);
        for m in [Method::Jaccard, Method::TfIdf, Method::Bm25] {
            let cfg = RetrieverConfig::new(m).with_threshold(0.01);
            let s = score_segment(&cfg, "nothing in common", &w).unwrap();
            assert_eq!(s.decision, RefLabel::Null, "{m:?}");
            assert!(s.raw.iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn empty_segment_is_null_even_at_zero_threshold() {
        let w = ws(2);
        let cfg = RetrieverConfig::new(Method::Jaccard).with_threshold(0.0);
        let s = score_segment(&cfg, " ... ", &w).unwrap();
        assert_eq!(s.decision, RefLabel::Null);
        assert_eq!(s.raw, vec![0.0, 0.0]);
    }

    #[test]
    fn identical_tokens_jaccard_one() {
        let w = ws(2);
        let cfg = RetrieverConfig::new(Method::Jaccard);
        let s = score_segment(&cfg, "shared1 WORD1", &w).unwrap();
        assert_eq!(s.raw[1], 1.0);
    }

    #[test]
    fn min_max_top_ten() {
        let raw: Vec<f64> = (0..12).map(|i| i as f64).collect();
        let n = normalize_top_k(&raw, TopKNorm::MinMax);
        assert_eq!(n[11], 1.0);
        assert_eq!(n[2], 0.0);
        assert_eq!(n[0], 0.0);
        assert!((n[6] - 4.0 / 9.0).abs() < 1e-12);
        assert!(n.iter().all(|x| (0.0..=1.0).contains(x)));
        let z = normalize_top_k(&[0.0, 0.0], TopKNorm::MinMax);
        assert_eq!(z, vec![0.0, 0.0]);
        let s = normalize_top_k(&[1.0, 3.0], TopKNorm::Sum);
        assert_eq!(s, vec![0.25, 0.75]);
    }

    #[test]
    fn external_requires_scores() {
        let w = ws(2);
        let cfg = RetrieverConfig::new(Method::External);
        assert_eq!(
            score_segment(&cfg, "x", &w),
            Err(RetrievalError::ExternalScoresRequired)
        );
        assert!(matches!(
            score_raw(&cfg, vec![1.0], &w),
            Err(RetrievalError::ScoreCount { .. })
        ));
    }

    #[test]
    fn refs_are_uniform_within_segments() {
        let w = ws(2);
        let lines = vec![
            Line::new(0, "a", "word0 here", 0, 1),
            Line::new(1, "a", "still talking", 1, 2),
            Line::new(2, "a", "now word1 shared1", 2, 3),
        ];
        let t = Transcript::new("t", lines).unwrap();
        let seg = Labeling::from_boundaries(3, &[2]);
        let cfg = RetrieverConfig::new(Method::Jaccard);
        let out = retrieve_labeling(&cfg, &t, &seg, &w).unwrap();
        let refs: Vec<_> = out.references().cloned().collect();
        assert_eq!(
            refs,
            vec![
                RefLabel::problem("P0"),
                RefLabel::problem("P0"),
                RefLabel::problem("P1")
            ]
        );
        assert!(Labeling::new(out.per_line().to_vec()).is_ok());
    }
}
