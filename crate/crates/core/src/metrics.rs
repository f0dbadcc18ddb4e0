//! Segmentation and joint segmentation/retrieval metrics.
//!
//! All windowed metrics slide one window per line `j` in `0..N-k`. A line
//! window covers lines `j..=j+k`, so the boundaries inside it are the
//! positions `i` with `j < i <= j+k`. A time window starts at line `j`'s
//! start and runs to its end plus `delta_ms`; a boundary at position `i` is
//! stamped with the start time of line `i` and counts when that time lies in
//! the open interval `(start_j, end_j + delta_ms)`. With contiguous lines of
//! equal duration `d` and `delta_ms = k * d` both windows select exactly the
//! same boundaries.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::model::{Labeling, Transcript};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("labelings differ in length ({pred} vs {reference})")]
    LengthMismatch { pred: usize, reference: usize },
    #[error("transcript has {transcript} lines but labelings have {labeling}")]
    TranscriptMismatch { transcript: usize, labeling: usize },
    #[error("transcript shorter than window (N = {n}, k = {k})")]
    WindowTooLarge { n: usize, k: usize },
    #[error("window size must be at least 1")]
    ZeroWindow,
    #[error("total time weight is zero")]
    ZeroWeight,
    #[error("no price entry for model {0}")]
    UnknownModel(String),
}

/// Window sizes derived from a reference labeling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowConfig {
    pub k_lines: usize,
    pub delta_ms: i64,
}

impl WindowConfig {
    /// `k = max(1, round(mean segment length / 2))` and `delta` is half the
    /// mean segment duration (at least 1 ms).
    pub fn from_reference(reference: &Labeling, transcript: &Transcript) -> Self {
        let spans = reference.spans();
        if spans.is_empty() {
            return Self {
                k_lines: 1,
                delta_ms: 1,
            };
        }
        let n_segments = spans.len() as f64;
        let mean_len = reference.len() as f64 / n_segments;
        let k_lines = (libm::round(0.5 * mean_len) as usize).max(1);
        let lines = transcript.lines();
        let total: i64 = spans
            .iter()
            .map(|s| lines[s.end_line].end_ms - lines[s.start_line].start_ms)
            .sum();
        let delta_ms = (libm::round(0.5 * total as f64 / n_segments) as i64).max(1);
        Self { k_lines, delta_ms }
    }
}

fn check_pair(pred: &Labeling, reference: &Labeling, k: usize) -> Result<usize, MetricError> {
    if pred.len() != reference.len() {
        return Err(MetricError::LengthMismatch {
            pred: pred.len(),
            reference: reference.len(),
        });
    }
    if k == 0 {
        return Err(MetricError::ZeroWindow);
    }
    let n = reference.len();
    if n <= k {
        return Err(MetricError::WindowTooLarge { n, k });
    }
    Ok(n)
}

fn check_transcript(labeling: &Labeling, transcript: &Transcript) -> Result<(), MetricError> {
    if labeling.len() != transcript.len() {
        return Err(MetricError::TranscriptMismatch {
            transcript: transcript.len(),
            labeling: labeling.len(),
        });
    }
    Ok(())
}

/// Boundary counts inside each of the `N - k` line windows.
fn line_window_counts(labeling: &Labeling, k: usize) -> Vec<usize> {
    let n = labeling.len();
    // prefix[i] = number of boundaries at positions <= i
    let mut prefix = alloc::vec![0usize; n];
    for b in labeling.boundaries() {
        prefix[b] = 1;
    }
    for i in 1..n {
        prefix[i] += prefix[i - 1];
    }
    (0..n - k).map(|j| prefix[j + k] - prefix[j]).collect()
}

/// Boundary counts inside each of the first `N - k` time windows.
fn time_window_counts(labeling: &Labeling, transcript: &Transcript, k: usize, delta_ms: i64) -> Vec<usize> {
    let lines = transcript.lines();
    let times: Vec<i64> = labeling.boundaries().into_iter().map(|i| lines[i].start_ms).collect();
    (0..labeling.len() - k)
        .map(|j| {
            let lo = lines[j].start_ms;
            let hi = lines[j].end_ms + delta_ms;
            let first = times.partition_point(|&t| t <= lo);
            let last = times.partition_point(|&t| t < hi);
            last.saturating_sub(first)
        })
        .collect()
}

fn count_disagreement(a: &[usize], b: &[usize], presence_only: bool) -> f64 {
    let misses = a
        .iter()
        .zip(b)
        .filter(|(x, y)| if presence_only { (**x > 0) != (**y > 0) } else { x != y })
        .count();
    misses as f64 / a.len() as f64
}

/// Fraction of line windows whose boundary counts differ.
pub fn window_diff(pred: &Labeling, reference: &Labeling, k: usize) -> Result<f64, MetricError> {
    check_pair(pred, reference, k)?;
    Ok(count_disagreement(
        &line_window_counts(pred, k),
        &line_window_counts(reference, k),
        false,
    ))
}

/// Fraction of line windows where exactly one labeling has a boundary.
pub fn p_k(pred: &Labeling, reference: &Labeling, k: usize) -> Result<f64, MetricError> {
    check_pair(pred, reference, k)?;
    Ok(count_disagreement(
        &line_window_counts(pred, k),
        &line_window_counts(reference, k),
        true,
    ))
}

/// Time-WindowDiff with an explicit line count `k` for the normalizer.
pub fn time_window_diff_with_k(
    pred: &Labeling,
    reference: &Labeling,
    transcript: &Transcript,
    k: usize,
    delta_ms: i64,
) -> Result<f64, MetricError> {
    check_pair(pred, reference, k)?;
    check_transcript(reference, transcript)?;
    Ok(count_disagreement(
        &time_window_counts(pred, transcript, k, delta_ms),
        &time_window_counts(reference, transcript, k, delta_ms),
        false,
    ))
}

/// Time-Pk with an explicit line count `k` for the normalizer.
pub fn time_p_k_with_k(
    pred: &Labeling,
    reference: &Labeling,
    transcript: &Transcript,
    k: usize,
    delta_ms: i64,
) -> Result<f64, MetricError> {
    check_pair(pred, reference, k)?;
    check_transcript(reference, transcript)?;
    Ok(count_disagreement(
        &time_window_counts(pred, transcript, k, delta_ms),
        &time_window_counts(reference, transcript, k, delta_ms),
        true,
    ))
}

/// Time-WindowDiff; `k` for the window count comes from the reference.
pub fn time_window_diff(
    pred: &Labeling,
    reference: &Labeling,
    transcript: &Transcript,
    delta_ms: i64,
) -> Result<f64, MetricError> {
    check_transcript(reference, transcript)?;
    let k = WindowConfig::from_reference(reference, transcript).k_lines;
    time_window_diff_with_k(pred, reference, transcript, k, delta_ms)
}

/// Time-Pk; `k` for the window count comes from the reference.
pub fn time_p_k(
    pred: &Labeling,
    reference: &Labeling,
    transcript: &Transcript,
    delta_ms: i64,
) -> Result<f64, MetricError> {
    check_transcript(reference, transcript)?;
    let k = WindowConfig::from_reference(reference, transcript).k_lines;
    time_p_k_with_k(pred, reference, transcript, k, delta_ms)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weighting {
    /// Every line weighs 1.
    Line,
    /// Every line weighs its duration.
    Time,
}

/// Segmentation and Retrieval Score: weighted fraction of lines whose
/// predicted reference equals the gold reference.
pub fn srs(
    pred: &Labeling,
    reference: &Labeling,
    transcript: &Transcript,
    weighting: Weighting,
) -> Result<f64, MetricError> {
    if pred.len() != reference.len() {
        return Err(MetricError::LengthMismatch {
            pred: pred.len(),
            reference: reference.len(),
        });
    }
    check_transcript(reference, transcript)?;
    let mut total = 0.0;
    let mut hit = 0.0;
    for ((p, r), line) in pred.references().zip(reference.references()).zip(transcript.lines()) {
        let w = match weighting {
            Weighting::Line => 1.0,
            Weighting::Time => line.duration_ms() as f64,
        };
        total += w;
        if p == r {
            hit += w;
        }
    }
    if total <= 0.0 {
        return Err(MetricError::ZeroWeight);
    }
    Ok(hit / total)
}

/// Predicted minus true number of segments.
pub fn segment_count_diff(pred: &Labeling, reference: &Labeling) -> i64 {
    pred.num_segments() as i64 - reference.num_segments() as i64
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TokenUsage {
    pub input_tokens: u64,
    pub output_tokens: u64,
}

impl TokenUsage {
    pub fn new(input_tokens: u64, output_tokens: u64) -> Self {
        Self {
            input_tokens,
            output_tokens,
        }
    }
}

impl core::ops::AddAssign for TokenUsage {
    fn add_assign(&mut self, rhs: Self) {
        self.input_tokens += rhs.input_tokens;
        self.output_tokens += rhs.output_tokens;
    }
}

/// USD per 1,000 tokens.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Price {
    pub input_usd_per_1k: f64,
    pub output_usd_per_1k: f64,
}

impl Price {
    pub fn cost(&self, usage: TokenUsage) -> f64 {
        usage.input_tokens as f64 / 1000.0 * self.input_usd_per_1k
            + usage.output_tokens as f64 / 1000.0 * self.output_usd_per_1k
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PriceTable {
    pub models: BTreeMap<String, Price>,
}

impl PriceTable {
    pub fn get(&self, model: &str) -> Result<Price, MetricError> {
        self.models
            .get(model)
            .copied()
            .ok_or_else(|| MetricError::UnknownModel(model.into()))
    }
}

/// Mean per-transcript cost, times 100. Each entry of `usage` is one
/// transcript's accumulated token counts.
pub fn cost_per_100(usage: &[TokenUsage], price: &Price) -> f64 {
    if usage.is_empty() {
        return 0.0;
    }
    let total: f64 = usage.iter().map(|u| price.cost(*u)).sum();
    total / usage.len() as f64 * 100.0
}

/// [`cost_per_100`] with the price looked up by model name.
pub fn cost_per_100_for(usage: &[TokenUsage], table: &PriceTable, model: &str) -> Result<f64, MetricError> {
    Ok(cost_per_100(usage, &table.get(model)?))
}

/// Every metric for one (prediction, reference) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub pk_line: f64,
    pub pk_time: f64,
    pub wd_line: f64,
    pub wd_time: f64,
    pub srs_line: f64,
    pub srs_time: f64,
    pub seg_count_diff: i64,
    pub cost_usd_per_100: Option<f64>,
    pub window: WindowConfig,
}

/// Computes all metrics with windows derived from the reference.
pub fn evaluate(
    pred: &Labeling,
    reference: &Labeling,
    transcript: &Transcript,
    cost_usd_per_100: Option<f64>,
) -> Result<EvalReport, MetricError> {
    check_transcript(reference, transcript)?;
    let window = WindowConfig::from_reference(reference, transcript);
    let k = window.k_lines;
    let delta = window.delta_ms;
    Ok(EvalReport {
        pk_line: p_k(pred, reference, k)?,
        pk_time: time_p_k_with_k(pred, reference, transcript, k, delta)?,
        wd_line: window_diff(pred, reference, k)?,
        wd_time: time_window_diff_with_k(pred, reference, transcript, k, delta)?,
        srs_line: srs(pred, reference, transcript, Weighting::Line)?,
        srs_time: srs(pred, reference, transcript, Weighting::Time)?,
        seg_count_diff: segment_count_diff(pred, reference),
        cost_usd_per_100,
        window,
    })
}
