use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::model::{Labeling, RefLabel, Transcript};

/// Linear-interpolation quantile of sorted data (the "type 7" rule).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let h = (n - 1) as f64 * q;
            let lo = libm::floor(h) as usize;
            let hi = (lo + 1).min(n - 1);
            sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DurationSummary {
    pub count: usize,
    pub mean: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl DurationSummary {
    pub fn of(values: &[f64]) -> Self {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Self {
            count: v.len(),
            mean: v.iter().sum::<f64>() / v.len() as f64,
            min: v.first().copied().unwrap_or(f64::NAN),
            q1: quantile(&v, 0.25),
            median: quantile(&v, 0.5),
            q3: quantile(&v, 0.75),
            max: v.last().copied().unwrap_or(f64::NAN),
        }
    }
}

/// Seconds spent on each worksheet problem in each transcript.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TalkTimeTable {
    /// (problem id, transcript id) -> seconds
    pub seconds: BTreeMap<(String, String), f64>,
}

impl TalkTimeTable {
    pub fn minutes(&self, problem: &str, transcript: &str) -> Option<f64> {
        self.seconds.get(&(problem.into(), transcript.into())).map(|s| s / 60.0)
    }

    /// Distribution of per-transcript seconds for each problem.
    pub fn summaries(&self) -> BTreeMap<String, DurationSummary> {
        let mut by_problem: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for ((p, _), s) in &self.seconds {
            by_problem.entry(p.clone()).or_default().push(*s);
        }
        by_problem
            .into_iter()
            .map(|(p, v)| (p, DurationSummary::of(&v)))
            .collect()
    }

    pub fn total_for_transcript(&self, transcript: &str) -> f64 {
        self.seconds
            .iter()
            .filter(|((_, t), _)| t == transcript)
            .map(|(_, s)| s)
            .sum()
    }
}

/// Sums line durations per (problem, transcript). Lines linked to nothing
/// or to a problem outside the worksheet are left out.
pub fn talk_time<'a, I>(corpus: I) -> TalkTimeTable
where
    I: IntoIterator<Item = (&'a Transcript, &'a Labeling)>,
{
    let mut table = TalkTimeTable::default();
    for (transcript, labeling) in corpus {
        for (line, label) in transcript.lines().iter().zip(labeling.per_line()) {
            if let RefLabel::Problem(p) = &label.reference {
                *table.seconds.entry((p.clone(), transcript.id().into())).or_insert(0.0) +=
                    line.duration_ms() as f64 / 1000.0;
            }
        }
    }
    table
}
