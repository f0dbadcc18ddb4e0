//! Z-scored log-odds ratio with an informative Dirichlet prior.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::{quantile, AnalysisError};
use crate::model::{Labeling, RefLabel, Transcript};
use crate::text::bigrams;

/// Prior strength as a fraction of the prior corpus size.
pub const PRIOR_SCALE: f64 = 0.01;

/// Bigram counts of one corpus. Bigrams never cross utterances.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BigramCounts {
    pub label: String,
    pub counts: BTreeMap<String, u64>,
    pub total: u64,
}

impl BigramCounts {
    pub fn new(label: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            ..Self::default()
        }
    }

    pub fn from_utterances<'a, I>(label: impl Into<String>, utterances: I) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut c = Self::new(label);
        for u in utterances {
            c.add_utterance(u);
        }
        c
    }

    pub fn add_utterance(&mut self, utterance: &str) {
        for bg in bigrams(utterance) {
            self.add(bg, 1);
        }
    }

    pub fn add(&mut self, bigram: String, count: u64) {
        if count == 0 {
            return;
        }
        *self.counts.entry(bigram).or_insert(0) += count;
        self.total += count;
    }

    pub fn get(&self, bigram: &str) -> u64 {
        self.counts.get(bigram).copied().unwrap_or(0)
    }

    /// Sum of two corpora.
    pub fn union(label: impl Into<String>, a: &Self, b: &Self) -> Self {
        let mut out = Self::new(label);
        for (k, v) in a.counts.iter().chain(&b.counts) {
            out.add(k.clone(), *v);
        }
        out
    }
}

/// Ranks every bigram of `a` or `b` by the z-score of its log-odds ratio,
/// most distinctive of `a` first.
///
/// The prior counts are rescaled so they sum to `alpha0`.
pub fn log_odds(
    a: &BigramCounts,
    b: &BigramCounts,
    prior: &BigramCounts,
    alpha0: f64,
) -> Result<Vec<(String, f64)>, AnalysisError> {
    if a.total == 0 {
        return Err(AnalysisError::EmptyCorpus(a.label.clone()));
    }
    if b.total == 0 {
        return Err(AnalysisError::EmptyCorpus(b.label.clone()));
    }
    if alpha0.is_nan() || alpha0 <= 0.0 || prior.total == 0 {
        return Err(AnalysisError::NonPositivePrior);
    }
    let scale = alpha0 / prior.total as f64;
    let (na, nb) = (a.total as f64, b.total as f64);
    let vocab: BTreeSet<&String> = a.counts.keys().chain(b.counts.keys()).collect();
    let mut out = Vec::with_capacity(vocab.len());
    for w in vocab {
        let alpha = prior.get(w) as f64 * scale;
        if alpha <= 0.0 {
            return Err(AnalysisError::PriorMissing(w.clone()));
        }
        let ya = a.get(w) as f64;
        let yb = b.get(w) as f64;
        let delta =
            libm::log((ya + alpha) / (na + alpha0 - ya - alpha)) - libm::log((yb + alpha) / (nb + alpha0 - yb - alpha));
        let variance = 1.0 / (ya + alpha) + 1.0 / (yb + alpha);
        out.push((w.clone(), delta / libm::sqrt(variance)));
    }
    out.sort_by(|x, y| y.1.total_cmp(&x.1).then_with(|| x.0.cmp(&y.0)));
    Ok(out)
}

/// [`log_odds`] with the union of both corpora as prior and
/// `alpha0 = PRIOR_SCALE * prior size`.
pub fn log_odds_with_union_prior(a: &BigramCounts, b: &BigramCounts) -> Result<Vec<(String, f64)>, AnalysisError> {
    let prior = BigramCounts::union("prior", a, b);
    log_odds(a, b, &prior, PRIOR_SCALE * prior.total as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuartileComparison {
    pub problem_id: String,
    pub q1_ms: f64,
    pub q3_ms: f64,
    pub long: BigramCounts,
    pub short: BigramCounts,
    /// Positive z: distinctive of long segments.
    pub ranked: Vec<(String, f64)>,
}

/// Contrasts the language of a problem's longest segments (duration at or
/// above the third quartile) with its shortest (at or below the first).
pub fn quartile_language_compare<'a, I>(corpus: I, problem_id: &str) -> Result<QuartileComparison, AnalysisError>
where
    I: IntoIterator<Item = (&'a Transcript, &'a Labeling)>,
{
    let target = RefLabel::Problem(problem_id.to_string());
    let mut segments: Vec<(f64, Vec<&'a str>)> = Vec::new();
    for (transcript, labeling) in corpus {
        let lines = transcript.lines();
        for span in labeling.spans() {
            if span.reference != target {
                continue;
            }
            let duration = (lines[span.end_line].end_ms - lines[span.start_line].start_ms) as f64;
            let utts = lines[span.start_line..=span.end_line]
                .iter()
                .map(|l| l.utterance.as_str())
                .collect();
            segments.push((duration, utts));
        }
    }
    if segments.len() < 4 {
        return Err(AnalysisError::TooFewSegments {
            problem: problem_id.to_string(),
            needed: 4,
            found: segments.len(),
        });
    }
    let mut durations: Vec<f64> = segments.iter().map(|s| s.0).collect();
    durations.sort_by(f64::total_cmp);
    let q1 = quantile(&durations, 0.25);
    let q3 = quantile(&durations, 0.75);
    let mut long = BigramCounts::new("long");
    let mut short = BigramCounts::new("short");
    for (d, utts) in &segments {
        if *d >= q3 {
            utts.iter().for_each(|u| long.add_utterance(u));
        }
        if *d <= q1 {
            utts.iter().for_each(|u| short.add_utterance(u));
        }
    }
    let ranked = log_odds_with_union_prior(&long, &short)?;
    Ok(QuartileComparison {
        problem_id: problem_id.to_string(),
        q1_ms: q1,
        q3_ms: q3,
        long,
        short,
        ranked,
    })
}

/// Contrasts the opening lines of falsely inserted segments (predicted
/// boundaries absent from gold) with correctly inserted ones.
pub fn insertion_language_compare<'a, I>(corpus: I) -> Result<Vec<(String, f64)>, AnalysisError>
where
    I: IntoIterator<Item = (&'a Transcript, &'a Labeling, &'a Labeling)>,
{
    let mut false_ins = BigramCounts::new("false insertions");
    let mut true_ins = BigramCounts::new("true insertions");
    for (transcript, pred, gold) in corpus {
        let gold_b: BTreeSet<usize> = gold.boundaries().into_iter().collect();
        for b in pred.boundaries() {
            let utt = &transcript.lines()[b].utterance;
            if gold_b.contains(&b) {
                true_ins.add_utterance(utt);
            } else {
                false_ins.add_utterance(utt);
            }
        }
    }
    log_odds_with_union_prior(&false_ins, &true_ins)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn counts(label: &str, items: &[(&str, u64)]) -> BigramCounts {
        let mut c = BigramCounts::new(label);
        for (k, v) in items {
            c.add((*k).into(), *v);
        }
        c
    }

    #[test]
    fn identical_corpora_give_zero() {
        let a = counts("a", &[("x_y", 3), ("y_z", 5)]);
        let b = counts("b", &[("x_y", 3), ("y_z", 5)]);
        for (_, z) in log_odds_with_union_prior(&a, &b).unwrap() {
            assert_eq!(z, 0.0);
        }
    }

    #[test]
    fn exclusive_bigram_is_positive() {
        let a = counts("a", &[("lets_say", 4), ("so_the", 10)]);
        let b = counts("b", &[("so_the", 10)]);
        let ranked = log_odds_with_union_prior(&a, &b).unwrap();
        assert_eq!(ranked[0].0, "lets_say");
        assert!(ranked[0].1 > 0.0);
    }

    #[test]
    fn hand_computed_value() {
        let a = counts("a", &[("p", 2), ("q", 1)]);
        let b = counts("b", &[("p", 1), ("q", 3)]);
        let prior = counts("prior", &[("p", 1), ("q", 1)]);
        let ranked = log_odds(&a, &b, &prior, 1.0).unwrap();
        // alpha = 0.5 each; na = 3, nb = 4
        let delta = libm::log(2.5 / 1.5) - libm::log(1.5 / 3.5);
        let z = delta / libm::sqrt(1.0 / 2.5 + 1.0 / 1.5);
        let got = ranked.iter().find(|r| r.0 == "p").unwrap().1;
        assert!((got - z).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        let a = counts("a", &[("p", 1)]);
        let empty = BigramCounts::new("e");
        assert!(matches!(
            log_odds_with_union_prior(&a, &empty),
            Err(AnalysisError::EmptyCorpus(_))
        ));
        assert_eq!(log_odds(&a, &a, &a, 0.0), Err(AnalysisError::NonPositivePrior));
        let other = counts("o", &[("q", 1)]);
        assert!(matches!(
            log_odds(&a, &other, &a, 1.0),
            Err(AnalysisError::PriorMissing(_))
        ));
    }

    #[test]
    fn too_few_segments() {
        let t = Transcript::new("t", vec![crate::model::Line::new(0, "s", "a b", 0, 10)]).unwrap();
        let l = Labeling::from_references(&[RefLabel::problem("A")]);
        assert!(matches!(
            quartile_language_compare([(&t, &l)], "A"),
            Err(AnalysisError::TooFewSegments { found: 1, .. })
        ));
    }
}
