use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use super::Segmenter;
use crate::model::{Labeling, Transcript};
use crate::text::tokenize;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FitError {
    #[error("no annotated training transcripts")]
    EmptyTrainSet,
    #[error("k must be at least 1")]
    ZeroK,
}

/// The `k` most frequent tokens of segment-opening lines in a training set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundaryWordModel {
    words: Vec<String>,
    k: usize,
}

impl BoundaryWordModel {
    pub fn new(words: Vec<String>, k: usize) -> Self {
        let mut seen = BTreeSet::new();
        let words = words
            .into_iter()
            .map(|w| w.to_lowercase())
            .filter(|w| seen.insert(w.clone()))
            .take(k)
            .collect();
        Self { words, k }
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn k(&self) -> usize {
        self.k
    }
}

/// Counts the tokens of every line that opens a gold segment (line 0 of a
/// transcript is not a boundary and is skipped) and keeps the `k` most
/// frequent. Ties go to the lexicographically smaller token.
pub fn fit_boundary_words<'a, I>(train: I, k: usize) -> Result<BoundaryWordModel, FitError>
where
    I: IntoIterator<Item = (&'a Transcript, &'a Labeling)>,
{
    if k == 0 {
        return Err(FitError::ZeroK);
    }
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut seen_any = false;
    for (transcript, gold) in train {
        seen_any = true;
        for b in gold.boundaries() {
            for tok in tokenize(&transcript.lines()[b].utterance) {
                *counts.entry(tok).or_insert(0) += 1;
            }
        }
    }
    if !seen_any {
        return Err(FitError::EmptyTrainSet);
    }
    let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
    // BTreeMap order is lexicographic, and the sort is stable
    ranked.sort_by_key(|r| core::cmp::Reverse(r.1));
    Ok(BoundaryWordModel::new(
        ranked.into_iter().take(k).map(|(w, _)| w).collect(),
        k,
    ))
}

impl Segmenter for BoundaryWordModel {
    /// Opens a segment at every line (after line 0) containing any model word.
    fn segment(&self, transcript: &Transcript) -> Labeling {
        let words: BTreeSet<&str> = self.words.iter().map(String::as_str).collect();
        let starts: Vec<usize> = transcript
            .lines()
            .iter()
            .skip(1)
            .filter(|line| tokenize(&line.utterance).iter().any(|t| words.contains(t.as_str())))
            .map(|line| line.index)
            .collect();
        Labeling::from_boundaries(transcript.len(), &starts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Line;
    use alloc::vec;

    fn transcript(utts: &[&str]) -> Transcript {
        Transcript::new(
            "t",
            utts.iter()
                .enumerate()
                .map(|(i, u)| Line::new(i, "[TUTOR]", *u, i as i64, i as i64 + 1))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn learns_opener_words() {
        let t = transcript(&[
            "hello everyone",
            "okay next question is about lines",
            "slope is two",
            "okay next question now circles",
            "radius five",
        ]);
        let gold = Labeling::from_boundaries(5, &[1, 3]);
        let m = fit_boundary_words([(&t, &gold)], 3).unwrap();
        assert_eq!(m.words(), ["next", "okay", "question"]);
    }

    #[test]
    fn tie_break_is_lexicographic() {
        let t = transcript(&["x", "beta alpha", "y"]);
        let gold = Labeling::from_boundaries(3, &[1]);
        let m = fit_boundary_words([(&t, &gold)], 1).unwrap();
        assert_eq!(m.words(), ["alpha"]);
    }

    #[test]
    fn dominant_token_k1() {
        let t = transcript(&["a", "so so so then", "b", "so what"]);
        let gold = Labeling::from_boundaries(4, &[1, 3]);
        let m = fit_boundary_words([(&t, &gold)], 1).unwrap();
        assert_eq!(m.words(), ["so"]);
    }

    #[test]
    fn empty_train_and_zero_k() {
        let empty: Vec<(&Transcript, &Labeling)> = vec![];
        assert_eq!(fit_boundary_words(empty, 10), Err(FitError::EmptyTrainSet));
        let t = transcript(&["a"]);
        let g = Labeling::from_boundaries(1, &[]);
        assert_eq!(fit_boundary_words([(&t, &g)], 0), Err(FitError::ZeroK));
    }

    #[test]
    fn segments_on_model_words() {
        let m = BoundaryWordModel::new(vec!["question".into()], 10);
        let t = transcript(&["a", "b", "c", "the QUESTION is", "d", "e"]);
        assert_eq!(m.segment(&t).boundaries(), vec![3]);
        let none = transcript(&["a", "b", "c"]);
        assert_eq!(m.segment(&none).num_segments(), 1);
        let all = transcript(&["question", "question", "question"]);
        assert_eq!(m.segment(&all).num_segments(), 3);
    }
}
