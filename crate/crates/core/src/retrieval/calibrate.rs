//! Cross-validated threshold search on gold segments.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::{score_raw, LexicalIndex, RetrievalError, RetrieverConfig};
use crate::model::{RefLabel, SegmentSpan, Session};
use crate::text::tokenize;

/// Grid points are `i / GRID_STEPS` for `i` in `0..=GRID_STEPS`.
pub const GRID_STEPS: usize = 100;

/// One gold segment reduced to what threshold search needs.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationItem {
    /// Fold grouping key (transcript position); all segments of a
    /// transcript land in the same fold.
    pub group: usize,
    /// Best problem and its (normalized, when configured) score. `None`
    /// when the query has no tokens.
    pub best: Option<(RefLabel, f64)>,
    pub gold: RefLabel,
}

impl CalibrationItem {
    pub fn predict(&self, threshold: f64) -> RefLabel {
        match &self.best {
            Some((label, score)) if *score >= threshold => label.clone(),
            _ => RefLabel::Null,
        }
    }
}

/// Accuracy at each grid threshold. `Null` predicted for a `Null` gold
/// counts as correct.
pub fn grid_accuracy(items: &[&CalibrationItem]) -> Vec<f64> {
    (0..=GRID_STEPS)
        .map(|i| {
            let t = i as f64 / GRID_STEPS as f64;
            let hits = items.iter().filter(|it| it.predict(t) == it.gold).count();
            if items.is_empty() {
                0.0
            } else {
                hits as f64 / items.len() as f64
            }
        })
        .collect()
}

/// Grid index in the middle of the first run of maximal accuracy.
fn best_index(acc: &[f64]) -> usize {
    let max = acc.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let first = acc.iter().position(|&a| a == max).unwrap_or(0);
    let mut last = first;
    while last + 1 < acc.len() && acc[last + 1] == max {
        last += 1;
    }
    (first + last) / 2
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub threshold: f64,
    pub per_fold: Vec<f64>,
    pub folds: usize,
    pub warnings: Vec<String>,
}

/// Assigns groups to folds round-robin along `order` (a permutation of the
/// group indices, typically a seeded shuffle).
pub fn folds_from_order(order: &[usize], folds: usize) -> Vec<usize> {
    let mut fold_of = alloc::vec![0; order.len()];
    for (pos, &g) in order.iter().enumerate() {
        fold_of[g] = pos % folds.max(1);
    }
    fold_of
}

/// For each fold, finds the grid threshold with the best accuracy on the
/// held-out fold and returns the mean of those thresholds.
///
/// `fold_of[g]` is the fold of group `g`. With fewer groups than `folds`
/// the fold count drops to the group count and a warning is recorded.
pub fn calibrate_threshold(items: &[CalibrationItem], fold_of: &[usize], folds: usize) -> Calibration {
    let mut warnings = Vec::new();
    let groups = fold_of.len();
    let mut k = folds.max(1);
    let fold_of: Vec<usize> = if groups < k {
        warnings.push(format!("{groups} transcripts for {k} folds; using {groups} folds"));
        k = groups.max(1);
        (0..groups).collect()
    } else {
        fold_of.to_vec()
    };
    let mut per_fold = Vec::new();
    for fold in 0..k {
        let held: Vec<&CalibrationItem> = items
            .iter()
            .filter(|it| fold_of.get(it.group).copied() == Some(fold))
            .collect();
        if held.is_empty() {
            warnings.push(format!("fold {fold} has no segments; skipped"));
            continue;
        }
        per_fold.push(best_index(&grid_accuracy(&held)) as f64 / GRID_STEPS as f64);
    }
    let threshold = if per_fold.is_empty() {
        0.0
    } else {
        per_fold.iter().sum::<f64>() / per_fold.len() as f64
    };
    Calibration {
        threshold,
        per_fold,
        folds: k,
        warnings,
    }
}

/// Items for every gold segment of every annotated session, using a
/// lexical scorer. Sessions without gold labels are skipped.
pub fn calibration_items(
    config: &RetrieverConfig,
    sessions: &[Session],
) -> Result<Vec<CalibrationItem>, RetrievalError> {
    let lexical = config.lexical().ok_or(RetrievalError::ExternalScoresRequired)?;
    let mut out = Vec::new();
    for (group, s) in sessions.iter().enumerate() {
        let Some(gold) = &s.gold else { continue };
        let index = LexicalIndex::fit(lexical, &s.worksheet);
        for span in gold.spans() {
            let text = s.transcript.text_of(span.start_line, span.end_line);
            let query = tokenize(&text);
            let best = if query.is_empty() {
                None
            } else {
                best_of(config, index.scores(&query), s)?
            };
            out.push(CalibrationItem {
                group,
                best,
                gold: span.reference.clone(),
            });
        }
    }
    Ok(out)
}

/// Items built from caller-supplied raw scores per (session, gold span).
pub fn calibration_items_with<F>(
    config: &RetrieverConfig,
    sessions: &[Session],
    mut scorer: F,
) -> Result<Vec<CalibrationItem>, RetrievalError>
where
    F: FnMut(usize, &SegmentSpan, &str) -> Vec<f64>,
{
    let mut out = Vec::new();
    for (group, s) in sessions.iter().enumerate() {
        let Some(gold) = &s.gold else { continue };
        for span in gold.spans() {
            let text = s.transcript.text_of(span.start_line, span.end_line);
            out.push(CalibrationItem {
                group,
                best: best_of(config, scorer(group, &span, &text), s)?,
                gold: span.reference.clone(),
            });
        }
    }
    Ok(out)
}

fn best_of(
    config: &RetrieverConfig,
    raw: Vec<f64>,
    session: &Session,
) -> Result<Option<(RefLabel, f64)>, RetrievalError> {
    let scored = score_raw(config, raw, &session.worksheet)?;
    Ok(scored
        .best()
        .map(|(i, score)| (RefLabel::Problem(session.worksheet.problems()[i].id.clone()), score)))
}
