//! Inter-annotator agreement on boundary placement.

use posr_core::analysis::{cochran_q_statistic, AnalysisError};
use posr_core::model::Labeling;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CochranResult {
    pub q: f64,
    pub df: usize,
    pub p_value: f64,
    pub complete_agreement: bool,
}

/// Cochran's Q with its chi-square p-value (`annotators - 1` degrees of
/// freedom). Complete agreement gives `Q = 0, p = 1`.
pub fn cochran_q(matrix: &[Vec<bool>]) -> Result<CochranResult, AnalysisError> {
    let stat = cochran_q_statistic(matrix)?;
    let p_value = if stat.complete_agreement || stat.q <= 0.0 {
        1.0
    } else {
        let chi = ChiSquared::new(stat.df as f64).expect("df >= 1");
        chi.sf(stat.q)
    };
    Ok(CochranResult {
        q: stat.q,
        df: stat.df,
        p_value,
        complete_agreement: stat.complete_agreement,
    })
}

/// Annotators x positions matrix; position `i` (for `1..N`) is true when
/// the annotator starts a segment at line `i`.
pub fn boundary_matrix(labelings: &[&Labeling]) -> Vec<Vec<bool>> {
    labelings
        .iter()
        .map(|l| {
            let b: std::collections::BTreeSet<usize> = l.boundaries().into_iter().collect();
            (1..l.len()).map(|i| b.contains(&i)).collect()
        })
        .collect()
}
