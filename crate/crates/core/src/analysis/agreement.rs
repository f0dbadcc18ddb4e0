use alloc::vec::Vec;

use super::AnalysisError;

/// Cochran's Q over an annotators x positions boundary matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CochranQ {
    pub q: f64,
    /// Degrees of freedom of the chi-square reference, annotators - 1.
    pub df: usize,
    /// Every position was marked by all annotators or by none.
    pub complete_agreement: bool,
}

/// `Q = (m-1)(m * sum C_j^2 - T^2) / (m * T - sum R_i^2)` with `C_j` the
/// boundary total of annotator `j`, `R_i` the number of annotators marking
/// position `i` and `T` the grand total. A zero denominator means complete
/// agreement and yields `Q = 0`.
pub fn cochran_q_statistic(matrix: &[Vec<bool>]) -> Result<CochranQ, AnalysisError> {
    let m = matrix.len();
    if m < 2 {
        return Err(AnalysisError::TooSmall);
    }
    let n = matrix[0].len();
    if matrix.iter().any(|row| row.len() != n) {
        return Err(AnalysisError::Ragged);
    }
    if n < 2 {
        return Err(AnalysisError::TooSmall);
    }
    let col: Vec<f64> = matrix
        .iter()
        .map(|row| row.iter().filter(|&&x| x).count() as f64)
        .collect();
    let row: Vec<f64> = (0..n).map(|i| matrix.iter().filter(|r| r[i]).count() as f64).collect();
    let mf = m as f64;
    let total: f64 = col.iter().sum();
    let denom = mf * total - row.iter().map(|r| r * r).sum::<f64>();
    if denom == 0.0 {
        return Ok(CochranQ {
            q: 0.0,
            df: m - 1,
            complete_agreement: true,
        });
    }
    let numer = (mf - 1.0) * (mf * col.iter().map(|c| c * c).sum::<f64>() - total * total);
    Ok(CochranQ {
        q: numer / denom,
        df: m - 1,
        complete_agreement: false,
    })
}
