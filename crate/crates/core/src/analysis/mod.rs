//! Downstream analyses: lexical log-odds, annotator agreement, talk time.

mod agreement;
mod log_odds;
mod talk_time;

pub use agreement::{cochran_q_statistic, CochranQ};
pub use log_odds::{
    insertion_language_compare, log_odds, log_odds_with_union_prior, quartile_language_compare, BigramCounts,
    QuartileComparison, PRIOR_SCALE,
};
pub use talk_time::{quantile, talk_time, DurationSummary, TalkTimeTable};

use alloc::string::String;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalysisError {
    #[error("corpus {0} has no bigrams")]
    EmptyCorpus(String),
    #[error("prior strength must be positive")]
    NonPositivePrior,
    #[error("prior has no mass for bigram {0}")]
    PriorMissing(String),
    #[error("need at least {needed} segments of problem {problem}, found {found}")]
    TooFewSegments {
        problem: String,
        needed: usize,
        found: usize,
    },
    #[error("agreement needs at least 2 annotators and 2 positions")]
    TooSmall,
    #[error("annotator rows differ in length")]
    Ragged,
}
