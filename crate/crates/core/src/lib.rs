//! Core algorithms for problem-oriented segmentation and retrieval over
//! timestamped conversation transcripts.
//!
//! A transcript is split into contiguous segments and every segment is linked
//! to one entry of a reference corpus (a worksheet of problems), or to nothing.
//! This crate holds everything that does not touch the filesystem or network:
//!
//! * [`model`]: transcripts, worksheets, per-line labelings and span conversion.
//! * [`metrics`]: Pk, WindowDiff, their time-windowed variants, SRS and cost.
//! * [`segmentation`]: boundary-word and TextTiling segmenters.
//! * [`retrieval`]: Jaccard, TF-IDF and BM25 scoring, top-10 normalization,
//!   threshold calibration.
//! * [`analysis`]: log-odds lexical comparison, Cochran's Q, talk time.
//!
//! The crate is `no_std` and only needs `alloc`.
#![no_std]

extern crate alloc;

pub mod analysis;
pub mod metrics;
pub mod model;
pub mod retrieval;
pub mod segmentation;
pub mod text;

pub use metrics::{evaluate, EvalReport, MetricError};
pub use model::{
    Labeling, Line, LineLabel, ModelError, Problem, RefLabel, SegmentSpan, Session, Transcript, Worksheet,
};
