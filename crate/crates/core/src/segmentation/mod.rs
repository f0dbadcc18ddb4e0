//! Segmenters that look only at the transcript.

mod boundary_words;
mod texttiling;

pub use boundary_words::{fit_boundary_words, BoundaryWordModel, FitError};
pub use texttiling::{TextTiling, TextTilingParams};

use crate::model::{Labeling, Transcript};

/// Anything that splits a transcript into segments. Output references are
/// all `Null`; linking happens in retrieval.
pub trait Segmenter {
    fn segment(&self, transcript: &Transcript) -> Labeling;
}

/// Every line is its own segment.
#[derive(Debug, Clone, Copy, Default)]
pub struct PerLine;

impl Segmenter for PerLine {
    fn segment(&self, transcript: &Transcript) -> Labeling {
        let starts: alloc::vec::Vec<usize> = (1..transcript.len()).collect();
        Labeling::from_boundaries(transcript.len(), &starts)
    }
}

/// The whole transcript is one segment.
#[derive(Debug, Clone, Copy, Default)]
pub struct Whole;

impl Segmenter for Whole {
    fn segment(&self, transcript: &Transcript) -> Labeling {
        Labeling::single(transcript.len(), crate::model::RefLabel::Null)
    }
}
