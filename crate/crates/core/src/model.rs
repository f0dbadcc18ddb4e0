//! Shared data model: transcripts, worksheets and per-line labelings.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// Errors raised when a model value violates its invariants.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("line {index}: end_ms {end_ms} precedes start_ms {start_ms}")]
    NegativeDuration { index: usize, start_ms: i64, end_ms: i64 },
    #[error("line at position {position} has index {found}, expected {position}")]
    NonConsecutiveIndex { position: usize, found: usize },
    #[error("start_ms decreases at line {index} ({previous} -> {current})")]
    NonMonotoneStart { index: usize, previous: i64, current: i64 },
    #[error("worksheet {0} has no problems")]
    EmptyWorksheet(String),
    #[error("duplicate problem id {0}")]
    DuplicateProblem(String),
    #[error("problem {0} has empty text")]
    EmptyProblemText(String),
    #[error("segment id {segment} recurs at line {line} after a different segment")]
    NonContiguousSegment { segment: i64, line: usize },
    #[error("segment id {segment} carries two different references (line {line})")]
    InconsistentReference { segment: i64, line: usize },
    #[error("labeling has {labeling} lines but transcript has {transcript}")]
    LengthMismatch { labeling: usize, transcript: usize },
}

/// One timestamped, speaker-attributed transcript line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Line {
    pub index: usize,
    pub speaker: String,
    pub utterance: String,
    pub start_ms: i64,
    pub end_ms: i64,
}

impl Line {
    pub fn new(
        index: usize,
        speaker: impl Into<String>,
        utterance: impl Into<String>,
        start_ms: i64,
        end_ms: i64,
    ) -> Self {
        Self {
            index,
            speaker: speaker.into(),
            utterance: utterance.into(),
            start_ms,
            end_ms,
        }
    }

    pub fn duration_ms(&self) -> i64 {
        self.end_ms - self.start_ms
    }
}

/// An ordered, validated sequence of lines.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transcript {
    id: String,
    lines: Vec<Line>,
}

impl Transcript {
    /// Validates index contiguity, non-negative durations and non-decreasing
    /// start times.
    pub fn new(id: impl Into<String>, lines: Vec<Line>) -> Result<Self, ModelError> {
        let mut previous: Option<i64> = None;
        for (position, line) in lines.iter().enumerate() {
            if line.index != position {
                return Err(ModelError::NonConsecutiveIndex {
                    position,
                    found: line.index,
                });
            }
            if line.end_ms < line.start_ms {
                return Err(ModelError::NegativeDuration {
                    index: line.index,
                    start_ms: line.start_ms,
                    end_ms: line.end_ms,
                });
            }
            if let Some(prev) = previous {
                if line.start_ms < prev {
                    return Err(ModelError::NonMonotoneStart {
                        index: line.index,
                        previous: prev,
                        current: line.start_ms,
                    });
                }
            }
            previous = Some(line.start_ms);
        }
        Ok(Self { id: id.into(), lines })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn lines(&self) -> &[Line] {
        &self.lines
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    /// Wall-clock span from the first line's start to the last line's end.
    pub fn duration_ms(&self) -> i64 {
        match (self.lines.first(), self.lines.last()) {
            (Some(first), Some(last)) => last.end_ms - first.start_ms,
            _ => 0,
        }
    }

    /// Concatenated utterances of lines `start..=end`, space separated.
    pub fn text_of(&self, start: usize, end: usize) -> String {
        let mut out = String::new();
        for line in &self.lines[start..=end] {
            if !out.is_empty() {
                out.push(' ');
            }
            out.push_str(&line.utterance);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Problem {
    pub id: String,
    pub text: String,
}

impl Problem {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
        }
    }
}

/// Reference corpus for a transcript: an ordered, non-empty list of problems
/// with unique ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Worksheet {
    id: String,
    problems: Vec<Problem>,
}

impl Worksheet {
    pub fn new(id: impl Into<String>, problems: Vec<Problem>) -> Result<Self, ModelError> {
        let id = id.into();
        if problems.is_empty() {
            return Err(ModelError::EmptyWorksheet(id));
        }
        let mut seen = BTreeSet::new();
        for p in &problems {
            if p.text.trim().is_empty() {
                return Err(ModelError::EmptyProblemText(p.id.clone()));
            }
            if !seen.insert(p.id.as_str()) {
                return Err(ModelError::DuplicateProblem(p.id.clone()));
            }
        }
        Ok(Self { id, problems })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn problems(&self) -> &[Problem] {
        &self.problems
    }

    pub fn len(&self) -> usize {
        self.problems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.problems.is_empty()
    }

    pub fn position(&self, problem_id: &str) -> Option<usize> {
        self.problems.iter().position(|p| p.id == problem_id)
    }

    pub fn contains(&self, problem_id: &str) -> bool {
        self.position(problem_id).is_some()
    }
}

/// What a segment is linked to.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub enum RefLabel {
    /// A problem on the session's worksheet.
    Problem(String),
    /// A problem is discussed but it is not on the worksheet (`-1`).
    NotInCorpus,
    /// No problem is discussed: informal talk or warm-up (`null`).
    #[default]
    Null,
}

impl RefLabel {
    pub fn problem(id: impl Into<String>) -> Self {
        RefLabel::Problem(id.into())
    }

    pub fn problem_id(&self) -> Option<&str> {
        match self {
            RefLabel::Problem(id) => Some(id),
            _ => None,
        }
    }

    /// Parses the textual encoding used in annotation files and model
    /// outputs: `"null"`, `"-1"` or a problem id.
    pub fn parse(raw: &str) -> Self {
        let raw = raw.trim();
        if raw.eq_ignore_ascii_case("null") || raw.is_empty() {
            RefLabel::Null
        } else if raw == "-1" {
            RefLabel::NotInCorpus
        } else {
            RefLabel::Problem(String::from(raw))
        }
    }
}

impl fmt::Display for RefLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RefLabel::Problem(id) => f.write_str(id),
            RefLabel::NotInCorpus => f.write_str("-1"),
            RefLabel::Null => f.write_str("null"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineLabel {
    pub segment: i64,
    pub reference: RefLabel,
}

/// Per-line assignment of segment id and reference.
///
/// Segment ids form contiguous runs and every line of a run shares one
/// reference. Only the run structure matters to the metrics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Labeling {
    per_line: Vec<LineLabel>,
}

impl Labeling {
    pub fn new(per_line: Vec<LineLabel>) -> Result<Self, ModelError> {
        let mut closed = BTreeSet::new();
        for i in 1..per_line.len() {
            let (prev, cur) = (&per_line[i - 1], &per_line[i]);
            if prev.segment == cur.segment {
                if prev.reference != cur.reference {
                    return Err(ModelError::InconsistentReference {
                        segment: cur.segment,
                        line: i,
                    });
                }
            } else {
                closed.insert(prev.segment);
                if closed.contains(&cur.segment) {
                    return Err(ModelError::NonContiguousSegment {
                        segment: cur.segment,
                        line: i,
                    });
                }
            }
        }
        Ok(Self { per_line })
    }

    /// Labeling with the given segment ids and every reference `Null`.
    pub fn from_segment_ids(ids: &[i64]) -> Result<Self, ModelError> {
        Self::new(
            ids.iter()
                .map(|&segment| LineLabel {
                    segment,
                    reference: RefLabel::Null,
                })
                .collect(),
        )
    }

    /// One segment per run of equal references.
    pub fn from_references(refs: &[RefLabel]) -> Self {
        let mut segment = 0;
        let per_line = refs
            .iter()
            .enumerate()
            .map(|(i, r)| {
                if i > 0 && refs[i - 1] != *r {
                    segment += 1;
                }
                LineLabel {
                    segment,
                    reference: r.clone(),
                }
            })
            .collect();
        Self { per_line }
    }

    /// Builds a labeling from segment lengths, all references `Null`.
    pub fn from_lengths(lengths: &[usize]) -> Self {
        let mut per_line = Vec::with_capacity(lengths.iter().sum());
        for (segment, &len) in lengths.iter().enumerate() {
            for _ in 0..len {
                per_line.push(LineLabel {
                    segment: segment as i64,
                    reference: RefLabel::Null,
                });
            }
        }
        Self { per_line }
    }

    /// A single segment covering `n` lines.
    pub fn single(n: usize, reference: RefLabel) -> Self {
        Self {
            per_line: (0..n)
                .map(|_| LineLabel {
                    segment: 0,
                    reference: reference.clone(),
                })
                .collect(),
        }
    }

    /// Segment starts at line 0 and at each position in `starts`.
    pub fn from_boundaries(n: usize, starts: &[usize]) -> Self {
        let starts: BTreeSet<usize> = starts.iter().copied().filter(|&s| s > 0 && s < n).collect();
        let mut segment = 0;
        let per_line = (0..n)
            .map(|i| {
                if starts.contains(&i) {
                    segment += 1;
                }
                LineLabel {
                    segment,
                    reference: RefLabel::Null,
                }
            })
            .collect();
        Self { per_line }
    }

    pub fn per_line(&self) -> &[LineLabel] {
        &self.per_line
    }

    pub fn len(&self) -> usize {
        self.per_line.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_line.is_empty()
    }

    pub fn segment_ids(&self) -> impl Iterator<Item = i64> + '_ {
        self.per_line.iter().map(|l| l.segment)
    }

    pub fn reference(&self, line: usize) -> &RefLabel {
        &self.per_line[line].reference
    }

    pub fn references(&self) -> impl Iterator<Item = &RefLabel> + '_ {
        self.per_line.iter().map(|l| &l.reference)
    }

    /// Positions `i` in `1..N` where line `i` opens a new segment. A boundary
    /// sits between line `i - 1` and line `i`.
    pub fn boundaries(&self) -> Vec<usize> {
        (1..self.per_line.len())
            .filter(|&i| self.per_line[i].segment != self.per_line[i - 1].segment)
            .collect()
    }

    pub fn num_segments(&self) -> usize {
        if self.per_line.is_empty() {
            0
        } else {
            self.boundaries().len() + 1
        }
    }

    /// Maximal runs of equal segment id, in order.
    pub fn spans(&self) -> Vec<SegmentSpan> {
        let mut out = Vec::new();
        let mut start = 0;
        for i in 1..=self.per_line.len() {
            if i == self.per_line.len() || self.per_line[i].segment != self.per_line[start].segment {
                out.push(SegmentSpan {
                    start_line: start,
                    end_line: i - 1,
                    reference: self.per_line[start].reference.clone(),
                });
                start = i;
            }
        }
        out
    }

    /// Copy with every line of segment `s` given `refs[s]`, where `s` counts
    /// runs in order.
    pub fn with_segment_references(&self, refs: &[RefLabel]) -> Self {
        let mut run = 0;
        let per_line = self
            .per_line
            .iter()
            .enumerate()
            .map(|(i, l)| {
                if i > 0 && self.per_line[i - 1].segment != l.segment {
                    run += 1;
                }
                LineLabel {
                    segment: l.segment,
                    reference: refs.get(run).cloned().unwrap_or_default(),
                }
            })
            .collect();
        Self { per_line }
    }

    /// Same run structure, every reference `Null`.
    pub fn without_references(&self) -> Self {
        Self {
            per_line: self
                .per_line
                .iter()
                .map(|l| LineLabel {
                    segment: l.segment,
                    reference: RefLabel::Null,
                })
                .collect(),
        }
    }

    pub fn check_length(&self, transcript: &Transcript) -> Result<(), ModelError> {
        if self.len() != transcript.len() {
            return Err(ModelError::LengthMismatch {
                labeling: self.len(),
                transcript: transcript.len(),
            });
        }
        Ok(())
    }
}

/// Contiguous inclusive line range with its reference.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentSpan {
    pub start_line: usize,
    pub end_line: usize,
    pub reference: RefLabel,
}

impl SegmentSpan {
    pub fn new(start_line: usize, end_line: usize, reference: RefLabel) -> Self {
        Self {
            start_line,
            end_line,
            reference,
        }
    }

    pub fn unlabeled(start_line: usize, end_line: usize) -> Self {
        Self::new(start_line, end_line, RefLabel::Null)
    }

    pub fn len(&self) -> usize {
        self.end_line + 1 - self.start_line
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// How lines not covered by any span are labeled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GapPolicy {
    /// Every maximal gap becomes its own segment with a `Null` reference.
    #[default]
    OwnSegment,
    /// Gap lines join the preceding span; a leading gap stays its own segment.
    MergeIntoPrevious,
}

/// Result of normalizing raw spans: the labeling plus repair notes.
#[derive(Debug, Clone, PartialEq)]
pub struct SpanRepair {
    pub labeling: Labeling,
    pub warnings: Vec<String>,
}

/// Normalizes possibly overlapping, gappy, out-of-range spans into a total
/// labeling over `n_lines`.
///
/// Spans are clamped to `[0, n_lines)` and stably sorted by start; each line
/// goes to the first span that covers it, and uncovered lines are handled by
/// `gap_policy`. Reversed spans (`start > end`) are dropped with a warning.
pub fn spans_to_labeling(spans: &[SegmentSpan], n_lines: usize, gap_policy: GapPolicy) -> SpanRepair {
    let mut warnings = Vec::new();
    if n_lines == 0 {
        return SpanRepair {
            labeling: Labeling { per_line: Vec::new() },
            warnings,
        };
    }
    let last = n_lines - 1;
    let mut cleaned: Vec<SegmentSpan> = Vec::with_capacity(spans.len());
    for span in spans {
        if span.start_line > span.end_line {
            warnings.push(format!(
                "dropped reversed span [{}, {}]",
                span.start_line, span.end_line
            ));
            continue;
        }
        let mut s = span.clone();
        if s.end_line > last || s.start_line > last {
            warnings.push(format!(
                "clamped span [{}, {}] to [0, {}]",
                s.start_line, s.end_line, last
            ));
            s.start_line = s.start_line.min(last);
            s.end_line = s.end_line.min(last);
        }
        cleaned.push(s);
    }
    cleaned.sort_by_key(|s| s.start_line);

    let mut owner: Vec<Option<usize>> = alloc::vec![None; n_lines];
    for (idx, span) in cleaned.iter().enumerate() {
        let mut overlapped = false;
        for slot in &mut owner[span.start_line..=span.end_line] {
            if slot.is_none() {
                *slot = Some(idx);
            } else {
                overlapped = true;
            }
        }
        if overlapped {
            warnings.push(format!(
                "span [{}, {}] overlaps an earlier span",
                span.start_line, span.end_line
            ));
        }
    }

    if gap_policy == GapPolicy::MergeIntoPrevious {
        for i in 1..n_lines {
            if owner[i].is_none() {
                owner[i] = owner[i - 1];
            }
        }
    }

    let mut per_line = Vec::with_capacity(n_lines);
    let mut segment = 0i64;
    for i in 0..n_lines {
        if i > 0 && owner[i] != owner[i - 1] {
            segment += 1;
        }
        let reference = owner[i]
            .map(|idx| cleaned[idx].reference.clone())
            .unwrap_or(RefLabel::Null);
        per_line.push(LineLabel { segment, reference });
    }
    SpanRepair {
        labeling: Labeling { per_line },
        warnings,
    }
}

/// Inverse of [`spans_to_labeling`] on gap-free, disjoint input.
pub fn labeling_to_spans(labeling: &Labeling) -> Vec<SegmentSpan> {
    labeling.spans()
}

/// Boundary positions of a labeling; see [`Labeling::boundaries`].
pub fn boundaries(labeling: &Labeling) -> Vec<usize> {
    labeling.boundaries()
}

/// A transcript with its worksheet and, when annotated, its gold labeling.
#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub transcript: Transcript,
    pub worksheet: Worksheet,
    pub gold: Option<Labeling>,
}

impl Session {
    pub fn new(transcript: Transcript, worksheet: Worksheet, gold: Option<Labeling>) -> Self {
        Self {
            transcript,
            worksheet,
            gold,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn a() -> RefLabel {
        RefLabel::problem("A")
    }
    fn b() -> RefLabel {
        RefLabel::problem("B")
    }

    fn summary(l: &Labeling) -> Vec<(usize, usize, RefLabel)> {
        l.spans()
            .into_iter()
            .map(|s| (s.start_line, s.end_line, s.reference))
            .collect()
    }

    #[test]
    fn exact_cover() {
        let spans = vec![SegmentSpan::new(0, 4, a()), SegmentSpan::new(5, 9, b())];
        let out = spans_to_labeling(&spans, 10, GapPolicy::default());
        assert!(out.warnings.is_empty());
        assert_eq!(out.labeling.num_segments(), 2);
        assert_eq!(summary(&out.labeling), vec![(0, 4, a()), (5, 9, b())]);
        assert_eq!(labeling_to_spans(&out.labeling), spans);
    }

    #[test]
    fn gaps_become_null_segments() {
        let out = spans_to_labeling(&[SegmentSpan::new(2, 4, a())], 6, GapPolicy::OwnSegment);
        assert_eq!(
            summary(&out.labeling),
            vec![(0, 1, RefLabel::Null), (2, 4, a()), (5, 5, RefLabel::Null)]
        );
    }

    #[test]
    fn merge_gap_policy() {
        let out = spans_to_labeling(&[SegmentSpan::new(2, 4, a())], 6, GapPolicy::MergeIntoPrevious);
        assert_eq!(summary(&out.labeling), vec![(0, 1, RefLabel::Null), (2, 5, a())]);
    }

    #[test]
    fn overlaps_first_span_wins() {
        let spans = vec![SegmentSpan::new(4, 9, b()), SegmentSpan::new(0, 5, a())];
        let out = spans_to_labeling(&spans, 10, GapPolicy::default());
        assert_eq!(summary(&out.labeling), vec![(0, 5, a()), (6, 9, b())]);
        assert_eq!(out.warnings.len(), 1);
    }

    #[test]
    fn empty_spans_cover_everything() {
        let out = spans_to_labeling(&[], 7, GapPolicy::default());
        assert_eq!(summary(&out.labeling), vec![(0, 6, RefLabel::Null)]);
    }

    #[test]
    fn out_of_range_is_clamped() {
        let out = spans_to_labeling(&[SegmentSpan::new(3, 40, a())], 5, GapPolicy::default());
        assert_eq!(summary(&out.labeling), vec![(0, 2, RefLabel::Null), (3, 4, a())]);
        assert_eq!(out.warnings.len(), 1);
    }

    #[test]
    fn spans_of_runs() {
        let l = Labeling::from_segment_ids(&[0; 10]).unwrap();
        assert_eq!(summary(&l), vec![(0, 9, RefLabel::Null)]);
        let l = Labeling::from_segment_ids(&[0, 0, 1, 1, 1]).unwrap();
        assert_eq!(summary(&l), vec![(0, 1, RefLabel::Null), (2, 4, RefLabel::Null)]);
    }

    #[test]
    fn boundary_positions() {
        assert!(Labeling::from_segment_ids(&[3; 5]).unwrap().boundaries().is_empty());
        assert_eq!(Labeling::from_segment_ids(&[0, 0, 1, 1]).unwrap().boundaries(), vec![2]);
        assert_eq!(Labeling::from_segment_ids(&[0, 1, 2]).unwrap().boundaries(), vec![1, 2]);
    }

    #[test]
    fn rejects_recurring_segment() {
        assert!(matches!(
            Labeling::from_segment_ids(&[0, 0, 1, 0]),
            Err(ModelError::NonContiguousSegment { segment: 0, line: 3 })
        ));
    }

    #[test]
    fn rejects_mixed_reference_in_segment() {
        let per_line = vec![
            LineLabel {
                segment: 0,
                reference: a(),
            },
            LineLabel {
                segment: 0,
                reference: b(),
            },
        ];
        assert!(matches!(
            Labeling::new(per_line),
            Err(ModelError::InconsistentReference { .. })
        ));
    }

    #[test]
    fn transcript_validation() {
        let ok = Transcript::new(
            "t",
            vec![
                Line::new(0, "[TUTOR]", "hi", 0, 10),
                Line::new(1, "[STUDENT]", "yo", 10, 20),
            ],
        );
        assert!(ok.is_ok());
        let bad = Transcript::new(
            "t",
            vec![
                Line::new(0, "a", "x", 0, 1),
                Line::new(1, "a", "x", 5000, 5001),
                Line::new(2, "a", "x", 3000, 3001),
            ],
        );
        assert!(matches!(bad, Err(ModelError::NonMonotoneStart { index: 2, .. })));
        let bad = Transcript::new("t", vec![Line::new(1, "a", "x", 0, 1)]);
        assert!(matches!(bad, Err(ModelError::NonConsecutiveIndex { .. })));
        let bad = Transcript::new("t", vec![Line::new(0, "a", "x", 5, 1)]);
        assert!(matches!(bad, Err(ModelError::NegativeDuration { .. })));
    }

    #[test]
    fn worksheet_validation() {
        assert!(Worksheet::new("w", vec![]).is_err());
        let dup = vec![Problem::new("P3", "x"), Problem::new("P3", "y")];
        assert_eq!(Worksheet::new("w", dup), Err(ModelError::DuplicateProblem("P3".into())));
    }

    #[test]
    fn ref_label_text_encoding() {
        assert_eq!(RefLabel::parse("NULL"), RefLabel::Null);
        assert_eq!(RefLabel::parse("-1"), RefLabel::NotInCorpus);
        assert_eq!(RefLabel::parse("P7"), RefLabel::problem("P7"));
        for r in [RefLabel::Null, RefLabel::NotInCorpus, RefLabel::problem("x")] {
            assert_eq!(RefLabel::parse(&alloc::string::ToString::to_string(&r)), r);
        }
    }
}
