//! The three prompt templates and their rendering.

use posr_core::model::{SegmentSpan, Transcript, Worksheet};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    IndependentSegmentation,
    IndependentRetrieval,
    JointPosr,
}

impl PromptKind {
    pub const ALL: [PromptKind; 3] = [
        PromptKind::IndependentSegmentation,
        PromptKind::IndependentRetrieval,
        PromptKind::JointPosr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PromptKind::IndependentSegmentation => "independent_segmentation",
            PromptKind::IndependentRetrieval => "independent_retrieval",
            PromptKind::JointPosr => "joint_posr",
        }
    }

    /// `(system, user)` template text.
    pub fn template(self) -> (&'static str, &'static str) {
        let (s, u) = match self {
            PromptKind::IndependentSegmentation => (
                include_str!("../../assets/prompts/independent_segmentation.system.txt"),
                include_str!("../../assets/prompts/independent_segmentation.user.txt"),
            ),
            PromptKind::IndependentRetrieval => (
                include_str!("../../assets/prompts/independent_retrieval.system.txt"),
                include_str!("../../assets/prompts/independent_retrieval.user.txt"),
            ),
            PromptKind::JointPosr => (
                include_str!("../../assets/prompts/joint_posr.system.txt"),
                include_str!("../../assets/prompts/joint_posr.user.txt"),
            ),
        };
        (strip_final_newline(s), strip_final_newline(u))
    }
}

fn strip_final_newline(s: &str) -> &str {
    s.strip_suffix('\n').unwrap_or(s)
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("{0} prompt needs a worksheet")]
    MissingWorksheet(&'static str),
    #[error("{0} prompt needs a segment")]
    MissingSegment(&'static str),
    #[error("segment {start}..={end} lies outside a transcript of {n} lines")]
    SegmentOutOfRange { start: usize, end: usize, n: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub system: String,
    pub user: String,
}

/// `{idx} {speaker}: {utterance}` per line.
pub fn render_indexed(transcript: &Transcript) -> String {
    transcript
        .lines()
        .iter()
        .map(|l| format!("{} {}: {}", l.index, l.speaker, l.utterance))
        .collect::<Vec<_>>()
        .join("\n")
}

/// `{speaker}: {utterance}` for the lines of one segment.
pub fn render_segment(transcript: &Transcript, start: usize, end: usize) -> String {
    transcript.lines()[start..=end]
        .iter()
        .map(|l| format!("{}: {}", l.speaker, l.utterance))
        .collect::<Vec<_>>()
        .join("\n")
}

/// `Problem ID {id}: {text}` per problem.
pub fn render_problems(worksheet: &Worksheet) -> String {
    worksheet
        .problems()
        .iter()
        .map(|p| format!("Problem ID {}: {}", p.id, p.text))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Replaces `{name}` placeholders in one left-to-right pass, so substituted
/// text is never rescanned.
fn fill(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    'scan: while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let tail = &rest[open..];
        for (name, value) in values {
            let key_len = name.len() + 2;
            if tail.len() >= key_len && tail.as_bytes()[key_len - 1] == b'}' && &tail[1..key_len - 1] == *name {
                out.push_str(value);
                rest = &tail[key_len..];
                continue 'scan;
            }
        }
        out.push('{');
        rest = &tail[1..];
    }
    out.push_str(rest);
    out
}

pub fn build_prompt(
    kind: PromptKind,
    transcript: &Transcript,
    worksheet: Option<&Worksheet>,
    segment: Option<&SegmentSpan>,
) -> Result<Prompt, PromptError> {
    let (system, user) = kind.template();
    let user = match kind {
        PromptKind::IndependentSegmentation => fill(user, &[("transcript", &render_indexed(transcript))]),
        PromptKind::IndependentRetrieval => {
            let w = worksheet.ok_or(PromptError::MissingWorksheet(kind.name()))?;
            let s = segment.ok_or(PromptError::MissingSegment(kind.name()))?;
            if s.start_line > s.end_line || s.end_line >= transcript.len() {
                return Err(PromptError::SegmentOutOfRange {
                    start: s.start_line,
                    end: s.end_line,
                    n: transcript.len(),
                });
            }
            fill(
                user,
                &[
                    ("transcript", &render_segment(transcript, s.start_line, s.end_line)),
                    ("problems", &render_problems(w)),
                ],
            )
        }
        PromptKind::JointPosr => {
            let w = worksheet.ok_or(PromptError::MissingWorksheet(kind.name()))?;
            fill(
                user,
                &[
                    ("transcript", &render_indexed(transcript)),
                    ("problems", &render_problems(w)),
                ],
            )
        }
    };
    Ok(Prompt {
        system: system.to_string(),
        user,
    })
}
