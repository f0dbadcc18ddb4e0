//! Seeded synthetic tutoring corpora with known segmentations.
//!
//! Every problem owns a private vocabulary of pseudo-words; its worksheet
//! text uses only those words. Lines of a problem segment mix that
//! vocabulary with conversational filler that never appears in any problem
//! text, so lexical retrieval is learnable. `vocab_overlap` is the chance
//! that a content word is borrowed from another problem instead.

use posr_core::model::{Labeling, Line, LineLabel, Problem, RefLabel, Session, Transcript, Worksheet};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

pub const FILLER: &[&str] = &[
    "so", "okay", "the", "we", "you", "is", "it", "that", "what", "right", "yeah", "um", "like", "do", "this", "and",
    "to", "a", "of", "can", "i", "think", "just", "now", "well", "go", "see", "here", "there", "get", "know", "how",
    "why", "then", "good", "yes", "no", "maybe",
];

const SYLLABLES: &[&str] = &[
    "ba", "ke", "mi", "lo", "tu", "ra", "ze", "fi", "no", "gu", "pa", "ve", "si", "do", "ku", "ne", "ha", "jo", "wi",
    "ry",
];

const MIN_LINE_MS: f64 = 500.0;
const MAX_LINE_MS: f64 = 60_000.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_transcripts: usize,
    /// Inclusive range of lines per segment.
    pub lines_per_segment: (usize, usize),
    /// Inclusive range of segments per transcript.
    pub segments_per_transcript: (usize, usize),
    pub n_problems: usize,
    /// Probability that a content word comes from another problem.
    pub vocab_overlap: f64,
    /// Probability that a segment is informal talk linked to nothing.
    pub null_fraction: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_transcripts: 20,
            lines_per_segment: (3, 20),
            segments_per_transcript: (4, 12),
            n_problems: 16,
            vocab_overlap: 0.0,
            null_fraction: 0.2,
            seed: 0,
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SpecError {
    #[error("{0} must be a non-empty positive range")]
    Range(&'static str),
    #[error("{0} must be positive")]
    Zero(&'static str),
    #[error("{0} must lie in [0, 1]")]
    Fraction(&'static str),
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), SpecError> {
        let (a, b) = self.lines_per_segment;
        if a == 0 || a > b {
            return Err(SpecError::Range("lines_per_segment"));
        }
        let (a, b) = self.segments_per_transcript;
        if a == 0 || a > b {
            return Err(SpecError::Range("segments_per_transcript"));
        }
        if self.n_transcripts == 0 {
            return Err(SpecError::Zero("n_transcripts"));
        }
        if self.n_problems == 0 {
            return Err(SpecError::Zero("n_problems"));
        }
        for (name, v) in [
            ("vocab_overlap", self.vocab_overlap),
            ("null_fraction", self.null_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(SpecError::Fraction(name));
            }
        }
        Ok(())
    }
}

/// Generated sessions; every session carries its gold labeling.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub spec: SyntheticSpec,
    pub worksheet: Worksheet,
    pub sessions: Vec<Session>,
}

/// Pseudo-word number `n`: three or more syllables, never a filler word.
fn pseudo_word(n: usize) -> String {
    let base = SYLLABLES.len();
    let cube = base * base * base;
    // bijective shuffle of the three-syllable range
    let mut x = if n < cube { (n * 2971 + 1234) % cube } else { n };
    let mut s = String::new();
    for _ in 0..3 {
        s.push_str(SYLLABLES[x % base]);
        x /= base;
    }
    while x > 0 {
        s.push_str(SYLLABLES[x % base]);
        x /= base;
    }
    s
}

const WORDS_PER_PROBLEM: usize = 12;
const CONTENT_RATE: f64 = 0.45;

fn problem_vocab(p: usize) -> Vec<String> {
    (0..WORDS_PER_PROBLEM)
        .map(|j| pseudo_word(p * WORDS_PER_PROBLEM + j))
        .collect()
}

/// Deterministic for a fixed spec.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticCorpus, SpecError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let vocabs: Vec<Vec<String>> = (0..spec.n_problems).map(problem_vocab).collect();
    let worksheet = Worksheet::new(
        "synthetic",
        vocabs
            .iter()
            .enumerate()
            .map(|(i, v)| Problem::new(format!("P{}", i + 1), v.join(" ")))
            .collect(),
    )
    .expect("generated worksheet is valid");
    let durations = LogNormal::new(3000f64.ln(), 0.9).expect("valid log-normal");

    let mut sessions = Vec::with_capacity(spec.n_transcripts);
    for t in 0..spec.n_transcripts {
        let n_segments = rng.random_range(spec.segments_per_transcript.0..=spec.segments_per_transcript.1);
        let mut lines = Vec::new();
        let mut labels = Vec::new();
        let mut clock: i64 = 0;
        let mut previous: Option<usize> = None;
        for segment in 0..n_segments {
            let problem = if rng.random_bool(1.0 - spec.null_fraction) {
                let mut p = rng.random_range(0..spec.n_problems);
                if spec.n_problems > 1 {
                    while Some(p) == previous {
                        p = rng.random_range(0..spec.n_problems);
                    }
                }
                Some(p)
            } else {
                None
            };
            previous = problem;
            let reference = problem
                .map(|p| RefLabel::Problem(worksheet.problems()[p].id.clone()))
                .unwrap_or(RefLabel::Null);
            let n_lines = rng.random_range(spec.lines_per_segment.0..=spec.lines_per_segment.1);
            for l in 0..n_lines {
                let n_tokens = rng.random_range(4..=12);
                let mut words: Vec<&str> = Vec::with_capacity(n_tokens);
                for i in 0..n_tokens {
                    let content = problem.is_some() && (l == 0 && i == 0 || rng.random_bool(CONTENT_RATE));
                    let w = match problem {
                        Some(p) if content => {
                            let source = if spec.n_problems > 1 && rng.random_bool(spec.vocab_overlap) {
                                let mut q = rng.random_range(0..spec.n_problems);
                                while q == p {
                                    q = rng.random_range(0..spec.n_problems);
                                }
                                q
                            } else {
                                p
                            };
                            vocabs[source].choose(&mut rng).expect("vocab").as_str()
                        }
                        _ => FILLER.choose(&mut rng).expect("filler"),
                    };
                    words.push(w);
                }
                let d = durations.sample(&mut rng).clamp(MIN_LINE_MS, MAX_LINE_MS).round() as i64;
                let speaker = if rng.random_bool(0.45) { "[TUTOR]" } else { "[STUDENT]" };
                let index = lines.len();
                lines.push(Line::new(index, speaker, words.join(" "), clock, clock + d));
                clock += d + rng.random_range(0..800);
                labels.push(LineLabel {
                    segment: segment as i64,
                    reference: reference.clone(),
                });
            }
        }
        let transcript = Transcript::new(format!("syn{:04}", t), lines).expect("generated transcript is valid");
        let gold = Labeling::new(labels).expect("generated labeling is valid");
        sessions.push(Session::new(transcript, worksheet.clone(), Some(gold)));
    }
    Ok(SyntheticCorpus {
        spec: spec.clone(),
        worksheet,
        sessions,
    })
}
