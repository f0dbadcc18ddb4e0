//! Corpus summary statistics.

use std::collections::BTreeSet;

use posr_core::model::Session;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusStats {
    pub transcripts: usize,
    pub total_speakers: usize,
    pub total_segments: Option<usize>,
    pub mean_speakers: f64,
    pub mean_segments: Option<f64>,
    pub mean_problems: Option<f64>,
    pub mean_lines: f64,
    pub mean_duration_min: f64,
    pub total_worksheets: usize,
    pub total_problems: usize,
    pub notices: Vec<String>,
}

impl CorpusStats {
    /// `(row name, value)` pairs in display order; rows needing annotations
    /// are left out when annotations are missing.
    pub fn rows(&self) -> Vec<(&'static str, String)> {
        let mut rows = vec![
            ("Total Transcripts", self.transcripts.to_string()),
            ("Total Speakers", self.total_speakers.to_string()),
        ];
        if let Some(s) = self.total_segments {
            rows.push(("Total Segments", s.to_string()));
        }
        rows.push(("Mean Speakers Per Transcript", format!("{:.2}", self.mean_speakers)));
        if let Some(s) = self.mean_segments {
            rows.push(("Mean Segments Per Transcript", format!("{s:.2}")));
        }
        if let Some(p) = self.mean_problems {
            rows.push(("Mean Problems Per Transcript", format!("{p:.2}")));
        }
        rows.push(("Mean Lines Per Transcript", format!("{:.2}", self.mean_lines)));
        rows.push(("Mean Duration (mins)", format!("{:.2}", self.mean_duration_min)));
        rows.push(("Total Worksheets", self.total_worksheets.to_string()));
        rows.push(("Total Problems", self.total_problems.to_string()));
        rows
    }
}

/// Totals and per-transcript means. Problems per transcript counts the
/// distinct worksheet problems linked in the gold labeling.
pub fn corpus_stats(sessions: &[Session]) -> CorpusStats {
    let n = sessions.len();
    let nf = n.max(1) as f64;
    let mut speakers = BTreeSet::new();
    let mut speaker_sum = 0usize;
    let mut lines = 0usize;
    let mut duration_ms = 0i64;
    let mut worksheets = BTreeSet::new();
    let mut problems = BTreeSet::new();
    for s in sessions {
        let local: BTreeSet<&str> = s.transcript.lines().iter().map(|l| l.speaker.as_str()).collect();
        speaker_sum += local.len();
        speakers.extend(local);
        lines += s.transcript.len();
        duration_ms += s.transcript.duration_ms();
        if worksheets.insert(s.worksheet.id()) {
            problems.extend(s.worksheet.problems().iter().map(|p| (s.worksheet.id(), p.id.as_str())));
        }
    }
    let annotated = n > 0 && sessions.iter().all(|s| s.gold.is_some());
    let mut notices = Vec::new();
    let (total_segments, mean_segments, mean_problems) = if annotated {
        let segs: usize = sessions
            .iter()
            .map(|s| s.gold.as_ref().map_or(0, |g| g.num_segments()))
            .sum();
        let probs: usize = sessions
            .iter()
            .map(|s| {
                s.gold.as_ref().map_or(0, |g| {
                    g.references()
                        .filter_map(|r| r.problem_id())
                        .collect::<BTreeSet<_>>()
                        .len()
                })
            })
            .sum();
        (Some(segs), Some(segs as f64 / nf), Some(probs as f64 / nf))
    } else {
        notices.push("annotations missing; segment and problem rows omitted".to_string());
        (None, None, None)
    };
    CorpusStats {
        transcripts: n,
        total_speakers: speakers.len(),
        total_segments,
        mean_speakers: speaker_sum as f64 / nf,
        mean_segments,
        mean_problems,
        mean_lines: lines as f64 / nf,
        mean_duration_min: duration_ms as f64 / 60_000.0 / nf,
        total_worksheets: worksheets.len(),
        total_problems: problems.len(),
        notices,
    }
}
