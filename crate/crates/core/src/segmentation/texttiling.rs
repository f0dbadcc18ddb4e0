//! Hearst-style TextTiling with block comparison and depth scores.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use super::Segmenter;
use crate::model::{Labeling, RefLabel, Transcript};
use crate::text::tokenize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TextTilingParams {
    /// Tokens per pseudo-sentence.
    pub pseudo_sentence_size: usize,
    /// Pseudo-sentences per comparison block.
    pub block_size: usize,
    /// Radius of the moving average applied to gap scores.
    pub smoothing_width: usize,
}

impl Default for TextTilingParams {
    fn default() -> Self {
        Self {
            pseudo_sentence_size: 20,
            block_size: 10,
            smoothing_width: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TextTiling {
    pub params: TextTilingParams,
}

impl TextTiling {
    pub fn new(params: TextTilingParams) -> Self {
        Self { params }
    }

    /// Line positions where a segment starts, excluding line 0.
    pub fn boundary_lines(&self, transcript: &Transcript) -> Vec<usize> {
        let w = self.params.pseudo_sentence_size.max(1);
        let bs = self.params.block_size.max(1);

        // cut[i] = tokens before line i
        let mut tokens: Vec<String> = Vec::new();
        let mut cut = Vec::with_capacity(transcript.len());
        for line in transcript.lines() {
            cut.push(tokens.len());
            tokens.extend(tokenize(&line.utterance));
        }
        if transcript.len() < 2 || tokens.len() < 2 * bs * w {
            return Vec::new();
        }

        let sentences: Vec<BTreeMap<&str, f64>> = tokens
            .chunks(w)
            .map(|chunk| {
                let mut m = BTreeMap::new();
                for t in chunk {
                    *m.entry(t.as_str()).or_insert(0.0) += 1.0;
                }
                m
            })
            .collect();
        let p = sentences.len();

        // gap g sits between pseudo-sentence g-1 and g
        let raw: Vec<f64> = (1..p)
            .map(|g| {
                // equal-width blocks, narrowed near the ends
                let width = bs.min(g).min(p - g);
                let left = merge(&sentences[g - width..g]);
                let right = merge(&sentences[g..g + width]);
                cosine(&left, &right)
            })
            .collect();
        let scores = smooth(&raw, self.params.smoothing_width);
        let mut depths = depth_scores(&scores);
        let margin = edge_margin(depths.len());
        let len = depths.len();
        for (i, d) in depths.iter_mut().enumerate() {
            if i < margin || i + margin >= len {
                *d = 0.0;
            }
        }

        let n = depths.len() as f64;
        let mean = depths.iter().sum::<f64>() / n;
        let var = depths.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n;
        let cutoff = mean - libm::sqrt(var) / 2.0;

        let mut starts = BTreeSet::new();
        for (i, &d) in depths.iter().enumerate() {
            if d > 0.0 && d > cutoff && is_valley(&scores, i) {
                let token_pos = (i + 1) * w;
                if let Some(line) = nearest_line_start(&cut, token_pos) {
                    starts.insert(line);
                }
            }
        }
        starts.into_iter().collect()
    }
}

impl Segmenter for TextTiling {
    fn segment(&self, transcript: &Transcript) -> Labeling {
        let starts = self.boundary_lines(transcript);
        if starts.is_empty() {
            return Labeling::single(transcript.len(), RefLabel::Null);
        }
        Labeling::from_boundaries(transcript.len(), &starts)
    }
}

fn merge<'a>(sentences: &[BTreeMap<&'a str, f64>]) -> BTreeMap<&'a str, f64> {
    let mut out = BTreeMap::new();
    for s in sentences {
        for (t, c) in s {
            *out.entry(*t).or_insert(0.0) += c;
        }
    }
    out
}

fn cosine(a: &BTreeMap<&str, f64>, b: &BTreeMap<&str, f64>) -> f64 {
    let dot: f64 = a.iter().filter_map(|(t, x)| b.get(t).map(|y| x * y)).sum();
    let na: f64 = a.values().map(|x| x * x).sum();
    let nb: f64 = b.values().map(|x| x * x).sum();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / libm::sqrt(na * nb)
    }
}

fn smooth(scores: &[f64], radius: usize) -> Vec<f64> {
    (0..scores.len())
        .map(|i| {
            let lo = i.saturating_sub(radius);
            let hi = (i + radius + 1).min(scores.len());
            scores[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

/// Gaps at either end left unscored: between 2 and 5, a tenth of all gaps.
fn edge_margin(gaps: usize) -> usize {
    (gaps / 10).clamp(2, 5)
}

/// Climbs left and right while scores do not decrease and sums the two
/// heights above the gap.
fn depth_scores(scores: &[f64]) -> Vec<f64> {
    (0..scores.len())
        .map(|i| {
            let s = scores[i];
            let mut left = s;
            for &x in scores[..i].iter().rev() {
                if x >= left {
                    left = x;
                } else {
                    break;
                }
            }
            let mut right = s;
            for &x in &scores[i + 1..] {
                if x >= right {
                    right = x;
                } else {
                    break;
                }
            }
            (left - s) + (right - s)
        })
        .collect()
}

fn is_valley(scores: &[f64], i: usize) -> bool {
    let s = scores[i];
    let left_ok = i == 0 || scores[i - 1] >= s;
    let right_ok = i + 1 == scores.len() || scores[i + 1] >= s;
    // on a flat floor keep only the leftmost gap
    let not_repeat = i == 0 || scores[i - 1] != s;
    left_ok && right_ok && not_repeat
}

fn nearest_line_start(cut: &[usize], token_pos: usize) -> Option<usize> {
    (1..cut.len()).min_by_key(|&i| cut[i].abs_diff(token_pos))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Line;
    use alloc::format;

    fn transcript(utts: &[String]) -> Transcript {
        Transcript::new(
            "t",
            utts.iter()
                .enumerate()
                .map(|(i, u)| Line::new(i, "[TUTOR]", u.as_str(), i as i64, i as i64 + 1))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn short_transcript_is_one_segment() {
        let t = transcript(&[String::from("a few words only"), String::from("and more")]);
        assert_eq!(TextTiling::default().segment(&t).num_segments(), 1);
    }

    #[test]
    fn depth_of_simple_valley() {
        let d = depth_scores(&[0.9, 0.5, 0.2, 0.6, 0.8]);
        assert!((d[2] - (0.7 + 0.6)).abs() < 1e-12);
        assert!((d[1] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn nearest_cut() {
        // lines with 5, 5, 5 tokens -> cuts at 5 and 10
        assert_eq!(nearest_line_start(&[0, 5, 10], 7), Some(1));
        assert_eq!(nearest_line_start(&[0, 5, 10], 9), Some(2));
        assert_eq!(nearest_line_start(&[0], 9), None);
    }

    #[test]
    fn speaker_labels_do_not_matter() {
        let utts: Vec<String> = (0..60)
            .map(|i| {
                let topic = if i < 30 { "alpha" } else { "omega" };
                format!(
                    "{topic}{} {topic}{} filler{} {topic}x {topic}y a b c d e",
                    i % 7,
                    i % 5,
                    i % 3
                )
            })
            .collect();
        let a = transcript(&utts);
        let lines = a
            .lines()
            .iter()
            .map(|l| {
                let mut l = l.clone();
                l.speaker = format!("[S{}]", l.index % 3);
                l
            })
            .collect();
        let b = Transcript::new("t2", lines).unwrap();
        let tt = TextTiling::default();
        assert_eq!(tt.boundary_lines(&a), tt.boundary_lines(&b));
    }
}
