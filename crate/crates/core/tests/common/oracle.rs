//! Brute-force reference implementations, written from the definitions
//! with no shared code: every window is enumerated explicitly.

#![allow(dead_code, clippy::needless_range_loop)]

use posr_core::model::{Labeling, Line, Transcript};

fn seg_ids(l: &Labeling) -> Vec<i64> {
    l.per_line().iter().map(|x| x.segment).collect()
}

/// Positions `i >= 1` whose line starts a new segment.
fn starts(l: &Labeling) -> Vec<bool> {
    let ids = seg_ids(l);
    (0..ids.len()).map(|i| i > 0 && ids[i] != ids[i - 1]).collect()
}

fn line_count(starts: &[bool], j: usize, k: usize) -> usize {
    let mut c = 0;
    for i in (j + 1)..=(j + k) {
        if starts[i] {
            c += 1;
        }
    }
    c
}

fn time_count(starts: &[bool], lines: &[Line], j: usize, delta: i64) -> usize {
    let lo = lines[j].start_ms;
    let hi = lines[j].end_ms + delta;
    let mut c = 0;
    for (i, &s) in starts.iter().enumerate() {
        let t = lines[i].start_ms;
        if s && t > lo && t < hi {
            c += 1;
        }
    }
    c
}

pub fn window_diff(pred: &Labeling, reference: &Labeling, k: usize) -> f64 {
    let (p, r) = (starts(pred), starts(reference));
    let n = r.len();
    let mut miss = 0;
    for j in 0..n - k {
        if line_count(&p, j, k) != line_count(&r, j, k) {
            miss += 1;
        }
    }
    miss as f64 / (n - k) as f64
}

/// Classic definition: do lines `j` and `j + k` share a segment?
pub fn p_k(pred: &Labeling, reference: &Labeling, k: usize) -> f64 {
    let (p, r) = (seg_ids(pred), seg_ids(reference));
    let n = r.len();
    let mut miss = 0;
    for j in 0..n - k {
        if (p[j] == p[j + k]) != (r[j] == r[j + k]) {
            miss += 1;
        }
    }
    miss as f64 / (n - k) as f64
}

pub fn time_window_diff(pred: &Labeling, reference: &Labeling, t: &Transcript, k: usize, delta: i64) -> f64 {
    let (p, r) = (starts(pred), starts(reference));
    let n = r.len();
    let mut miss = 0;
    for j in 0..n - k {
        if time_count(&p, t.lines(), j, delta) != time_count(&r, t.lines(), j, delta) {
            miss += 1;
        }
    }
    miss as f64 / (n - k) as f64
}

pub fn time_p_k(pred: &Labeling, reference: &Labeling, t: &Transcript, k: usize, delta: i64) -> f64 {
    let (p, r) = (starts(pred), starts(reference));
    let n = r.len();
    let mut miss = 0;
    for j in 0..n - k {
        let a = time_count(&p, t.lines(), j, delta) > 0;
        let b = time_count(&r, t.lines(), j, delta) > 0;
        if a != b {
            miss += 1;
        }
    }
    miss as f64 / (n - k) as f64
}

pub fn srs_line(pred: &Labeling, reference: &Labeling) -> f64 {
    let n = reference.len();
    let hits = (0..n).filter(|&i| pred.reference(i) == reference.reference(i)).count();
    hits as f64 / n as f64
}

pub fn srs_time(pred: &Labeling, reference: &Labeling, t: &Transcript) -> f64 {
    let mut hit = 0i64;
    let mut total = 0i64;
    for (i, line) in t.lines().iter().enumerate() {
        let d = line.end_ms - line.start_ms;
        total += d;
        if pred.reference(i) == reference.reference(i) {
            hit += d;
        }
    }
    hit as f64 / total as f64
}

/// Transcript whose lines have the given durations and gaps before them.
pub fn timed_transcript(durations: &[i64], gaps: &[i64]) -> Transcript {
    let mut clock = 0;
    let lines = durations
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            clock += gaps.get(i).copied().unwrap_or(0);
            let l = Line::new(i, "[TUTOR]", format!("line {i}"), clock, clock + d);
            clock += d;
            l
        })
        .collect();
    Transcript::new("oracle", lines).unwrap()
}
