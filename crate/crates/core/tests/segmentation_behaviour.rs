use posr_core::model::{Labeling, Line, RefLabel, Transcript};
use posr_core::segmentation::{fit_boundary_words, BoundaryWordModel, PerLine, Segmenter, TextTiling, Whole};
use proptest::prelude::*;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn transcript_of(utterances: &[String]) -> Transcript {
    let lines = utterances
        .iter()
        .enumerate()
        .map(|(i, u)| {
            let speaker = if i % 3 == 0 { "[TUTOR]" } else { "[STUDENT]" };
            Line::new(i, speaker, u.clone(), i as i64 * 4_000, i as i64 * 4_000 + 3_500)
        })
        .collect();
    Transcript::new("t", lines).unwrap()
}

fn vocab(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

fn passage(rng: &mut ChaCha8Rng, words: &[String], lines: usize) -> Vec<String> {
    (0..lines)
        .map(|_| {
            let n = rng.random_range(8..=12);
            (0..n)
                .map(|_| words.choose(rng).unwrap().as_str())
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect()
}

#[test]
fn texttiling_finds_the_junction_of_two_topics() {
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut u = passage(&mut rng, &vocab("alpha", 25), 40);
        u.extend(passage(&mut rng, &vocab("omega", 25), 40));
        let b = TextTiling::default().boundary_lines(&transcript_of(&u));
        assert_eq!(b.len(), 1, "seed {seed}: {b:?}");
        assert!(b[0].abs_diff(40) <= 2, "seed {seed}: {b:?}");
    }
}

#[test]
fn texttiling_oversegments_random_text() {
    // random tokens have no topical structure, so any boundary is spurious
    let words = vocab("w", 400);
    let mut total = 0;
    let trials = 500;
    for seed in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(1_000 + seed);
        let u = passage(&mut rng, &words, 80);
        total += TextTiling::default().boundary_lines(&transcript_of(&u)).len();
    }
    let mean = total as f64 / trials as f64;
    assert!(mean > 1.0, "mean boundary count {mean}");
}

#[test]
fn short_transcripts_are_one_segment() {
    let u: Vec<String> = (0..5).map(|i| format!("few words {i}")).collect();
    let t = transcript_of(&u);
    assert_eq!(TextTiling::default().segment(&t).num_segments(), 1);
}

fn gold_with_openers(rng: &mut ChaCha8Rng, opener: &str, segments: usize) -> (Transcript, Labeling) {
    let filler = vocab("chat", 30);
    let mut u = Vec::new();
    let mut lengths = Vec::new();
    for _ in 0..segments {
        let len = rng.random_range(3..8);
        let mut p = passage(rng, &filler, len);
        p[0] = format!("{opener} {}", p[0]);
        u.extend(p);
        lengths.push(len);
    }
    (transcript_of(&u), Labeling::from_lengths(&lengths))
}

#[test]
fn opener_phrase_is_learned_and_used() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let train: Vec<_> = (0..6)
        .map(|_| gold_with_openers(&mut rng, "okay next question", 8))
        .collect();
    let model = fit_boundary_words(train.iter().map(|(t, g)| (t, g)), 3).unwrap();
    let mut words = model.words().to_vec();
    words.sort();
    assert_eq!(words, ["next", "okay", "question"]);

    let (t, gold) = gold_with_openers(&mut rng, "okay next question", 6);
    assert_eq!(model.segment(&t).boundaries(), gold.boundaries());
}

#[test]
fn boundary_words_ignore_case() {
    let model = BoundaryWordModel::new(vec!["Next".into()], 1);
    let u = vec!["a".to_string(), "NEXT one".into(), "b".into(), "next".into()];
    assert_eq!(model.segment(&transcript_of(&u)).boundaries(), vec![1, 3]);
}

#[test]
fn trivial_segmenters() {
    let u: Vec<String> = (0..7).map(|i| format!("x{i}")).collect();
    let t = transcript_of(&u);
    assert_eq!(PerLine.segment(&t).num_segments(), 7);
    assert_eq!(Whole.segment(&t).num_segments(), 1);
    assert!(Whole.segment(&t).references().all(|r| *r == RefLabel::Null));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn segmenters_cover_every_line(
        lines in prop::collection::vec(prop::collection::vec("[a-e]{1,3}", 1..15), 1..120),
    ) {
        let u: Vec<String> = lines.iter().map(|w| w.join(" ")).collect();
        let t = transcript_of(&u);
        let bw = BoundaryWordModel::new(vec!["ab".into(), "c".into()], 2);
        let segmenters: [&dyn Segmenter; 4] = [&TextTiling::default(), &bw, &PerLine, &Whole];
        for s in segmenters {
            let l = s.segment(&t);
            prop_assert_eq!(l.len(), t.len());
            prop_assert!(l.check_length(&t).is_ok());
        }
    }

    #[test]
    fn texttiling_ignores_speakers(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut u = passage(&mut rng, &vocab("p", 20), 30);
        u.extend(passage(&mut rng, &vocab("q", 20), 30));
        let t = transcript_of(&u);
        let swapped = Transcript::new(
            "t",
            t.lines()
                .iter()
                .map(|l| Line::new(l.index, "[SOMEONE ELSE]", l.utterance.clone(), l.start_ms, l.end_ms))
                .collect(),
        )
        .unwrap();
        prop_assert_eq!(TextTiling::default().boundary_lines(&t), TextTiling::default().boundary_lines(&swapped));
    }
}
