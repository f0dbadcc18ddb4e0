use posr_core::model::{Labeling, Line, Problem, RefLabel, Session, Transcript, Worksheet};
use posr_core::retrieval::{
    calibrate_threshold, calibration_items, folds_from_order, normalize_top_k, retrieve_labeling, score_segment,
    Method, RetrieverConfig, TopKNorm,
};
use proptest::prelude::*;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn problem_words(ws: usize, p: usize) -> Vec<String> {
    (0..10).map(|k| format!("w{ws}p{p}k{k}")).collect()
}

/// A session whose gold segments have Jaccard scores in (0.6, 0.7] when
/// linked and in [0.3, 0.4) when Null.
fn planted_session(rng: &mut ChaCha8Rng, idx: usize) -> Session {
    let n_problems = 4;
    let problems: Vec<Problem> = (0..n_problems)
        .map(|p| Problem::new(format!("{}", p + 1), problem_words(idx, p).join(" ")))
        .collect();
    let worksheet = Worksheet::new(format!("ws{idx}"), problems).unwrap();

    let mut lines = Vec::new();
    let mut refs = Vec::new();
    let mut filler = 0usize;
    for seg in 0..6 {
        let p = rng.random_range(0..n_problems);
        let positive = seg % 2 == 0 || rng.random_bool(0.3);
        // (shared words, filler words)
        let (m, f) = if positive {
            *[(7, 0), (7, 1), (8, 2), (8, 3)].choose(rng).unwrap()
        } else {
            *[(3, 0), (4, 1), (4, 2)].choose(rng).unwrap()
        };
        let mut words: Vec<String> = problem_words(idx, p)[..m].to_vec();
        for _ in 0..f {
            words.push(format!("filler{idx}x{filler}"));
            filler += 1;
        }
        words.shuffle(rng);
        let reference = if positive {
            RefLabel::problem(format!("{}", p + 1))
        } else {
            RefLabel::Null
        };
        let half = words.len() / 2;
        for chunk in [&words[..half], &words[half..]] {
            let i = lines.len();
            lines.push(Line::new(
                i,
                "[TUTOR]",
                chunk.join(" "),
                i as i64 * 1000,
                i as i64 * 1000 + 900,
            ));
            refs.push(reference.clone());
        }
    }
    let transcript = Transcript::new(format!("t{idx}"), lines).unwrap();
    Session::new(transcript, worksheet, Some(Labeling::from_references(&refs)))
}

#[test]
fn calibration_lands_in_the_planted_gap() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sessions: Vec<Session> = (0..12).map(|i| planted_session(&mut rng, i)).collect();
        let cfg = RetrieverConfig::new(Method::Jaccard);
        let items = calibration_items(&cfg, &sessions).unwrap();
        let mut order: Vec<usize> = (0..sessions.len()).collect();
        order.shuffle(&mut rng);
        let cal = calibrate_threshold(&items, &folds_from_order(&order, 5), 5);
        assert!((0.40..=0.61).contains(&cal.threshold), "seed {seed}: {}", cal.threshold);
        assert!(cal.warnings.is_empty());
    }
}

#[test]
fn ties_go_to_the_earlier_problem() {
    let ws = Worksheet::new(
        "w",
        vec![Problem::new("a", "solve for x"), Problem::new("b", "solve for x")],
    )
    .unwrap();
    for m in [Method::Jaccard, Method::TfIdf, Method::Bm25] {
        let cfg = RetrieverConfig::new(m).with_threshold(0.0);
        let s = score_segment(&cfg, "so we solve for x", &ws).unwrap();
        assert_eq!(s.decision, RefLabel::problem("a"), "{m:?}");
    }
}

#[test]
fn fewer_transcripts_than_folds_warns() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let sessions: Vec<Session> = (0..3).map(|i| planted_session(&mut rng, i)).collect();
    let cfg = RetrieverConfig::new(Method::Jaccard);
    let items = calibration_items(&cfg, &sessions).unwrap();
    let cal = calibrate_threshold(&items, &folds_from_order(&[0, 1, 2], 5), 5);
    assert_eq!(cal.folds, 3);
    assert_eq!(cal.warnings.len(), 1);
}

fn worksheet_strategy() -> impl Strategy<Value = Worksheet> {
    prop::collection::vec(prop::collection::vec(0usize..30, 1..8), 1..14).prop_map(|docs| {
        let problems = docs
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let text: Vec<String> = d.iter().map(|w| format!("v{w}")).collect();
                Problem::new(format!("{i}"), text.join(" "))
            })
            .collect();
        Worksheet::new("w", problems).unwrap()
    })
}

fn query_strategy() -> impl Strategy<Value = String> {
    prop::collection::vec(0usize..40, 0..15)
        .prop_map(|q| q.iter().map(|w| format!("v{w}")).collect::<Vec<_>>().join(" "))
}

proptest! {
    #[test]
    fn normalized_scores_stay_in_unit_range(raw in prop::collection::vec(0.0f64..50.0, 1..25)) {
        for norm in [TopKNorm::MinMax, TopKNorm::Sum] {
            let n = normalize_top_k(&raw, norm);
            prop_assert_eq!(n.len(), raw.len());
            prop_assert!(n.iter().all(|x| (0.0..=1.0 + 1e-12).contains(x)));
            prop_assert!(n.iter().filter(|&&x| x > 0.0).count() <= 10);
        }
    }

    #[test]
    fn normalization_ignores_scale(raw in prop::collection::vec(0.0f64..50.0, 1..25), c in 0.01f64..100.0) {
        let scaled: Vec<f64> = raw.iter().map(|x| x * c).collect();
        for norm in [TopKNorm::MinMax, TopKNorm::Sum] {
            let a = normalize_top_k(&raw, norm);
            let b = normalize_top_k(&scaled, norm);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn raw_scores_are_bounded(ws in worksheet_strategy(), q in query_strategy()) {
        for m in [Method::Jaccard, Method::TfIdf, Method::Bm25] {
            let cfg = RetrieverConfig::new(m);
            let s = score_segment(&cfg, &q, &ws).unwrap();
            prop_assert!(s.raw.iter().all(|&x| x >= 0.0));
            if m != Method::Bm25 {
                prop_assert!(s.raw.iter().all(|&x| x <= 1.0 + 1e-9));
            }
            match &s.decision {
                RefLabel::Null => {}
                RefLabel::Problem(id) => prop_assert!(ws.contains(id)),
                other => prop_assert!(false, "unexpected {:?}", other),
            }
        }
    }

    #[test]
    fn query_without_tokens_links_nothing(ws in worksheet_strategy(), junk in "[ .,;!?-]{0,12}") {
        for m in [Method::Jaccard, Method::TfIdf, Method::Bm25] {
            let cfg = RetrieverConfig::new(m).with_threshold(0.0);
            prop_assert_eq!(score_segment(&cfg, &junk, &ws).unwrap().decision, RefLabel::Null);
        }
    }

    #[test]
    fn labels_are_uniform_within_segments(
        ws in worksheet_strategy(),
        utts in prop::collection::vec(query_strategy(), 1..20),
        cuts in prop::collection::btree_set(1usize..20, 0..6),
    ) {
        let lines = utts
            .iter()
            .enumerate()
            .map(|(i, u)| Line::new(i, "[S]", u.clone(), i as i64, i as i64 + 1))
            .collect();
        let t = Transcript::new("t", lines).unwrap();
        let starts: Vec<usize> = cuts.into_iter().filter(|&c| c < utts.len()).collect();
        let seg = Labeling::from_boundaries(utts.len(), &starts);
        let cfg = RetrieverConfig::new(Method::Bm25);
        let out = retrieve_labeling(&cfg, &t, &seg, &ws).unwrap();
        prop_assert_eq!(out.boundaries(), seg.boundaries());
        for span in out.spans() {
            for i in span.start_line..=span.end_line {
                prop_assert_eq!(out.reference(i), &span.reference);
            }
        }
    }
}
