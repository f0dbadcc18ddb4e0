mod common;

use posr::llm::{
    encode_joint, encode_segmentation, parse_joint, parse_retrieval, parse_segmentation, run_posr_llm, CallSettings,
    Cassette, CassetteClient, ChatClient, ChatError, PosrMode, RunStatus,
};
use posr_core::model::{labeling_to_spans, Labeling, Line, Problem, RefLabel, Transcript, Worksheet};
use proptest::prelude::*;

fn worksheet() -> Worksheet {
    let ids = ["1", "2", "3", "10", "4a"];
    Worksheet::new(
        "w",
        ids.iter()
            .map(|id| Problem::new(*id, format!("problem {id} text")))
            .collect(),
    )
    .unwrap()
}

fn label_strategy() -> impl Strategy<Value = RefLabel> {
    prop_oneof![
        Just(RefLabel::Null),
        Just(RefLabel::NotInCorpus),
        prop::sample::select(vec!["1", "2", "3", "10", "4a"]).prop_map(RefLabel::problem),
    ]
}

fn case() -> impl Strategy<Value = (Transcript, Labeling)> {
    prop::collection::vec((1usize..6, label_strategy()), 1..8).prop_map(|segs| {
        let lengths: Vec<usize> = segs.iter().map(|s| s.0).collect();
        let refs: Vec<RefLabel> = segs.into_iter().map(|s| s.1).collect();
        let gold = Labeling::from_lengths(&lengths).with_segment_references(&refs);
        let lines = (0..gold.len())
            .map(|i| {
                let speaker = if i % 2 == 0 { "[TUTOR]" } else { "[STUDENT]" };
                Line::new(
                    i,
                    speaker,
                    format!("utterance {i} about {{x}} [y]"),
                    i as i64 * 1000,
                    i as i64 * 1000 + 800,
                )
            })
            .collect();
        (Transcript::new("t", lines).unwrap(), gold)
    })
}

proptest! {
    #[test]
    fn encoders_and_parsers_agree((t, gold) in case()) {
        let w = worksheet();
        let n = t.len();
        let spans = parse_joint(&encode_joint(&gold), n, &w).unwrap();
        prop_assert_eq!(spans, labeling_to_spans(&gold));

        let unlabeled = parse_segmentation(&encode_segmentation(&gold), n).unwrap();
        let bounds: Vec<(usize, usize)> = unlabeled.iter().map(|s| (s.start_line, s.end_line)).collect();
        let expected: Vec<(usize, usize)> = gold.spans().iter().map(|s| (s.start_line, s.end_line)).collect();
        prop_assert_eq!(bounds, expected);

        for span in gold.spans() {
            let text = posr::llm::encode_retrieval(&span.reference);
            prop_assert_eq!(parse_retrieval(&text, &w).unwrap(), span.reference);
        }
    }

    #[test]
    fn parsers_skip_surrounding_prose((t, gold) in case(), prefix in "[a-zA-Z .:\n]{0,40}") {
        let w = worksheet();
        let wrapped = format!("{prefix}\n```json\n{}\n```\nHope this helps.", encode_joint(&gold));
        prop_assert_eq!(parse_joint(&wrapped, t.len(), &w).unwrap(), labeling_to_spans(&gold));
    }

    #[test]
    fn replayed_gold_reproduces_gold((t, gold) in case()) {
        let w = worksheet();
        let settings = CallSettings::new("replay-model");
        let mut cassette = Cassette::default();
        common::record_gold(&mut cassette, &settings, &t, &w, &gold);
        let client = CassetteClient::replay(cassette);

        let joint = run_posr_llm(&client, &settings, &t, &w, PosrMode::Joint);
        prop_assert_eq!(&joint.labeling, &gold);
        prop_assert_eq!(joint.calls, 1);
        prop_assert_eq!(&joint.status, &RunStatus::Ok);

        let ind = run_posr_llm(&client, &settings, &t, &w, PosrMode::Independent);
        prop_assert_eq!(&ind.labeling, &gold);
        prop_assert_eq!(ind.calls, 1 + gold.num_segments());
        prop_assert!(ind.usage.input_tokens > joint.usage.input_tokens);
    }
}

#[test]
fn cassette_survives_disk_and_misses_are_errors() {
    let w = worksheet();
    let gold = Labeling::from_lengths(&[2, 2]).with_segment_references(&[RefLabel::Null, RefLabel::problem("2")]);
    let lines = (0..4)
        .map(|i| Line::new(i, "[TUTOR]", format!("u{i}"), i as i64, i as i64 + 1))
        .collect();
    let t = Transcript::new("t", lines).unwrap();
    let settings = CallSettings::new("m");
    let mut cassette = Cassette::default();
    common::record_gold(&mut cassette, &settings, &t, &w, &gold);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cassette.json");
    cassette.save(&path).unwrap();
    let loaded = Cassette::load(&path).unwrap();
    assert_eq!(loaded, cassette);

    let client = CassetteClient::replay(loaded);
    let other = CallSettings::new("another-model");
    let run = run_posr_llm(&client, &other, &t, &w, PosrMode::Joint);
    assert!(matches!(run.status, RunStatus::Failed(_)));
    assert_eq!(run.labeling, Labeling::single(4, RefLabel::Null));

    let req = common::request(&other, posr::llm::PromptKind::JointPosr, &t, &w, None);
    assert!(matches!(client.complete(&req), Err(ChatError::CassetteMiss(_))));
}
