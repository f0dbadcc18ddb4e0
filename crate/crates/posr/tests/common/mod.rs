#![allow(dead_code)]

use posr::llm::{
    build_prompt, encode_joint, encode_retrieval, encode_segmentation, CallSettings, Cassette, ChatRequest,
    ChatResponse, PromptKind,
};
use posr_core::model::{Labeling, Transcript, Worksheet};

pub fn request(
    settings: &CallSettings,
    kind: PromptKind,
    t: &Transcript,
    w: &Worksheet,
    span: Option<&posr_core::model::SegmentSpan>,
) -> ChatRequest {
    let p = build_prompt(kind, t, Some(w), span).unwrap();
    ChatRequest {
        model: settings.model.clone(),
        system: p.system,
        user: p.user,
        max_tokens: settings.max_tokens,
        temperature: settings.temperature,
    }
}

fn response(text: String, user: &str) -> ChatResponse {
    ChatResponse {
        output_tokens: (text.len() / 4) as u64 + 1,
        input_tokens: (user.len() / 4) as u64 + 1,
        text,
    }
}

/// Records the answers a perfect model would give for `gold`, in both
/// prompting modes.
pub fn record_gold(cassette: &mut Cassette, settings: &CallSettings, t: &Transcript, w: &Worksheet, gold: &Labeling) {
    let joint = request(settings, PromptKind::JointPosr, t, w, None);
    let text = encode_joint(gold);
    cassette.insert(&joint, response(text, &joint.user));

    let seg = request(settings, PromptKind::IndependentSegmentation, t, w, None);
    let text = encode_segmentation(gold);
    cassette.insert(&seg, response(text, &seg.user));

    for span in gold.spans() {
        let r = request(settings, PromptKind::IndependentRetrieval, t, w, Some(&span));
        let text = encode_retrieval(&span.reference);
        cassette.insert(&r, response(text, &r.user));
    }
}
