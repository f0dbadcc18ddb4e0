//! Runs the prompt protocols against a client and assembles labelings.

use posr_core::metrics::TokenUsage;
use posr_core::model::{spans_to_labeling, GapPolicy, Labeling, RefLabel, SegmentSpan, Transcript, Worksheet};
use serde::{Deserialize, Serialize};

use super::client::{ChatClient, ChatError, ChatRequest, DEFAULT_MAX_TOKENS};
use super::parse::{parse_joint, parse_retrieval, parse_segmentation};
use super::prompts::{build_prompt, PromptKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PosrMode {
    /// One joint segmentation-and-retrieval call.
    Joint,
    /// One segmentation call, then one retrieval call per segment.
    Independent,
}

/// Decoding settings shared by every call in a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallSettings {
    pub model: String,
    pub max_tokens: u32,
    pub temperature: f64,
}

impl CallSettings {
    pub fn new(model: impl Into<String>) -> Self {
        Self {
            model: model.into(),
            max_tokens: DEFAULT_MAX_TOKENS,
            temperature: 0.0,
        }
    }

    fn request(&self, system: String, user: String) -> ChatRequest {
        ChatRequest {
            model: self.model.clone(),
            system,
            user,
            max_tokens: self.max_tokens,
            temperature: self.temperature,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "detail", rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    /// Some output could not be parsed; a fallback label was used.
    ParseFallback(Vec<String>),
    /// A call failed after retries; the whole transcript fell back.
    Failed(String),
}

impl RunStatus {
    pub fn is_flagged(&self) -> bool {
        !matches!(self, RunStatus::Ok)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LlmRun {
    pub labeling: Labeling,
    /// Accumulated usage over all calls.
    pub usage: TokenUsage,
    /// Running total after each call.
    pub usage_trace: Vec<TokenUsage>,
    pub calls: usize,
    pub status: RunStatus,
    /// Span repair notes.
    pub warnings: Vec<String>,
}

struct Meter<'a, C: ?Sized> {
    client: &'a C,
    settings: &'a CallSettings,
    usage: TokenUsage,
    trace: Vec<TokenUsage>,
}

impl<'a, C: ChatClient + ?Sized> Meter<'a, C> {
    fn new(client: &'a C, settings: &'a CallSettings) -> Self {
        Self {
            client,
            settings,
            usage: TokenUsage::default(),
            trace: Vec::new(),
        }
    }

    fn call(&mut self, system: String, user: String) -> Result<String, ChatError> {
        let response = self.client.complete(&self.settings.request(system, user))?;
        self.usage += TokenUsage::new(response.input_tokens, response.output_tokens);
        self.trace.push(self.usage);
        Ok(response.text)
    }

    fn finish(self, labeling: Labeling, status: RunStatus, warnings: Vec<String>) -> LlmRun {
        LlmRun {
            labeling,
            usage: self.usage,
            calls: self.trace.len(),
            usage_trace: self.trace,
            status,
            warnings,
        }
    }
}

fn fallback(transcript: &Transcript) -> Labeling {
    Labeling::single(transcript.len(), RefLabel::Null)
}

/// Segmentation prompt only; every segment is left `Null`.
pub fn run_segmentation_llm<C: ChatClient + ?Sized>(
    client: &C,
    settings: &CallSettings,
    transcript: &Transcript,
) -> LlmRun {
    let mut meter = Meter::new(client, settings);
    let (spans, status, warnings) = match segment_call(&mut meter, transcript) {
        Ok(v) => v,
        Err(e) => return meter.finish(fallback(transcript), RunStatus::Failed(e.to_string()), vec![]),
    };
    let labeling = spans_to_labeling(&spans, transcript.len(), GapPolicy::OwnSegment).labeling;
    meter.finish(labeling, status, warnings)
}

type SegmentOutcome = (Vec<SegmentSpan>, RunStatus, Vec<String>);

fn segment_call<C: ChatClient + ?Sized>(
    meter: &mut Meter<'_, C>,
    transcript: &Transcript,
) -> Result<SegmentOutcome, ChatError> {
    let prompt =
        build_prompt(PromptKind::IndependentSegmentation, transcript, None, None).expect("no optional inputs needed");
    let text = meter.call(prompt.system, prompt.user)?;
    Ok(match parse_segmentation(&text, transcript.len()) {
        Ok(spans) => {
            let repair = spans_to_labeling(&spans, transcript.len(), GapPolicy::OwnSegment);
            (repair.labeling.spans(), RunStatus::Ok, repair.warnings)
        }
        Err(e) => (
            fallback(transcript).spans(),
            RunStatus::ParseFallback(vec![format!("segmentation: {}", e.reason)]),
            vec![],
        ),
    })
}

/// One retrieval call per segment of `segmentation`, in order.
pub fn run_retrieval_llm<C: ChatClient + ?Sized>(
    client: &C,
    settings: &CallSettings,
    transcript: &Transcript,
    segmentation: &Labeling,
    worksheet: &Worksheet,
) -> LlmRun {
    let mut meter = Meter::new(client, settings);
    match retrieve_calls(&mut meter, transcript, &segmentation.spans(), worksheet) {
        Ok((refs, failures)) => {
            let labeling = segmentation.with_segment_references(&refs);
            meter.finish(labeling, status_from(failures), vec![])
        }
        Err(e) => meter.finish(fallback(transcript), RunStatus::Failed(e.to_string()), vec![]),
    }
}

fn status_from(failures: Vec<String>) -> RunStatus {
    if failures.is_empty() {
        RunStatus::Ok
    } else {
        RunStatus::ParseFallback(failures)
    }
}

fn retrieve_calls<C: ChatClient + ?Sized>(
    meter: &mut Meter<'_, C>,
    transcript: &Transcript,
    spans: &[SegmentSpan],
    worksheet: &Worksheet,
) -> Result<(Vec<RefLabel>, Vec<String>), ChatError> {
    let mut refs = Vec::with_capacity(spans.len());
    let mut failures = Vec::new();
    for (i, span) in spans.iter().enumerate() {
        let prompt = build_prompt(
            PromptKind::IndependentRetrieval,
            transcript,
            Some(worksheet),
            Some(span),
        )
        .expect("span comes from a labeling of this transcript");
        let text = meter.call(prompt.system, prompt.user)?;
        refs.push(parse_retrieval(&text, worksheet).unwrap_or_else(|e| {
            failures.push(format!("retrieval of segment {i}: {}", e.reason));
            RefLabel::Null
        }));
    }
    Ok((refs, failures))
}

/// Full prediction for one transcript. Joint mode makes exactly one call;
/// independent mode makes one segmentation call plus one per segment.
pub fn run_posr_llm<C: ChatClient + ?Sized>(
    client: &C,
    settings: &CallSettings,
    transcript: &Transcript,
    worksheet: &Worksheet,
    mode: PosrMode,
) -> LlmRun {
    let mut meter = Meter::new(client, settings);
    match mode {
        PosrMode::Joint => {
            let prompt =
                build_prompt(PromptKind::JointPosr, transcript, Some(worksheet), None).expect("worksheet given");
            let text = match meter.call(prompt.system, prompt.user) {
                Ok(t) => t,
                Err(e) => return meter.finish(fallback(transcript), RunStatus::Failed(e.to_string()), vec![]),
            };
            match parse_joint(&text, transcript.len(), worksheet) {
                Ok(spans) => {
                    let repair = spans_to_labeling(&spans, transcript.len(), GapPolicy::OwnSegment);
                    meter.finish(repair.labeling, RunStatus::Ok, repair.warnings)
                }
                Err(e) => meter.finish(
                    fallback(transcript),
                    RunStatus::ParseFallback(vec![format!("joint: {}", e.reason)]),
                    vec![],
                ),
            }
        }
        PosrMode::Independent => {
            let (spans, seg_status, warnings) = match segment_call(&mut meter, transcript) {
                Ok(v) => v,
                Err(e) => return meter.finish(fallback(transcript), RunStatus::Failed(e.to_string()), vec![]),
            };
            let (refs, mut failures) = match retrieve_calls(&mut meter, transcript, &spans, worksheet) {
                Ok(v) => v,
                Err(e) => return meter.finish(fallback(transcript), RunStatus::Failed(e.to_string()), warnings),
            };
            if let RunStatus::ParseFallback(mut f) = seg_status {
                f.append(&mut failures);
                failures = f;
            }
            let spans: Vec<SegmentSpan> = spans
                .into_iter()
                .zip(refs)
                .map(|(s, r)| SegmentSpan::new(s.start_line, s.end_line, r))
                .collect();
            let labeling = spans_to_labeling(&spans, transcript.len(), GapPolicy::OwnSegment).labeling;
            meter.finish(labeling, status_from(failures), warnings)
        }
    }
}

/// `[[start, end], ...]` for the segments of `labeling`.
pub fn encode_segmentation(labeling: &Labeling) -> String {
    let pairs: Vec<String> = labeling
        .spans()
        .iter()
        .map(|s| format!("[{}, {}]", s.start_line, s.end_line))
        .collect();
    format!("[{}]", pairs.join(", "))
}

/// The answer the retrieval prompt asks for.
pub fn encode_retrieval(reference: &RefLabel) -> String {
    match reference {
        RefLabel::Problem(id) => id.clone(),
        RefLabel::NotInCorpus => "-1".into(),
        RefLabel::Null => "null".into(),
    }
}

/// JSON objects in the joint prompt's output format.
pub fn encode_joint(labeling: &Labeling) -> String {
    let objects: Vec<serde_json::Value> = labeling
        .spans()
        .iter()
        .map(|s| {
            let id = match &s.reference {
                RefLabel::Problem(id) => serde_json::Value::String(id.clone()),
                RefLabel::NotInCorpus => serde_json::Value::from(-1),
                RefLabel::Null => serde_json::Value::Null,
            };
            serde_json::json!({"start_line_idx": s.start_line, "end_line_idx": s.end_line, "problem_id": id})
        })
        .collect();
    serde_json::Value::Array(objects).to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::client::{ChatResponse, FnClient};
    use posr_core::model::{Line, Problem};

    fn setup() -> (Transcript, Worksheet, Labeling) {
        let lines = (0..6)
            .map(|i| {
                Line::new(
                    i,
                    "[TUTOR]",
                    format!("line {i}"),
                    i as i64 * 1000,
                    i as i64 * 1000 + 900,
                )
            })
            .collect();
        let t = Transcript::new("t", lines).unwrap();
        let w = Worksheet::new("w", vec![Problem::new("1", "a"), Problem::new("2", "b")]).unwrap();
        let gold = Labeling::from_lengths(&[2, 3, 1]).with_segment_references(&[
            RefLabel::Null,
            RefLabel::problem("2"),
            RefLabel::NotInCorpus,
        ]);
        (t, w, gold)
    }

    fn oracle(gold: Labeling) -> FnClient {
        FnClient::new(move |req| {
            let text = if req.user.contains("list of JSON objects") {
                encode_joint(&gold)
            } else if req.user.starts_with("Please read the transcript below") {
                encode_segmentation(&gold)
            } else {
                let first = req.user.split("Segment:\n").nth(1).unwrap().lines().next().unwrap();
                let idx: usize = first.rsplit(' ').next().unwrap().parse().unwrap();
                encode_retrieval(gold.reference(idx))
            };
            Ok(ChatResponse {
                text,
                input_tokens: 100,
                output_tokens: 5,
            })
        })
    }

    #[test]
    fn joint_single_call() {
        let (t, w, gold) = setup();
        let client = oracle(gold.clone());
        let run = run_posr_llm(&client, &CallSettings::new("m"), &t, &w, PosrMode::Joint);
        assert_eq!(run.labeling, gold);
        assert_eq!((run.calls, client.calls()), (1, 1));
        assert_eq!(run.status, RunStatus::Ok);
    }

    #[test]
    fn independent_one_plus_segments() {
        let (t, w, gold) = setup();
        let client = oracle(gold.clone());
        let run = run_posr_llm(&client, &CallSettings::new("m"), &t, &w, PosrMode::Independent);
        assert_eq!(run.labeling, gold);
        assert_eq!(client.calls(), 1 + gold.num_segments());
        assert_eq!(run.usage, TokenUsage::new(400, 20));
        assert!(run
            .usage_trace
            .windows(2)
            .all(|p| p[0].input_tokens <= p[1].input_tokens));
    }

    #[test]
    fn unparseable_falls_back_flagged() {
        let (t, w, _) = setup();
        let client = FnClient::new(|_| {
            Ok(ChatResponse {
                text: "sorry".into(),
                input_tokens: 1,
                output_tokens: 1,
            })
        });
        let run = run_posr_llm(&client, &CallSettings::new("m"), &t, &w, PosrMode::Joint);
        assert_eq!(run.labeling, Labeling::single(6, RefLabel::Null));
        assert!(run.status.is_flagged());
    }

    #[test]
    fn transport_failure_marks_failed() {
        let (t, w, _) = setup();
        let client = FnClient::new(|_| Err(ChatError::Transport("down".into())));
        let run = run_posr_llm(&client, &CallSettings::new("m"), &t, &w, PosrMode::Independent);
        assert!(matches!(run.status, RunStatus::Failed(_)));
        assert_eq!(run.labeling.num_segments(), 1);
    }
}
