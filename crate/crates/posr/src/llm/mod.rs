//! Prompt protocols for chat models: templates, clients, parsing and
//! metered pipelines.

pub mod cassette;
pub mod client;
pub mod parse;
pub mod pipeline;
pub mod prompts;

pub use cassette::{request_key, Cassette, CassetteClient};
pub use client::{
    ChatClient, ChatError, ChatRequest, ChatResponse, FnClient, HttpClient, LlmConfig, RateLimited, RetryingClient,
};
pub use parse::{parse_joint, parse_retrieval, parse_segmentation, ParseFailure};
pub use pipeline::{
    encode_joint, encode_retrieval, encode_segmentation, run_posr_llm, run_retrieval_llm, run_segmentation_llm,
    CallSettings, LlmRun, PosrMode, RunStatus,
};
pub use prompts::{build_prompt, Prompt, PromptError, PromptKind};
