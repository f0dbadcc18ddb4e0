//! IO, corpus tooling, LLM adapters and the command-line front end for
//! problem-oriented segmentation and retrieval.

pub mod agreement;
pub mod cli;
pub mod experiment;
pub mod io;
pub mod llm;
pub mod report;
pub mod stats;
pub mod synth;
