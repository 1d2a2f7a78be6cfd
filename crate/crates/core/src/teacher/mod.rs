//! Teacher side of the distillation loop: prompt construction, LLM backends
//! and parsing of generated samples.

mod generate;
mod http;
mod mock;
mod parse;
mod prompt;

use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{ClassId, LabeledSample};

pub use generate::{generate, parse_zero_shot_response, zero_shot_classify, ZeroShotOutcome};
pub use http::{HttpBackend, HttpBackendConfig};
pub use mock::{ConstantBackend, LookupBackend, MockOracleBackend, ScriptedBackend};
pub use parse::{extract_payload, parse_generation, ParseContext, RejectReason, RejectedRecord};
pub use prompt::{
    build_pgkd_prompt, build_zero_shot_prompt, PromptContext, DEFAULT_CORRECT, DEFAULT_FEW_SHOT,
    DEFAULT_GEN_BATCH_SIZE, DEFAULT_INCORRECT, HARD_NEGATIVE_LEAD, REPORT_LEAD, ZERO_SHOT_TEXT_LEAD,
};

#[derive(Debug, Error)]
pub enum TeacherError {
    #[error("prompt needs at least one few-shot sample")]
    EmptyFewShot,
    #[error("text to classify is empty")]
    EmptyText,
    #[error("no list-of-objects payload found in response")]
    UnparsableResponse,
    #[error("reserve pool has no samples for class {0}")]
    PoolMissingClass(ClassId),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// Failure of a single backend call.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("http status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("invalid response: {0}")]
    InvalidResponse(String),
    #[error("credential variable {0} is not set")]
    MissingCredential(String),
    #[error("reserve for class {class} exhausted")]
    PoolExhausted { class: ClassId },
    #[error("unsupported prompt: {0}")]
    Unsupported(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub input_tokens: u64,
    pub output_tokens: u64,
}

impl TokenUsage {
    /// Whitespace-token proxy used when a backend reports no usage.
    pub fn estimate(prompt: &str, response: &str) -> Self {
        Self {
            input_tokens: prompt.split_whitespace().count() as u64,
            output_tokens: response.split_whitespace().count() as u64,
        }
    }
}

impl Add for TokenUsage {
    type Output = Self;

    fn add(self, rhs: Self) -> Self {
        Self {
            input_tokens: self.input_tokens + rhs.input_tokens,
            output_tokens: self.output_tokens + rhs.output_tokens,
        }
    }
}

impl AddAssign for TokenUsage {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    /// Provider-reported usage, if any.
    pub usage: Option<TokenUsage>,
}

impl Completion {
    pub fn text(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            usage: None,
        }
    }
}

/// A chat model that turns a prompt into text. Implementations never modify
/// the prompt and report failures as [`BackendError`].
pub trait TeacherBackend {
    fn complete(&mut self, prompt: &str) -> Result<Completion, BackendError>;
}

impl<T: TeacherBackend + ?Sized> TeacherBackend for &mut T {
    fn complete(&mut self, prompt: &str) -> Result<Completion, BackendError> {
        (**self).complete(prompt)
    }
}

impl<T: TeacherBackend + ?Sized> TeacherBackend for Box<T> {
    fn complete(&mut self, prompt: &str) -> Result<Completion, BackendError> {
        (**self).complete(prompt)
    }
}

/// Outcome of one generation request.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GenerationBatch {
    pub prompt: String,
    /// Response of the last attempt.
    pub raw_response: String,
    pub accepted: Vec<LabeledSample>,
    pub rejected: Vec<RejectedRecord>,
    pub attempts: usize,
    /// Set when every attempt failed.
    pub failure: Option<String>,
    pub usage: TokenUsage,
}

impl GenerationBatch {
    /// Records found in the payload, accepted or not.
    pub fn generated(&self) -> usize {
        self.accepted.len() + self.rejected.len()
    }
}
