//! The model backend contract.
//!
//! Requests carry both the rendered prompt and the structured inputs behind
//! it. Text-producing calls return the raw response body so that parsing and
//! retry stay on this side of the boundary.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Side;
use crate::corpus::Message;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum BackendError {
    /// The backend cannot be reached; the run should stop and resume later.
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    /// A single call failed.
    #[error("backend call failed: {0}")]
    Failed(String),
}

/// Schema names of the four structured outputs.
pub mod schema {
    pub const GENERATION: &str = "GenerationAnswer";
    pub const USER_CLASSIFICATION: &str = "UserClassificationAnswer";
    pub const BOT_CLASSIFICATION: &str = "BotClassificationAnswer";
    pub const COMPLETION: &str = "CompletionAnswer";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub schema: String,
    pub model: Option<String>,
    pub temperature: f32,
    pub prompt: String,
    pub messages: Vec<Message>,
}

/// One numbered candidate in a classification block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: usize,
    pub iwa: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyRequest {
    pub schema: String,
    pub model: Option<String>,
    pub temperature: f32,
    pub side: Side,
    pub prompt: String,
    pub messages: Vec<Message>,
    pub summary: String,
    /// Candidates in prompt order; the first is the reference item.
    pub candidates: Vec<Candidate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub schema: String,
    pub model: Option<String>,
    pub temperature: f32,
    pub prompt: String,
    pub messages: Vec<Message>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub model: Option<String>,
    pub texts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub embeddings: Vec<Vec<f32>>,
}

pub trait ClassifierBackend: Send + Sync {
    /// Stable description of the backend and its configuration, recorded in
    /// report manifests.
    fn identity(&self) -> String;

    fn generate(&self, request: &GenerationRequest) -> Result<String, BackendError>;

    fn embed(&self, request: &EmbedRequest) -> Result<EmbedResponse, BackendError>;

    fn classify_block(&self, request: &ClassifyRequest) -> Result<String, BackendError>;

    fn completion(&self, request: &CompletionRequest) -> Result<String, BackendError>;
}

impl<T: ClassifierBackend + ?Sized> ClassifierBackend for &T {
    fn identity(&self) -> String {
        (**self).identity()
    }
    fn generate(&self, request: &GenerationRequest) -> Result<String, BackendError> {
        (**self).generate(request)
    }
    fn embed(&self, request: &EmbedRequest) -> Result<EmbedResponse, BackendError> {
        (**self).embed(request)
    }
    fn classify_block(&self, request: &ClassifyRequest) -> Result<String, BackendError> {
        (**self).classify_block(request)
    }
    fn completion(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        (**self).completion(request)
    }
}

impl<T: ClassifierBackend + ?Sized> ClassifierBackend for Box<T> {
    fn identity(&self) -> String {
        (**self).identity()
    }
    fn generate(&self, request: &GenerationRequest) -> Result<String, BackendError> {
        (**self).generate(request)
    }
    fn embed(&self, request: &EmbedRequest) -> Result<EmbedResponse, BackendError> {
        (**self).embed(request)
    }
    fn classify_block(&self, request: &ClassifyRequest) -> Result<String, BackendError> {
        (**self).classify_block(request)
    }
    fn completion(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        (**self).completion(request)
    }
}
