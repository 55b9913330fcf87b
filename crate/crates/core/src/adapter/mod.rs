//! Text generation backends and the pause/execute/resume inference loop.

mod mock;
mod remote;
mod tool_loop;

use thiserror::Error;

use crate::protocol::{Registry, ValueKind};

pub use mock::MockBackend;
pub use remote::{RemoteBackend, RemoteConfig};
pub use tool_loop::{
    retry_prompt, run_tool_loop, CallRecord, LoopOutcome, LoopPredictor, LoopTimings, FALLBACK_TEXT,
    MAX_CALL_SITES,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AdapterError {
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("no mock response registered for {0:?}")]
    MockMiss(String),
    #[error("generation stopped inside a call: {0:?}")]
    IncompleteCall(String),
    #[error("more than {0} calls in one answer")]
    CallLimit(usize),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRequest {
    pub system_prompt: String,
    pub user_prompt: String,
    /// Assistant text produced so far, including injected results.
    pub assistant_prefix: String,
    /// Stop right after a call head so the caller can execute it.
    pub pause_in_call: bool,
    pub max_tokens: usize,
    pub temperature: f64,
}

impl GenerationRequest {
    pub fn new(user_prompt: impl Into<String>) -> Self {
        Self {
            system_prompt: default_system_prompt(&Registry::standard()),
            user_prompt: user_prompt.into(),
            assistant_prefix: String::new(),
            pause_in_call: true,
            max_tokens: 512,
            temperature: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), AdapterError> {
        if self.max_tokens == 0 {
            return Err(AdapterError::InvalidRequest("max_tokens must be at least 1".into()));
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(AdapterError::InvalidRequest("temperature must be a non-negative number".into()));
        }
        Ok(())
    }
}

pub type ChunkStream = Box<dyn Iterator<Item = Result<String, AdapterError>> + Send>;

/// A source of incremental text.
pub trait Backend: Send + Sync {
    fn generate(&self, request: &GenerationRequest) -> Result<ChunkStream, AdapterError>;
}

pub fn generate_stream(request: &GenerationRequest, backend: &dyn Backend) -> Result<ChunkStream, AdapterError> {
    request.validate()?;
    backend.generate(request)
}

/// System prompt describing the callable functions and the call syntax.
pub fn default_system_prompt(registry: &Registry) -> String {
    let mut out = String::from(
        "You answer questions about access to services using a database of travel \
         distances (km) and times (min) by walking, cycling and driving.\n\
         To query it, write a call <API>function(param=\"value\", ...)</API> with \
         parameters in the order listed. The result is inserted after the call.\n\
         Functions:\n",
    );
    for spec in registry.specs() {
        let params: Vec<String> = spec
            .params
            .iter()
            .map(|p| {
                let kind = match p.kind {
                    ValueKind::Enum(values) => values.join("|"),
                    ValueKind::Location => "place name".to_string(),
                    ValueKind::Number => "number".to_string(),
                };
                let opt = if p.required { "" } else { "?" };
                format!("{}{opt}: {kind}", p.name)
            })
            .collect();
        out.push_str(&format!("- {}({}) -> {}\n", spec.name, params.join(", "), spec.result_fields.join(", ")));
    }
    out
}
