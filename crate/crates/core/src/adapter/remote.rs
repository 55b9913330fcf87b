use std::io::{BufRead, BufReader};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{AdapterError, Backend, ChunkStream, GenerationRequest};
use crate::protocol::RESULT_ARROW;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub endpoint: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
}

fn default_timeout_ms() -> u64 {
    30_000
}

/// Client for a streaming completion endpoint.
///
/// Request body: `{prompt, stop, max_tokens, temperature, stream: true}`.
/// The response is read line by line; each line is either a JSON object or
/// an SSE `data:` line carrying one, with the chunk text under `text`,
/// `content`, `token.text` or `choices[0].text`.
#[derive(Debug, Clone)]
pub struct RemoteBackend {
    config: RemoteConfig,
    client: reqwest::blocking::Client,
}

#[derive(Serialize)]
struct CompletionBody<'a> {
    prompt: String,
    stop: Vec<&'a str>,
    max_tokens: usize,
    temperature: f64,
    stream: bool,
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Result<Self, AdapterError> {
        let timeout = Duration::from_millis(config.timeout_ms);
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .connect_timeout(timeout)
            .build()
            .map_err(|e| AdapterError::BackendUnavailable(e.to_string()))?;
        Ok(Self { config, client })
    }

    pub fn prompt(request: &GenerationRequest) -> String {
        format!(
            "{}\n\n### Question:\n{}\n\n### Answer:\n{}",
            request.system_prompt, request.user_prompt, request.assistant_prefix
        )
    }
}

fn chunk_text(v: &Value) -> Option<&str> {
    v.get("text")
        .or_else(|| v.get("content"))
        .or_else(|| v.pointer("/token/text"))
        .or_else(|| v.pointer("/choices/0/text"))
        .and_then(Value::as_str)
}

/// Extracts the text of one response line. `None` for keep-alives and
/// end markers.
pub(crate) fn parse_line(line: &str) -> Result<Option<String>, AdapterError> {
    let line = line.trim();
    let body = line.strip_prefix("data:").map(str::trim).unwrap_or(line);
    if body.is_empty() || body == "[DONE]" || line.starts_with(':') || line.starts_with("event:") {
        return Ok(None);
    }
    let v: Value = serde_json::from_str(body)
        .map_err(|e| AdapterError::BackendUnavailable(format!("bad stream line {body:?}: {e}")))?;
    Ok(chunk_text(&v).map(str::to_owned))
}

impl Backend for RemoteBackend {
    fn generate(&self, request: &GenerationRequest) -> Result<ChunkStream, AdapterError> {
        let body = CompletionBody {
            prompt: Self::prompt(request),
            stop: if request.pause_in_call { vec![RESULT_ARROW] } else { Vec::new() },
            max_tokens: request.max_tokens,
            temperature: request.temperature,
            stream: true,
        };
        let resp = self
            .client
            .post(&self.config.endpoint)
            .json(&body)
            .send()
            .map_err(|e| AdapterError::BackendUnavailable(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(AdapterError::BackendUnavailable(format!("endpoint returned {status}")));
        }
        let lines = BufReader::new(resp).lines();
        Ok(Box::new(lines.filter_map(|line| match line {
            Ok(l) => parse_line(&l).transpose(),
            Err(e) => Some(Err(AdapterError::BackendUnavailable(e.to_string()))),
        })))
    }
}
