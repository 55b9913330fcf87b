use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::config::GuardrailConfig;
use crate::protocol::OPEN_TAG;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Allowed,
    RejectedOutOfScope,
    RejectedUnsafe,
    RejectedMalformed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuardrailVerdict {
    pub verdict: Verdict,
    pub reason: String,
    /// Call markers were removed from the input.
    pub sanitized: bool,
}

impl GuardrailVerdict {
    pub fn allowed(&self) -> bool {
        self.verdict == Verdict::Allowed
    }

    fn reject(verdict: Verdict, reason: impl Into<String>, sanitized: bool) -> Self {
        Self { verdict, reason: reason.into(), sanitized }
    }
}

static MARKER_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)</?\s*api\s*>").unwrap());

/// Removes call markers until none remain, so nested fragments such as
/// `<AP<API>I>` cannot reassemble.
pub fn strip_markers(text: &str) -> (String, bool) {
    let mut out = text.to_string();
    let mut changed = false;
    while MARKER_RE.is_match(&out) {
        out = MARKER_RE.replace_all(&out, "").into_owned();
        changed = true;
    }
    debug_assert!(!out.contains(OPEN_TAG));
    (out, changed)
}

/// Filters a question before it can reach the model. Returns the verdict and
/// the sanitized text to forward.
pub fn guardrail_check(question: &str, has_point: bool, config: &GuardrailConfig) -> (GuardrailVerdict, String) {
    let trimmed = question.trim();
    if trimmed.is_empty() {
        return (GuardrailVerdict::reject(Verdict::RejectedMalformed, "empty question", false), String::new());
    }
    let chars = trimmed.chars().count();
    if chars > config.max_question_chars {
        let reason = format!("question has {chars} characters, limit is {}", config.max_question_chars);
        return (GuardrailVerdict::reject(Verdict::RejectedMalformed, reason, false), String::new());
    }
    if trimmed.chars().any(|c| c.is_control() && c != '\n' && c != '\t') {
        return (GuardrailVerdict::reject(Verdict::RejectedMalformed, "control characters in question", false), String::new());
    }

    let (clean, sanitized) = strip_markers(trimmed);
    let clean = clean.split_whitespace().collect::<Vec<_>>().join(" ");
    if clean.is_empty() {
        return (GuardrailVerdict::reject(Verdict::RejectedMalformed, "nothing left after sanitization", sanitized), clean);
    }
    let lower = clean.to_lowercase();
    if let Some(bad) = config.blocklist.iter().find(|b| lower.contains(&b.to_lowercase())) {
        return (GuardrailVerdict::reject(Verdict::RejectedUnsafe, format!("blocked phrase {bad:?}"), sanitized), clean);
    }
    let in_scope = has_point
        || config.keywords.values().flatten().any(|k| !k.is_empty() && lower.contains(&k.to_lowercase()));
    if !in_scope {
        return (
            GuardrailVerdict::reject(
                Verdict::RejectedOutOfScope,
                "only questions about access to hospitals, supermarkets and pharmacies are supported",
                sanitized,
            ),
            clean,
        );
    }
    let reason = if sanitized { "allowed after removing call markers" } else { "allowed" };
    (GuardrailVerdict { verdict: Verdict::Allowed, reason: reason.into(), sanitized }, clean)
}
