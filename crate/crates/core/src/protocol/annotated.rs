use serde::{Deserialize, Serialize};

use super::call::{parse_span_at, serialize_call, ToolCall, ToolResult, OPEN_TAG};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Segment {
    Text(String),
    Call { call: ToolCall, result: Option<ToolResult> },
}

/// Answer text split into prose and embedded calls.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedText {
    pub segments: Vec<Segment>,
}

impl AnnotatedText {
    pub fn calls(&self) -> impl Iterator<Item = (&ToolCall, Option<&ToolResult>)> {
        self.segments.iter().filter_map(|s| match s {
            Segment::Call { call, result } => Some((call, result.as_ref())),
            Segment::Text(_) => None,
        })
    }

    pub fn first_call(&self) -> Option<(&ToolCall, Option<&ToolResult>)> {
        self.calls().next()
    }

    /// Text with every call in canonical form. Identity on canonical input.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for s in &self.segments {
            match s {
                Segment::Text(t) => out.push_str(t),
                Segment::Call { call, result } => out.push_str(&serialize_call(call, result.as_ref())),
            }
        }
        out
    }

    fn push_text(&mut self, t: &str) {
        if t.is_empty() {
            return;
        }
        if let Some(Segment::Text(prev)) = self.segments.last_mut() {
            prev.push_str(t);
        } else {
            self.segments.push(Segment::Text(t.to_string()));
        }
    }
}

/// Splits text into prose and well-formed call spans. Malformed spans stay
/// in the prose verbatim.
pub fn parse_annotated(text: &str) -> AnnotatedText {
    let mut out = AnnotatedText::default();
    let mut pos = 0;
    while let Some(rel) = text[pos..].find(OPEN_TAG) {
        let start = pos + rel;
        match parse_span_at(text, start) {
            Ok(parsed) => {
                out.push_text(&text[pos..start]);
                out.segments.push(Segment::Call { call: parsed.call, result: parsed.result });
                pos = parsed.span.end;
            }
            Err(_) => {
                let skip = start + OPEN_TAG.len();
                out.push_text(&text[pos..skip]);
                pos = skip;
            }
        }
    }
    out.push_text(&text[pos..]);
    out
}

/// Rewrites embedded calls in canonical form, leaving prose untouched.
pub fn canonicalize_text(text: &str) -> String {
    parse_annotated(text).render()
}
