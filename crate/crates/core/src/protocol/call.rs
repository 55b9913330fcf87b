//! The `<API>...</API>` call grammar.
//!
//! ```text
//! call    := "<API>" name "(" args ")" [" -> " payload] "</API>"
//! name    := [a-z_][a-z0-9_]*
//! args    := kv ("," " " kv)*
//! kv      := name "=" quoted
//! payload := "{" [field (", " field)*] "}"
//! field   := quoted ": " (number | quoted)
//! ```
//!
//! Serialization always emits the canonical spacing above. The parser also
//! accepts extra ASCII whitespace between tokens so that formatting noise in
//! generated text canonicalizes to the same call.

use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const OPEN_TAG: &str = "<API>";
pub const CLOSE_TAG: &str = "</API>";
pub const RESULT_ARROW: &str = " -> ";

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ToolCall {
    pub name: String,
    pub args: Vec<(String, String)>,
}

impl ToolCall {
    pub fn new(name: impl Into<String>) -> Self {
        Self { name: name.into(), args: Vec::new() }
    }

    pub fn arg(mut self, name: impl Into<String>, value: impl Into<String>) -> Self {
        self.args.push((name.into(), value.into()));
        self
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.args.iter().find(|(k, _)| k == name).map(|(_, v)| v.as_str())
    }

    /// Canonical `<API>name(...)` head without result or closing tag.
    pub fn head(&self) -> String {
        let mut out = String::with_capacity(32 + self.args.len() * 24);
        out.push_str(OPEN_TAG);
        out.push_str(&self.name);
        out.push('(');
        for (i, (k, v)) in self.args.iter().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            out.push_str(k);
            out.push('=');
            push_quoted(&mut out, v);
        }
        out.push(')');
        out
    }
}

impl fmt::Display for ToolCall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.head())?;
        f.write_str(CLOSE_TAG)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ResultValue {
    Number(f64),
    Text(String),
}

impl From<f64> for ResultValue {
    fn from(v: f64) -> Self {
        ResultValue::Number(v)
    }
}

impl From<&str> for ResultValue {
    fn from(v: &str) -> Self {
        ResultValue::Text(v.to_string())
    }
}

impl From<String> for ResultValue {
    fn from(v: String) -> Self {
        ResultValue::Text(v)
    }
}

impl fmt::Display for ResultValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            // Shortest representation that round-trips; never trailing zeros.
            ResultValue::Number(n) => write!(f, "{n}"),
            ResultValue::Text(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ToolResult {
    pub fields: Vec<(String, ResultValue)>,
}

impl ToolResult {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn field(mut self, name: impl Into<String>, value: impl Into<ResultValue>) -> Self {
        self.fields.push((name.into(), value.into()));
        self
    }

    pub fn get(&self, name: &str) -> Option<&ResultValue> {
        self.fields.iter().find(|(k, _)| k == name).map(|(_, v)| v)
    }

    /// Flat payload rendering, e.g. `{"distance": 0.402, "time": 0.537}`.
    pub fn payload(&self) -> String {
        let mut out = String::from("{");
        for (i, (k, v)) in self.fields.iter().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            push_quoted(&mut out, k);
            out.push_str(": ");
            match v {
                ResultValue::Number(n) => {
                    let _ = write!(out, "{n}");
                }
                ResultValue::Text(s) => push_quoted(&mut out, s),
            }
        }
        out.push('}');
        out
    }

    /// The text the interceptor injects after a paused call head.
    pub fn injection(&self) -> String {
        format!("{RESULT_ARROW}{}{CLOSE_TAG}", self.payload())
    }
}

fn push_quoted(out: &mut String, s: &str) {
    out.push('"');
    for c in s.chars() {
        if c == '"' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
}

/// Canonical serialization of a call with an optional executed result.
pub fn serialize_call(call: &ToolCall, result: Option<&ToolResult>) -> String {
    let mut out = call.head();
    if let Some(r) = result {
        out.push_str(RESULT_ARROW);
        out.push_str(&r.payload());
    }
    out.push_str(CLOSE_TAG);
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("syntax error at byte {offset}: {message}")]
pub struct SyntaxError {
    pub offset: usize,
    pub message: String,
    /// The input ended before the construct was complete.
    pub at_eof: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedCall {
    pub call: ToolCall,
    pub result: Option<ToolResult>,
    /// Byte range of the whole `<API>...</API>` span in the input.
    pub span: std::ops::Range<usize>,
}

/// Parses the first `<API>...</API>` span found in `text`.
pub fn parse_call(text: &str) -> Result<ParsedCall, SyntaxError> {
    match text.find(OPEN_TAG) {
        Some(start) => parse_span_at(text, start),
        None => {
            let (offset, message) = match text.find(CLOSE_TAG) {
                Some(o) => (o, "closing tag without opening <API>"),
                None => (0, "no <API> span"),
            };
            Err(SyntaxError { offset, message: message.into(), at_eof: false })
        }
    }
}

/// Parses a complete span whose opening tag starts at `start`.
pub(crate) fn parse_span_at(text: &str, start: usize) -> Result<ParsedCall, SyntaxError> {
    let mut cur = Cursor { s: text, pos: start };
    cur.expect(OPEN_TAG, "expected <API>")?;
    let call = cur.call_body()?;
    cur.skip_ws();
    let result = if cur.eat("->") {
        cur.skip_ws();
        let r = cur.payload()?;
        cur.skip_ws();
        Some(r)
    } else {
        None
    };
    if cur.rest().starts_with(OPEN_TAG) {
        return Err(cur.err("nested <API> span"));
    }
    cur.expect(CLOSE_TAG, "missing </API>")?;
    Ok(ParsedCall { call, result, span: start..cur.pos })
}

/// Parses `<API>name(args)` at the start of `text`, returning the call and the
/// byte offset just past the closing parenthesis.
pub(crate) fn parse_head(text: &str) -> Result<(ToolCall, usize), SyntaxError> {
    let mut cur = Cursor { s: text, pos: 0 };
    cur.expect(OPEN_TAG, "expected <API>")?;
    let call = cur.call_body()?;
    Ok((call, cur.pos))
}

/// Parses the text a transcript places after a call head: either
/// `" -> " payload "</API>"` or a bare `"</API>"`. Returns the bytes consumed.
pub(crate) fn parse_tail(text: &str) -> Result<(Option<ToolResult>, usize), SyntaxError> {
    let mut cur = Cursor { s: text, pos: 0 };
    cur.skip_ws();
    let result = if cur.eat("->") {
        cur.skip_ws();
        let r = cur.payload()?;
        cur.skip_ws();
        Some(r)
    } else {
        if cur.rest() == "-" {
            cur.pos = text.len();
            return Err(cur.err("expected '->' or </API>"));
        }
        None
    };
    cur.expect(CLOSE_TAG, "expected </API>")?;
    Ok((result, cur.pos))
}

struct Cursor<'a> {
    s: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn rest(&self) -> &'a str {
        &self.s[self.pos..]
    }

    fn err(&self, message: &str) -> SyntaxError {
        let at_eof = self.pos >= self.s.len();
        let message = if at_eof {
            format!("unexpected end of input ({message})")
        } else {
            message.to_string()
        };
        SyntaxError { offset: self.pos, message, at_eof }
    }

    fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start_matches([' ', '\t', '\n', '\r']);
        self.pos = self.s.len() - trimmed.len();
    }

    fn eat(&mut self, lit: &str) -> bool {
        if self.rest().starts_with(lit) {
            self.pos += lit.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, lit: &str, message: &str) -> Result<(), SyntaxError> {
        if self.eat(lit) {
            return Ok(());
        }
        // A strict prefix of the literal at end of input is incomplete, not wrong.
        let rest = self.rest();
        if lit.starts_with(rest) {
            self.pos = self.s.len();
        }
        Err(self.err(message))
    }

    fn peek(&self) -> Option<u8> {
        self.s.as_bytes().get(self.pos).copied()
    }

    fn name(&mut self, what: &str) -> Result<&'a str, SyntaxError> {
        let start = self.pos;
        let bytes = self.s.as_bytes();
        match bytes.get(self.pos) {
            Some(b) if b.is_ascii_lowercase() || *b == b'_' => self.pos += 1,
            _ => return Err(self.err(&format!("expected {what}"))),
        }
        while let Some(b) = bytes.get(self.pos) {
            if b.is_ascii_lowercase() || b.is_ascii_digit() || *b == b'_' {
                self.pos += 1;
            } else {
                break;
            }
        }
        Ok(&self.s[start..self.pos])
    }

    fn quoted(&mut self) -> Result<String, SyntaxError> {
        if self.peek() != Some(b'"') {
            return Err(self.err("expected '\"'"));
        }
        let open = self.pos;
        self.pos += 1;
        let mut out = String::new();
        let mut chars = self.rest().char_indices();
        while let Some((i, c)) = chars.next() {
            match c {
                '"' => {
                    self.pos += i + 1;
                    return Ok(out);
                }
                '\\' => match chars.next() {
                    Some((_, e @ ('"' | '\\'))) => out.push(e),
                    Some((_, other)) => {
                        out.push('\\');
                        out.push(other);
                    }
                    None => break,
                },
                c => out.push(c),
            }
        }
        self.pos = self.s.len();
        Err(SyntaxError {
            offset: self.pos,
            message: format!("unterminated quote opened at byte {open}"),
            at_eof: true,
        })
    }

    fn call_body(&mut self) -> Result<ToolCall, SyntaxError> {
        self.skip_ws();
        let name = self.name("function name")?.to_string();
        self.skip_ws();
        self.expect("(", "missing '('")?;
        self.skip_ws();
        let mut args = Vec::new();
        if self.eat(")") {
            return Ok(ToolCall { name, args });
        }
        loop {
            self.skip_ws();
            let key = self.name("parameter name")?.to_string();
            self.skip_ws();
            self.expect("=", "expected '='")?;
            self.skip_ws();
            let value = self.quoted()?;
            args.push((key, value));
            self.skip_ws();
            if self.eat(",") {
                continue;
            }
            if self.eat(")") {
                return Ok(ToolCall { name, args });
            }
            return Err(self.err("expected ',' or ')'"));
        }
    }

    fn number(&mut self) -> Result<f64, SyntaxError> {
        let start = self.pos;
        let bytes = self.s.as_bytes();
        let mut end = self.pos;
        while let Some(&b) = bytes.get(end) {
            if b.is_ascii_digit() || matches!(b, b'-' | b'+' | b'.' | b'e' | b'E') {
                end += 1;
            } else {
                break;
            }
        }
        let lexeme = &self.s[start..end];
        let valid = !lexeme.is_empty()
            && lexeme.as_bytes()[0] != b'+'
            && lexeme.bytes().any(|b| b.is_ascii_digit());
        match lexeme.parse::<f64>() {
            Ok(v) if valid && v.is_finite() => {
                self.pos = end;
                Ok(v)
            }
            _ => {
                if end >= self.s.len() {
                    self.pos = end;
                }
                Err(self.err("expected number or string"))
            }
        }
    }

    fn payload(&mut self) -> Result<ToolResult, SyntaxError> {
        self.expect("{", "expected '{'")?;
        self.skip_ws();
        let mut fields = Vec::new();
        if self.eat("}") {
            return Ok(ToolResult { fields });
        }
        loop {
            self.skip_ws();
            let key = self.quoted()?;
            self.skip_ws();
            self.expect(":", "expected ':'")?;
            self.skip_ws();
            let value = if self.peek() == Some(b'"') {
                ResultValue::Text(self.quoted()?)
            } else {
                ResultValue::Number(self.number()?)
            };
            fields.push((key, value));
            self.skip_ws();
            if self.eat(",") {
                continue;
            }
            if self.eat("}") {
                return Ok(ToolResult { fields });
            }
            return Err(self.err("expected ',' or '}'"));
        }
    }
}
