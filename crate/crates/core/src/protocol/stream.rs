//! Incremental interception of calls in streamed model output.
//!
//! The scanner passes prose through as [`StreamEvent::PlainText`], holds back
//! any suffix that could still become `<API>`, and emits
//! [`StreamEvent::CallReady`] as soon as the closing `)` of a call's argument
//! list arrives. From then on model output is suppressed until the caller
//! injects the executed result with [`StreamScanner::inject`].
//!
//! When fed a full transcript (training-format text that already contains
//! ` -> {...}</API>` tails), the scanner consumes each tail itself and keeps
//! going, so every call in the transcript surfaces in order.
//!
//! Event sequences are independent of chunk boundaries once adjacent
//! `PlainText` events are merged (see [`coalesce`]).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::call::{parse_head, parse_tail, ToolCall, ToolResult, CLOSE_TAG, OPEN_TAG};

/// Upper bound on a call head before it is treated as runaway output.
pub const MAX_CALL_SPAN: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StreamEvent {
    PlainText(String),
    CallReady(ToolCall),
    End,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamErrorKind {
    Malformed,
    /// The stream ended inside a call head.
    Unterminated,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed call span {raw:?}: {message}")]
pub struct StreamSyntaxError {
    pub kind: StreamErrorKind,
    pub raw: String,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Plain,
    InCall,
    /// Paused after a call head. `dead` once the pending text can no longer
    /// be a transcript tail.
    Paused { dead: bool },
}

#[derive(Debug)]
pub struct StreamScanner {
    state: State,
    buf: String,
    suppressed: usize,
}

impl Default for StreamScanner {
    fn default() -> Self {
        Self::new()
    }
}

/// Length of the longest suffix of `s` that is a proper prefix of `<API>`.
fn partial_marker_len(s: &str) -> usize {
    (1..OPEN_TAG.len())
        .rev()
        .find(|&k| s.ends_with(&OPEN_TAG[..k]))
        .unwrap_or(0)
}

impl StreamScanner {
    pub fn new() -> Self {
        Self { state: State::Plain, buf: String::new(), suppressed: 0 }
    }

    /// True between a `CallReady` and the matching injection.
    pub fn is_paused(&self) -> bool {
        matches!(self.state, State::Paused { .. })
    }

    /// Bytes of model output swallowed while paused.
    pub fn suppressed_bytes(&self) -> usize {
        self.suppressed
    }

    pub fn push(&mut self, chunk: &str, out: &mut Vec<StreamEvent>) -> Result<(), StreamSyntaxError> {
        self.buf.push_str(chunk);
        self.drain(out, false)
    }

    /// Flushes held-back text and emits `End`.
    pub fn finish(&mut self, out: &mut Vec<StreamEvent>) -> Result<(), StreamSyntaxError> {
        self.drain(out, true)?;
        match self.state {
            State::InCall => {
                let raw = std::mem::take(&mut self.buf);
                self.state = State::Plain;
                out.push(StreamEvent::End);
                return Err(StreamSyntaxError {
                    kind: StreamErrorKind::Unterminated,
                    raw,
                    message: "stream ended inside a call".into(),
                });
            }
            State::Paused { .. } => {
                self.suppressed += self.buf.len();
                self.buf.clear();
            }
            State::Plain => {}
        }
        out.push(StreamEvent::End);
        Ok(())
    }

    /// Ends the pause: drops suppressed output and returns the text to splice
    /// into the context after the call head. `None` closes the span without a
    /// payload, which is how failed executions are recorded.
    pub fn inject(&mut self, result: Option<&ToolResult>) -> String {
        self.suppressed += self.buf.len();
        self.buf.clear();
        self.state = State::Plain;
        match result {
            Some(r) => r.injection(),
            None => CLOSE_TAG.to_string(),
        }
    }

    fn drain(&mut self, out: &mut Vec<StreamEvent>, at_end: bool) -> Result<(), StreamSyntaxError> {
        loop {
            match self.state {
                State::Plain => {
                    if let Some(i) = self.buf.find(OPEN_TAG) {
                        if i > 0 {
                            out.push(StreamEvent::PlainText(self.buf[..i].to_string()));
                        }
                        self.buf.drain(..i);
                        self.state = State::InCall;
                        continue;
                    }
                    let keep = if at_end { 0 } else { partial_marker_len(&self.buf) };
                    let emit = self.buf.len() - keep;
                    if emit > 0 {
                        out.push(StreamEvent::PlainText(self.buf[..emit].to_string()));
                        self.buf.drain(..emit);
                    }
                    return Ok(());
                }
                State::InCall => match parse_head(&self.buf) {
                    Ok((call, end)) => {
                        self.buf.drain(..end);
                        self.state = State::Paused { dead: false };
                        out.push(StreamEvent::CallReady(call));
                    }
                    Err(e) if e.at_eof => {
                        if self.buf.len() > MAX_CALL_SPAN {
                            let mut cut = MAX_CALL_SPAN + 1;
                            while !self.buf.is_char_boundary(cut) {
                                cut += 1;
                            }
                            return Err(self.fail(cut, "call span too long".into()));
                        }
                        return Ok(());
                    }
                    Err(e) => {
                        let mut cut = (e.offset + 1).min(self.buf.len());
                        while !self.buf.is_char_boundary(cut) {
                            cut += 1;
                        }
                        return Err(self.fail(cut, e.message));
                    }
                },
                State::Paused { dead: true } => {
                    self.suppressed += self.buf.len();
                    self.buf.clear();
                    return Ok(());
                }
                State::Paused { dead: false } => match parse_tail(&self.buf) {
                    Ok((_, end)) => {
                        self.suppressed += end;
                        self.buf.drain(..end);
                        self.state = State::Plain;
                    }
                    Err(e) if e.at_eof => return Ok(()),
                    Err(_) => self.state = State::Paused { dead: true },
                },
            }
        }
    }

    /// Reports a malformed head and resumes scanning after it.
    fn fail(&mut self, cut: usize, message: String) -> StreamSyntaxError {
        let raw: String = self.buf.drain(..cut).collect();
        self.state = State::Plain;
        StreamSyntaxError { kind: StreamErrorKind::Malformed, raw, message }
    }
}

/// Merges adjacent `PlainText` events.
pub fn coalesce(events: impl IntoIterator<Item = StreamEvent>) -> Vec<StreamEvent> {
    let mut out: Vec<StreamEvent> = Vec::new();
    for ev in events {
        match (out.last_mut(), ev) {
            (Some(StreamEvent::PlainText(prev)), StreamEvent::PlainText(t)) => prev.push_str(&t),
            (_, ev) => out.push(ev),
        }
    }
    out
}

/// Outcome of scanning a complete chunk sequence in transcript mode.
#[derive(Debug, Clone, PartialEq)]
pub enum ScanItem {
    Event(StreamEvent),
    Error(StreamSyntaxError),
}

/// Scans a whole chunk sequence without injecting results, recording syntax
/// errors in-line and continuing after them. Adjacent text is coalesced.
pub fn scan_stream<'a>(chunks: impl IntoIterator<Item = &'a str>) -> Vec<ScanItem> {
    let mut scanner = StreamScanner::new();
    let mut items = Vec::new();
    let mut events = Vec::new();
    let flush = |events: &mut Vec<StreamEvent>, items: &mut Vec<ScanItem>| {
        for ev in events.drain(..) {
            match (items.last_mut(), ev) {
                (Some(ScanItem::Event(StreamEvent::PlainText(prev))), StreamEvent::PlainText(t)) => {
                    prev.push_str(&t)
                }
                (_, ev) => items.push(ScanItem::Event(ev)),
            }
        }
    };
    for chunk in chunks {
        let mut pending = chunk;
        loop {
            let res = scanner.push(pending, &mut events);
            flush(&mut events, &mut items);
            match res {
                Ok(()) => break,
                Err(e) => {
                    items.push(ScanItem::Error(e));
                    pending = "";
                }
            }
        }
    }
    loop {
        let res = scanner.finish(&mut events);
        flush(&mut events, &mut items);
        match res {
            Ok(()) => break,
            Err(e) => {
                // A malformed span may leave text behind; an unterminated one
                // has already emitted End.
                let done = e.kind == StreamErrorKind::Unterminated;
                items.push(ScanItem::Error(e));
                if done {
                    break;
                }
            }
        }
    }
    items
}
