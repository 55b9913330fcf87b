use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{generate_stream, AdapterError, Backend, GenerationRequest};
use crate::eval::{EvalExample, Predictor};
use crate::protocol::{serialize_call, StreamErrorKind, StreamEvent, StreamScanner, ToolCall, ToolResult};
use crate::store::ToolExecutor;

/// Appended when the retry budget runs out on a failed call.
pub const FALLBACK_TEXT: &str = " Sorry, I could not retrieve that information.";

/// Upper bound on executed calls in one answer.
pub const MAX_CALL_SITES: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    pub call: ToolCall,
    pub result: Result<ToolResult, String>,
    /// Failed and replaced by a retry; absent from the final text.
    pub superseded: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LoopTimings {
    pub generation: Duration,
    pub execution: Duration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopOutcome {
    pub final_text: String,
    pub calls: Vec<CallRecord>,
    pub timings: LoopTimings,
    /// Backend invocations, one per resume or retry.
    pub generations: usize,
}

impl LoopOutcome {
    /// Calls that appear in `final_text`, in order.
    pub fn kept_calls(&self) -> impl Iterator<Item = &CallRecord> {
        self.calls.iter().filter(|c| !c.superseded)
    }
}

/// Re-prompt after a failed call.
pub fn retry_prompt(original: &str, failed: &ToolCall, diagnostic: &str) -> String {
    let diagnostic = diagnostic.split_whitespace().collect::<Vec<_>>().join(" ");
    format!(
        "{original}\nPrevious call: {}\nError: {diagnostic}\nEmit a corrected call.",
        serialize_call(failed, None)
    )
}

enum Step {
    /// Stream ended normally.
    Done,
    /// A call was executed; resume with the extended prefix.
    Resume,
    /// A call failed and a retry prompt replaces the user prompt.
    Retry(String),
    /// A call failed with no budget left.
    GiveUp,
}

/// Drives generation through the stream scanner, executing each call as its
/// head completes and resuming with the result in context.
pub fn run_tool_loop(
    backend: &dyn Backend,
    request: &GenerationRequest,
    executor: &dyn ToolExecutor,
    retry_budget: usize,
) -> Result<LoopOutcome, AdapterError> {
    let mut text = String::new();
    let mut calls = Vec::new();
    let mut timings = LoopTimings::default();
    let mut generations = 0;
    let mut budget = retry_budget;
    let mut req = request.clone();
    req.assistant_prefix.clear();

    loop {
        req.assistant_prefix.clone_from(&text);
        let segment_start = text.len();
        generations += 1;
        let mut scanner = StreamScanner::new();
        let mut events = Vec::new();
        let mut step = Step::Done;
        let gen_start = Instant::now();
        let mut exec_time = Duration::ZERO;
        let mut stream = generate_stream(&req, backend)?;

        'chunks: loop {
            let chunk = stream.next().transpose()?;
            let res = match &chunk {
                Some(c) => scanner.push(c, &mut events),
                None => scanner.finish(&mut events),
            };
            for ev in events.drain(..) {
                match ev {
                    StreamEvent::PlainText(t) => text.push_str(&t),
                    StreamEvent::End => {}
                    StreamEvent::CallReady(call) => {
                        if calls.iter().filter(|c: &&CallRecord| !c.superseded).count() >= MAX_CALL_SITES {
                            return Err(AdapterError::CallLimit(MAX_CALL_SITES));
                        }
                        let t = Instant::now();
                        let result = executor.execute(&call);
                        exec_time += t.elapsed();
                        match result {
                            Ok(r) => {
                                text.push_str(&call.head());
                                text.push_str(&scanner.inject(Some(&r)));
                                calls.push(CallRecord { call, result: Ok(r), superseded: false });
                                step = Step::Resume;
                            }
                            Err(e) if budget > 0 => {
                                budget -= 1;
                                let prompt = retry_prompt(&request.user_prompt, &call, &e.to_string());
                                calls.push(CallRecord { call, result: Err(e.to_string()), superseded: true });
                                step = Step::Retry(prompt);
                            }
                            Err(e) => {
                                text.push_str(&call.head());
                                text.push_str(&scanner.inject(None));
                                text.push_str(FALLBACK_TEXT);
                                calls.push(CallRecord { call, result: Err(e.to_string()), superseded: false });
                                step = Step::GiveUp;
                            }
                        }
                        break 'chunks;
                    }
                }
            }
            match res {
                Ok(()) if chunk.is_none() => break,
                Ok(()) => {}
                Err(e) if e.kind == StreamErrorKind::Unterminated => {
                    return Err(AdapterError::IncompleteCall(e.raw));
                }
                // Malformed spans stay in the answer as written.
                Err(e) => text.push_str(&e.raw),
            }
        }
        drop(stream);
        timings.generation += gen_start.elapsed().saturating_sub(exec_time);
        timings.execution += exec_time;

        match step {
            Step::Done | Step::GiveUp => break,
            Step::Resume => {}
            Step::Retry(prompt) => {
                // The retry regenerates the whole segment after the last
                // successful call.
                text.truncate(segment_start);
                req.user_prompt = prompt;
            }
        }
    }

    Ok(LoopOutcome { final_text: text, calls, timings, generations })
}

/// Generates predictions by running the tool loop per example question.
pub struct LoopPredictor<'a> {
    pub backend: &'a dyn Backend,
    pub executor: &'a dyn ToolExecutor,
    pub template: GenerationRequest,
    pub retry_budget: usize,
}

impl Predictor for LoopPredictor<'_> {
    fn predict(&self, example: &EvalExample) -> Result<Option<String>, String> {
        let mut req = self.template.clone();
        req.user_prompt.clone_from(&example.question);
        run_tool_loop(self.backend, &req, self.executor, self.retry_budget)
            .map(|o| Some(o.final_text))
            .map_err(|e| e.to_string())
    }
}
