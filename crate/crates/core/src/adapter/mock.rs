use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::RwLock;

use super::{AdapterError, Backend, ChunkStream, GenerationRequest};
use crate::protocol::{parse_head, CLOSE_TAG, OPEN_TAG};
use crate::store::canonicalize_name;

/// Replays registered reference answers.
///
/// Keys are user prompts under gazetteer canonicalization, so each
/// paraphrase must be registered on its own. With `k` closing tags already
/// in the assistant prefix, the mock resumes after the `k`-th call of the
/// reference and, when pausing, stops after the next call head.
#[derive(Debug)]
pub struct MockBackend {
    answers: RwLock<HashMap<String, String>>,
    chunk_chars: usize,
    invocations: AtomicUsize,
}

impl Default for MockBackend {
    fn default() -> Self {
        Self::new()
    }
}

impl MockBackend {
    pub fn new() -> Self {
        Self::with_chunk_chars(7)
    }

    pub fn with_chunk_chars(chunk_chars: usize) -> Self {
        Self { answers: RwLock::new(HashMap::new()), chunk_chars: chunk_chars.max(1), invocations: AtomicUsize::new(0) }
    }

    pub fn register(&self, prompt: &str, answer: impl Into<String>) {
        self.answers.write().expect("mock table poisoned").insert(canonicalize_name(prompt), answer.into());
    }

    pub fn len(&self) -> usize {
        self.answers.read().expect("mock table poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of `generate` calls so far, hits and misses alike.
    pub fn invocations(&self) -> usize {
        self.invocations.load(Ordering::SeqCst)
    }

    fn segment<'a>(answer: &'a str, prefix: &str, pause: bool) -> &'a str {
        let done = prefix.matches(CLOSE_TAG).count();
        let mut start = 0;
        for _ in 0..done {
            match answer[start..].find(CLOSE_TAG) {
                Some(i) => start += i + CLOSE_TAG.len(),
                None => return "",
            }
        }
        let rest = &answer[start..];
        if !pause {
            return rest;
        }
        match rest.find(OPEN_TAG) {
            Some(i) => match parse_head(&rest[i..]) {
                Ok((_, end)) => &rest[..i + end],
                Err(_) => rest,
            },
            None => rest,
        }
    }
}

impl Backend for MockBackend {
    fn generate(&self, request: &GenerationRequest) -> Result<ChunkStream, AdapterError> {
        self.invocations.fetch_add(1, Ordering::SeqCst);
        let key = canonicalize_name(&request.user_prompt);
        let answers = self.answers.read().expect("mock table poisoned");
        let answer = answers.get(&key).ok_or_else(|| AdapterError::MockMiss(key.clone()))?;
        let text = Self::segment(answer, &request.assistant_prefix, request.pause_in_call);
        let chars: Vec<char> = text.chars().collect();
        let chunks: Vec<Result<String, AdapterError>> = chars
            .chunks(self.chunk_chars)
            .take(request.max_tokens)
            .map(|c| Ok(c.iter().collect()))
            .collect();
        Ok(Box::new(chunks.into_iter()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const ANSWER: &str = "A <API>f(x=\"1\") -> {\"v\": 1}</API> then <API>g()</API> end.";

    fn collect(b: &MockBackend, r: &GenerationRequest) -> String {
        b.generate(r).unwrap().map(|c| c.unwrap()).collect()
    }

    #[test]
    fn segments_follow_completed_calls() {
        let b = MockBackend::new();
        b.register("Q  one", ANSWER);
        let mut r = GenerationRequest::new("q one");
        assert_eq!(collect(&b, &r), "A <API>f(x=\"1\")");
        r.assistant_prefix = "A <API>f(x=\"1\") -> {\"v\": 1}</API>".into();
        assert_eq!(collect(&b, &r), " then <API>g()");
        r.assistant_prefix.push_str(" then <API>g()</API>");
        assert_eq!(collect(&b, &r), " end.");
        r.pause_in_call = false;
        r.assistant_prefix.clear();
        assert_eq!(collect(&b, &r), ANSWER);
        assert_eq!(b.invocations(), 4);
    }

    #[test]
    fn miss_and_token_limit() {
        let b = MockBackend::with_chunk_chars(2);
        b.register("q", "abcdef");
        assert!(matches!(b.generate(&GenerationRequest::new("other")), Err(AdapterError::MockMiss(_))));
        let mut r = GenerationRequest::new("q");
        r.max_tokens = 2;
        assert_eq!(collect(&b, &r), "abcd");
    }

    #[test]
    fn deterministic() {
        let b = MockBackend::new();
        b.register("q", ANSWER);
        let r = GenerationRequest::new("q");
        assert_eq!(collect(&b, &r), collect(&b, &r));
    }
}
