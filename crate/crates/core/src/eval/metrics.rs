use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::protocol::{canonicalize_text, parse_annotated, validate_call, Registry, ToolCall, Validation, OPEN_TAG};
use crate::store::Store;

pub const BLEU_ORDER: usize = 4;

/// Whitespace tokens of `text` after every embedded call is rewritten in
/// canonical form.
pub fn tokenize(text: &str) -> Vec<String> {
    canonicalize_text(text).split_whitespace().map(str::to_owned).collect()
}

/// Longest common subsequence length, two-row dynamic programme.
pub fn lcs_length<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let (long, short) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    let mut prev = vec![0usize; short.len() + 1];
    let mut cur = vec![0usize; short.len() + 1];
    for x in long {
        for (j, y) in short.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[short.len()]
}

/// `2 * LCS / (|R| + |G|)`; 1 when both are empty.
pub fn rouge_l<T: PartialEq>(r: &[T], g: &[T]) -> f64 {
    if r.is_empty() && g.is_empty() {
        return 1.0;
    }
    2.0 * lcs_length(r, g) as f64 / (r.len() + g.len()) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BleuDetail {
    /// Clipped precisions p_1..p_4.
    pub precisions: [f64; BLEU_ORDER],
    pub brevity_penalty: f64,
    pub score: f64,
}

fn ngram_counts<T: Eq + std::hash::Hash>(seq: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if seq.len() >= n {
        for w in seq.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Unsmoothed BLEU-4 with uniform weights. An order with no candidate
/// n-grams counts as precision 1.
pub fn bleu_detail<T: Eq + std::hash::Hash>(r: &[T], g: &[T]) -> BleuDetail {
    let mut precisions = [0.0; BLEU_ORDER];
    for (i, p) in precisions.iter_mut().enumerate() {
        let n = i + 1;
        let cand = ngram_counts(g, n);
        let refs = ngram_counts(r, n);
        let total: usize = cand.values().sum();
        let clipped: usize = cand.iter().map(|(k, c)| (*c).min(refs.get(k).copied().unwrap_or(0))).sum();
        *p = if total == 0 { 1.0 } else { clipped as f64 / total as f64 };
    }
    let brevity_penalty = if g.is_empty() {
        0.0
    } else if g.len() >= r.len() {
        1.0
    } else {
        (1.0 - r.len() as f64 / g.len() as f64).exp()
    };
    let score = if g.is_empty() || precisions.contains(&0.0) {
        0.0
    } else {
        let log_mean = precisions.iter().map(|p| p.ln()).sum::<f64>() / BLEU_ORDER as f64;
        (brevity_penalty * log_mean.exp()).min(1.0)
    };
    BleuDetail { precisions, brevity_penalty, score }
}

pub fn bleu_4<T: Eq + std::hash::Hash>(r: &[T], g: &[T]) -> f64 {
    bleu_detail(r, g).score
}

/// First well-formed call in an answer text.
pub fn first_call(text: &str) -> Option<ToolCall> {
    parse_annotated(text).first_call().map(|(c, _)| c.clone())
}

/// True iff both texts carry a call and the first calls agree on name,
/// argument names, values and order. Result payloads are ignored.
pub fn exact_match(reference: &str, generated: &str) -> bool {
    match (first_call(reference), first_call(generated)) {
        (Some(r), Some(g)) => r.head() == g.head(),
        _ => false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorClass {
    Exact,
    SyntaxError,
    LocationError,
    Other,
}

impl ErrorClass {
    pub const ALL: [ErrorClass; 4] = [Self::Exact, Self::SyntaxError, Self::LocationError, Self::Other];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Exact => "exact",
            Self::SyntaxError => "syntax_error",
            Self::LocationError => "location_error",
            Self::Other => "other",
        }
    }
}

impl std::fmt::Display for ErrorClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn classify_error(reference: &str, generated: &str, registry: &Registry, store: &Store) -> ErrorClass {
    if exact_match(reference, generated) {
        return ErrorClass::Exact;
    }
    let Some(call) = first_call(generated) else {
        return if generated.contains(OPEN_TAG) { ErrorClass::SyntaxError } else { ErrorClass::Other };
    };
    match validate_call(&call, registry, store) {
        Validation::SyntaxInvalid(_) => ErrorClass::SyntaxError,
        Validation::LocationInvalid(_) => ErrorClass::LocationError,
        Validation::OtherInvalid(_) => ErrorClass::Other,
        Validation::Valid => {
            let want = first_call(reference);
            let want = want.as_ref().and_then(|c| c.get("location"));
            match (want, call.get("location")) {
                (Some(w), Some(g)) if w != g => ErrorClass::LocationError,
                _ => ErrorClass::Other,
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricScores {
    pub rouge_l: f64,
    pub bleu_4: f64,
    pub exact_match: bool,
    pub bleu: BleuDetail,
    pub lcs: usize,
}

/// BLEU and ROUGE over full answers, exact match over the call span.
pub fn score_pair(reference: &str, generated: &str) -> MetricScores {
    let r = tokenize(reference);
    let g = tokenize(generated);
    let bleu = bleu_detail(&r, &g);
    MetricScores {
        rouge_l: rouge_l(&r, &g),
        bleu_4: bleu.score,
        exact_match: exact_match(reference, generated),
        bleu,
        lcs: lcs_length(&r, &g),
    }
}
