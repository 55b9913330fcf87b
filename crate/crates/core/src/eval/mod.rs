//! Answer-level metrics and corpus reports.
//!
//! ROUGE-L and BLEU-4 are computed over whitespace tokens of the whole
//! answer after call canonicalization. Exact match and the error class look
//! at the first embedded call only.

mod corpus;
mod metrics;

use thiserror::Error;

pub use corpus::{
    evaluate_corpus, read_examples, EvalExample, EvalReport, ExampleResult, PredictionFile,
    PredictionRecord, Predictor, ReportRow, OVERALL,
};
pub use metrics::{
    bleu_4, bleu_detail, classify_error, exact_match, first_call, lcs_length, rouge_l, score_pair,
    tokenize, BleuDetail, ErrorClass, MetricScores, BLEU_ORDER,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("predictions missing for {} example(s): {}", .0.len(), .0.join(", "))]
    ReportIncomplete(Vec<String>),
    #[error("prediction failed for {id}: {message}")]
    Prediction { id: String, message: String },
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("io: {0}")]
    Io(String),
}
