//! Generators for calls, results and streamed transcripts.

use proptest::prelude::*;
use proptest::sample::Index;

use geoask_core::protocol::{serialize_call, ResultValue, ToolCall, ToolResult};

pub fn ident() -> impl Strategy<Value = String> {
    "[a-z_][a-z0-9_]{0,11}"
}

/// Quoted values, including quotes, backslashes and non-ASCII text.
pub fn value() -> impl Strategy<Value = String> {
    r#"[a-zA-Z0-9 ,.=(){}:;'"\\ñüé€_-]{0,16}"#
}

pub fn call() -> impl Strategy<Value = ToolCall> {
    (ident(), prop::collection::btree_map(ident(), value(), 0..5)).prop_map(|(name, args)| {
        args.into_iter().fold(ToolCall::new(name), |c, (k, v)| c.arg(k, v))
    })
}

pub fn result_value() -> impl Strategy<Value = ResultValue> {
    prop_oneof![
        any::<f64>().prop_filter("finite", |x| x.is_finite()).prop_map(ResultValue::Number),
        (-1_000_000i64..1_000_000, 0u32..4).prop_map(|(m, e)| ResultValue::Number(m as f64 / 10f64.powi(e as i32))),
        value().prop_map(ResultValue::Text),
    ]
}

pub fn result() -> impl Strategy<Value = ToolResult> {
    prop::collection::btree_map(value(), result_value(), 0..4)
        .prop_map(|m| ToolResult { fields: m.into_iter().collect() })
}

/// Prose without angle brackets, plus fragments that only look like a tag.
pub fn prose() -> impl Strategy<Value = String> {
    prop_oneof![
        4 => r#"[a-zA-Z0-9 ,.?!'"()ñ\n-]{0,24}"#,
        1 => Just("<".to_string()),
        1 => Just("<AP".to_string()),
        1 => Just("</AP".to_string()),
    ]
}

#[derive(Debug, Clone)]
pub enum Piece {
    Prose(String),
    Call(ToolCall, Option<ToolResult>),
}

impl Piece {
    pub fn render(&self) -> String {
        match self {
            Piece::Prose(s) => s.clone(),
            Piece::Call(c, r) => serialize_call(c, r.as_ref()),
        }
    }
}

pub fn transcript() -> impl Strategy<Value = Vec<Piece>> {
    let piece = prop_oneof![
        prose().prop_map(Piece::Prose),
        (call(), prop::option::of(result())).prop_map(|(c, r)| Piece::Call(c, r)),
    ];
    prop::collection::vec(piece, 0..6)
}

/// Splits `text` at char boundaries chosen by `cuts`.
pub fn partition<'a>(text: &'a str, cuts: &[Index]) -> Vec<&'a str> {
    let bounds: Vec<usize> = text.char_indices().map(|(i, _)| i).chain([text.len()]).collect();
    let mut at: Vec<usize> = cuts.iter().map(|c| bounds[c.index(bounds.len())]).collect();
    at.extend([0, text.len()]);
    at.sort_unstable();
    at.dedup();
    at.windows(2).map(|w| &text[w[0]..w[1]]).collect()
}
