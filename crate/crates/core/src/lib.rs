//! Natural-language querying of geo-accessibility data through a
//! tool-calling language model.
//!
//! - [`store`]: dataset ingest, gazetteer and the executable query API
//! - [`protocol`]: the `<API>...</API>` call grammar and stream interception
//! - [`adapter`]: generation backends and the pause-execute-resume loop
//! - [`datagen`]: synthetic question/answer generation from table projections
//! - [`eval`]: ROUGE-L, BLEU-4, exact match and the error taxonomy
//! - [`sample`]: a deterministic synthetic region for demos and tests
//! - [`service`]: guardrails, geocoding, response cache and the HTTP API

pub mod adapter;
pub mod datagen;
pub mod eval;
pub mod protocol;
pub mod sample;
pub mod service;
pub mod store;
