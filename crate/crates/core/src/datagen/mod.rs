//! Synthetic question/answer pairs from table projections.
//!
//! Templates live in a reviewed TOML registry; each one verbalizes a
//! projection and binds a call. Instantiation fills the slots from the
//! gazetteer and the closed value domains, answers are produced by actually
//! executing the call, and paraphrases only ever touch text outside slot
//! values.

mod instantiate;
mod paraphrase;
mod schema;
mod split;
mod template;

use std::collections::HashSet;

use rayon::prelude::*;
use thiserror::Error;

use crate::protocol::Registry;
use crate::store::{GazetteerEntry, ToolExecutor};

pub use instantiate::{check_ground_truth, generate_answer, instantiate, PairMetadata, QAPair, Skeleton, Split};
pub use paraphrase::{paraphrase, ModelParaphraser, Paraphraser, RuleParaphraser};
pub use schema::{enumerate_projections, AttrKind, Attribute, Projection, ProjectionFilter, SchemaFile, TableSchema};
pub use split::{
    assign_splits, export, prompt_template, split_and_export, ExportManifest, SplitSpec, MANIFEST_FILE,
    PROMPT_TEMPLATE_FILE,
};
pub use template::{
    fill, slots_in, CallTemplate, QuestionTemplate, SurfaceForms, TemplateRegistry, UiQuestion, SLOT_CATEGORY,
    SLOT_LOCATION, SLOT_METRIC, SLOT_MODE,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DatagenError {
    #[error("schema: {0}")]
    Schema(String),
    #[error("projection filter leaves nothing: {0}")]
    ConfigTooRestrictive(String),
    #[error("template {id:?}: {message}")]
    Template { id: String, message: String },
    #[error("split infeasible: {0}")]
    SplitInfeasible(String),
    #[error("io: {0}")]
    Io(String),
}

/// A skeleton that could not be executed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DroppedSkeleton {
    pub question: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct Generated {
    /// Each original followed by its paraphrases.
    pub pairs: Vec<QAPair>,
    pub dropped: Vec<DroppedSkeleton>,
}

/// Slot values as they appear in the question text.
fn protected_spans(sk: &Skeleton, templates: &TemplateRegistry) -> Vec<String> {
    let mut out: Vec<String> = sk
        .bindings
        .iter()
        .map(|(slot, v)| templates.surface_form(&sk.language, slot, v))
        .filter(|s| !s.is_empty() && sk.question.contains(s.as_str()))
        .collect();
    out.sort();
    out.dedup();
    out
}

/// Instantiates, executes and paraphrases. Output order is deterministic.
pub fn generate_pairs(
    templates: &TemplateRegistry,
    registry: &Registry,
    gazetteer: &[GazetteerEntry],
    executor: &dyn ToolExecutor,
    paraphraser: &dyn Paraphraser,
    paraphrases: usize,
) -> Generated {
    let skeletons = instantiate(templates, registry, gazetteer);
    let results: Vec<Result<Vec<QAPair>, DroppedSkeleton>> = skeletons
        .par_iter()
        .enumerate()
        .map(|(i, sk)| {
            let id = format!("{}-{i:06}", sk.template_id);
            match generate_answer(sk, executor, id) {
                Ok(pair) => {
                    let variants = paraphrase(&pair, paraphraser, &protected_spans(sk, templates), paraphrases);
                    Ok(std::iter::once(pair).chain(variants).collect())
                }
                Err(e) => Err(DroppedSkeleton { question: sk.question.clone(), reason: e.to_string() }),
            }
        })
        .collect();

    let mut out = Generated::default();
    let mut seen = HashSet::new();
    for r in results {
        match r {
            Ok(pairs) => {
                for p in pairs {
                    if seen.insert(p.question.clone()) {
                        out.pairs.push(p);
                    }
                }
            }
            Err(d) => {
                log::info!("dropping {:?}: {}", d.question, d.reason);
                out.dropped.push(d);
            }
        }
    }
    out
}
