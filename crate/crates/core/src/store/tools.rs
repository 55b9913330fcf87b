use std::sync::Arc;

use thiserror::Error;

use super::{Category, Metric, Store, StoreError, TravelMode};
use crate::protocol::{
    describe_issues, Registry, SignatureIssue, ToolCall, ToolResult, COMPARE_MODES, GET_CLOSEST,
    LIST_WITHIN,
};

/// Maps a parsed call onto an executed result.
pub trait ToolExecutor: Send + Sync {
    fn execute(&self, call: &ToolCall) -> Result<ToolResult, ExecError>;
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExecError {
    #[error("invalid call: {0}")]
    Signature(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecMode {
    /// Any signature issue is an error.
    #[default]
    Strict,
    /// Arguments are looked up by name; order is ignored.
    Lenient,
}

#[derive(Debug, Clone)]
pub struct StoreExecutor {
    store: Arc<Store>,
    registry: Registry,
    mode: ExecMode,
}

impl StoreExecutor {
    pub fn new(store: Arc<Store>) -> Self {
        Self { store, registry: Registry::standard(), mode: ExecMode::Strict }
    }

    pub fn with_mode(mut self, mode: ExecMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn store(&self) -> &Store {
        &self.store
    }
}

fn arg<'c>(call: &'c ToolCall, name: &str) -> Result<&'c str, ExecError> {
    call.get(name)
        .ok_or_else(|| ExecError::Signature(format!("missing parameter {name:?}")))
}

fn parsed<T: std::str::FromStr<Err = StoreError>>(call: &ToolCall, name: &str) -> Result<T, ExecError> {
    Ok(arg(call, name)?.parse()?)
}

fn number(call: &ToolCall, name: &str) -> Result<f64, ExecError> {
    let raw = arg(call, name)?;
    raw.trim()
        .parse()
        .map_err(|_| ExecError::Signature(format!("{name} {raw:?} is not a number")))
}

fn joined<I: IntoIterator<Item = String>>(items: I) -> String {
    items.into_iter().collect::<Vec<_>>().join("; ")
}

impl ToolExecutor for StoreExecutor {
    fn execute(&self, call: &ToolCall) -> Result<ToolResult, ExecError> {
        let issues = self.registry.check(call);
        let blocking: Vec<SignatureIssue> = match self.mode {
            ExecMode::Strict => issues,
            ExecMode::Lenient => issues
                .into_iter()
                .filter(|i| *i != SignatureIssue::Misordered)
                .collect(),
        };
        if !blocking.is_empty() {
            return Err(ExecError::Signature(describe_issues(&blocking)));
        }

        let store = &self.store;
        match call.name.as_str() {
            GET_CLOSEST => {
                let category: Category = parsed(call, "category")?;
                let mode: TravelMode = parsed(call, "mode")?;
                let _: Metric = parsed(call, "metric_to_extract")?;
                let c = store.get_closest_distance_time(category, mode, arg(call, "location")?)?;
                Ok(ToolResult::new().field("distance", c.distance).field("time", c.time))
            }
            LIST_WITHIN => {
                let population_max = match call.get("population_max") {
                    Some(_) => {
                        let p = number(call, "population_max")?;
                        if p < 0.0 {
                            return Err(StoreError::InvalidArgument("population_max must be >= 0".into()).into());
                        }
                        Some(p.floor() as u64)
                    }
                    None => None,
                };
                let hits = store.list_within_threshold(
                    parsed(call, "category")?,
                    parsed(call, "mode")?,
                    parsed(call, "metric")?,
                    number(call, "threshold")?,
                    population_max,
                )?;
                Ok(ToolResult::new()
                    .field("count", hits.len() as f64)
                    .field("locations", joined(hits.iter().map(|h| h.name.clone())))
                    .field("values", joined(hits.iter().map(|h| h.value.to_string()))))
            }
            COMPARE_MODES => {
                let cmp = store.compare_modes(
                    parsed(call, "category")?,
                    arg(call, "location")?,
                    parsed(call, "metric")?,
                )?;
                let mut result = ToolResult::new()
                    .field("ranking", joined(cmp.ranking.iter().map(|(m, _)| m.to_string())));
                for (mode, value) in &cmp.ranking {
                    result = result.field(mode.as_str(), *value);
                }
                if !cmp.missing.is_empty() {
                    result = result.field("missing", joined(cmp.missing.iter().map(|m| m.to_string())));
                }
                Ok(result)
            }
            other => Err(ExecError::Signature(format!("unknown function {other:?}"))),
        }
    }
}
