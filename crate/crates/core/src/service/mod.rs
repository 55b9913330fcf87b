//! HTTP query service: guardrails, geocoding, response cache, the tool loop
//! and per-request latency traces.

mod cache;
mod config;
mod geocode;
mod guardrail;
mod handler;
mod http;
mod overpass;

use std::io::BufRead;
use std::path::Path;
use std::sync::Arc;

use serde::Deserialize;
use thiserror::Error;

pub use cache::{cache_key, CacheStats, CachedAnswer, ResponseCache};
pub use config::{BackendConfig, BackendKind, GuardrailConfig, OverpassConfig, ServiceConfig};
pub use geocode::{GeocodeInput, GeocodeSource, Geocoded, Geocoder, LocationNotFound};
pub use guardrail::{guardrail_check, strip_markers, GuardrailVerdict, Verdict};
pub use handler::{
    display_text, CountingBackend, PhaseStats, QueryError, QueryErrorKind, QueryRequest, QueryResponse,
    QueryService, QueryTrace, RequestCounts, ServiceStats, TraceCall,
};
pub use http::{router, serve, GeocodeRequest};
pub use overpass::{
    import_snapshot, overpass_query, parse_elements, FixtureOverpass, HttpOverpass, OverpassClient, OverpassError,
    OverpassFixture, OverpassSource,
};

use crate::adapter::{Backend, MockBackend, RemoteBackend, RemoteConfig};
use crate::datagen::{generate_pairs, RuleParaphraser, TemplateRegistry};
use crate::protocol::Registry;
use crate::store::{Store, StoreExecutor};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ServiceError {
    #[error("config: {0}")]
    Config(String),
    #[error("store: {0}")]
    Store(#[from] crate::store::StoreError),
    #[error("templates: {0}")]
    Templates(#[from] crate::datagen::DatagenError),
    #[error("backend: {0}")]
    Backend(#[from] crate::adapter::AdapterError),
    #[error("overpass: {0}")]
    Overpass(#[from] OverpassError),
}

/// Reads and merges template registry files.
pub fn load_templates(paths: &[impl AsRef<Path>]) -> Result<TemplateRegistry, ServiceError> {
    let registry = Registry::standard();
    let mut out = TemplateRegistry::default();
    for p in paths {
        let p = p.as_ref();
        let text = std::fs::read_to_string(p).map_err(|e| ServiceError::Config(format!("{}: {e}", p.display())))?;
        out.merge(TemplateRegistry::parse(&text, &registry)?, &registry)?;
    }
    Ok(out)
}

#[derive(Deserialize)]
struct AnswerRecord {
    question: String,
    answer: String,
}

/// Registers `{question, answer}` records, one JSON object per line.
pub fn register_answers(mock: &MockBackend, reader: impl BufRead) -> Result<usize, ServiceError> {
    let mut n = 0;
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| ServiceError::Config(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let r: AnswerRecord =
            serde_json::from_str(&line).map_err(|e| ServiceError::Config(format!("answers line {}: {e}", i + 1)))?;
        mock.register(&r.question, r.answer);
        n += 1;
    }
    Ok(n)
}

/// Builds the backend a config asks for. A mock backend is primed from the
/// configured answer file and, optionally, every template question.
pub fn build_backend(
    config: &ServiceConfig,
    store: &Arc<Store>,
    templates: &TemplateRegistry,
) -> Result<Arc<dyn Backend>, ServiceError> {
    match config.backend.kind {
        BackendKind::Remote => Ok(Arc::new(RemoteBackend::new(RemoteConfig {
            endpoint: config.backend.endpoint.clone(),
            timeout_ms: config.backend.timeout_ms,
        })?)),
        BackendKind::Mock => {
            let mock = MockBackend::new();
            if config.backend.from_templates {
                let exec = StoreExecutor::new(store.clone());
                let g = generate_pairs(templates, &Registry::standard(), store.gazetteer(), &exec, &RuleParaphraser, 0);
                for p in g.pairs {
                    mock.register(&p.question, p.answer);
                }
            }
            if let Some(path) = &config.backend.answers {
                let f = std::fs::File::open(path)
                    .map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
                register_answers(&mock, std::io::BufReader::new(f))?;
            }
            log::info!("mock backend knows {} questions", mock.len());
            Ok(Arc::new(mock))
        }
    }
}

pub fn build_overpass(config: &OverpassConfig) -> Result<Option<OverpassClient>, ServiceError> {
    if !config.enabled {
        return Ok(None);
    }
    let source: Box<dyn OverpassSource> = match &config.fixtures {
        Some(dir) => Box::new(FixtureOverpass::load_dir(dir)?),
        None => Box::new(HttpOverpass::new(config.endpoint.clone(), config.timeout_ms)?),
    };
    Ok(Some(OverpassClient::new(source)))
}

/// Loads store, templates, backend and geocoder from a config.
pub fn build_service(config: &ServiceConfig) -> Result<QueryService, ServiceError> {
    let (store, report) = Store::open(&config.dataset, &config.gazetteer)?;
    if report.records_rejected + report.gazetteer_rejected > 0 {
        log::warn!(
            "ingest rejected {} records and {} gazetteer rows",
            report.records_rejected,
            report.gazetteer_rejected
        );
    }
    let store = Arc::new(store);
    let templates = load_templates(&config.templates)?;
    let backend = build_backend(config, &store, &templates)?;
    let overpass = build_overpass(&config.overpass)?;
    Ok(QueryService::new(store, backend, templates, overpass, config))
}
