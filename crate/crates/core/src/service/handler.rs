use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::cache::{cache_key, CacheStats, ResponseCache};
use super::config::{GuardrailConfig, ServiceConfig};
use super::geocode::{GeocodeInput, Geocoded, Geocoder, LocationNotFound};
use super::guardrail::{guardrail_check, GuardrailVerdict, Verdict};
use super::overpass::OverpassClient;
use crate::adapter::{
    default_system_prompt, run_tool_loop, AdapterError, Backend, CallRecord, ChunkStream, GenerationRequest,
};
use crate::datagen::{TemplateRegistry, UiQuestion, SLOT_LOCATION};
use crate::protocol::{parse_annotated, serialize_call, Registry, Segment};
use crate::store::{GeoPoint, Store, StoreExecutor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRequest {
    pub question: String,
    #[serde(default)]
    pub lat: Option<f64>,
    #[serde(default)]
    pub lon: Option<f64>,
    /// Language hint; informational only.
    #[serde(default)]
    pub lang: Option<String>,
}

impl QueryRequest {
    pub fn new(question: impl Into<String>) -> Self {
        Self { question: question.into(), lat: None, lon: None, lang: None }
    }

    pub fn at(mut self, lat: f64, lon: f64) -> Self {
        self.lat = Some(lat);
        self.lon = Some(lon);
        self
    }
}

/// One intercepted call and what it returned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceCall {
    /// Serialized call with its injected result, if any.
    pub call: String,
    pub function: String,
    pub args: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Replaced by a retry.
    pub superseded: bool,
}

impl From<&CallRecord> for TraceCall {
    fn from(r: &CallRecord) -> Self {
        Self {
            call: serialize_call(&r.call, r.result.as_ref().ok()),
            function: r.call.name.clone(),
            args: r.call.args.iter().cloned().collect(),
            result: r.result.as_ref().ok().map(|x| x.payload()),
            error: r.result.as_ref().err().cloned(),
            superseded: r.superseded,
        }
    }
}

/// Per-request latency breakdown and call chain.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QueryTrace {
    pub inference_ms: f64,
    pub data_lookup_ms: f64,
    pub backend_logic_ms: f64,
    pub cache_hit: bool,
    pub calls: Vec<TraceCall>,
    pub guardrail: Option<GuardrailVerdict>,
    /// Place names the question was resolved against.
    pub locations: Vec<String>,
    /// Model output with calls and injected results.
    pub annotated_answer: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResponse {
    pub answer: String,
    pub trace: QueryTrace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryErrorKind {
    Rejected,
    LocationNotFound,
    BackendUnavailable,
    GenerationFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryError {
    pub error: QueryErrorKind,
    pub message: String,
    pub trace: QueryTrace,
}

/// Counts generate calls on the wrapped backend.
pub struct CountingBackend {
    inner: Arc<dyn Backend>,
    count: AtomicUsize,
}

impl CountingBackend {
    pub fn new(inner: Arc<dyn Backend>) -> Self {
        Self { inner, count: AtomicUsize::new(0) }
    }

    pub fn invocations(&self) -> usize {
        self.count.load(Ordering::SeqCst)
    }
}

impl Backend for CountingBackend {
    fn generate(&self, request: &GenerationRequest) -> Result<ChunkStream, AdapterError> {
        self.count.fetch_add(1, Ordering::SeqCst);
        self.inner.generate(request)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseStats {
    pub count: u64,
    pub mean_inference_ms: f64,
    pub mean_data_lookup_ms: f64,
    pub mean_backend_logic_ms: f64,
    pub max_total_ms: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RequestCounts {
    pub total: u64,
    pub answered: u64,
    pub rejected: u64,
    pub failed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceStats {
    pub requests: RequestCounts,
    pub cache: CacheStats,
    pub latency: PhaseStats,
    pub backend_invocations: usize,
}

#[derive(Debug, Default)]
struct Aggregates {
    counts: RequestCounts,
    sums: [f64; 3],
    max_total: f64,
}

/// Guardrail, geocoding, cache and tool loop behind one call.
pub struct QueryService {
    store: Arc<Store>,
    backend: CountingBackend,
    executor: StoreExecutor,
    cache: ResponseCache,
    geocoder: Geocoder,
    templates: TemplateRegistry,
    guardrail: GuardrailConfig,
    template_request: GenerationRequest,
    retry_budget: usize,
    aggregates: Mutex<Aggregates>,
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1000.0
}

/// Answer prose with embedded calls removed and spacing tidied.
pub fn display_text(annotated: &str) -> String {
    let parsed = parse_annotated(annotated);
    let mut out = String::new();
    for seg in &parsed.segments {
        if let Segment::Text(t) = seg {
            out.push_str(t);
        }
    }
    let joined = out.split_whitespace().collect::<Vec<_>>().join(" ");
    [" .", " ,", " ?", " !"].iter().fold(joined, |acc, p| acc.replace(p, &p[1..]))
}

impl QueryService {
    pub fn new(
        store: Arc<Store>,
        backend: Arc<dyn Backend>,
        templates: TemplateRegistry,
        overpass: Option<OverpassClient>,
        config: &ServiceConfig,
    ) -> Self {
        let mut template_request = GenerationRequest::new("");
        template_request.system_prompt =
            config.backend.system_prompt.clone().unwrap_or_else(|| default_system_prompt(&Registry::standard()));
        template_request.max_tokens = config.backend.max_tokens;
        template_request.temperature = config.backend.temperature;
        Self {
            executor: StoreExecutor::new(store.clone()),
            geocoder: Geocoder::new(store.clone(), config.geocode_radius_km, overpass),
            store,
            backend: CountingBackend::new(backend),
            cache: ResponseCache::new(config.cache_capacity),
            templates,
            guardrail: config.guardrail.clone(),
            template_request,
            retry_budget: config.retry_budget,
            aggregates: Mutex::new(Aggregates::default()),
        }
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn backend_invocations(&self) -> usize {
        self.backend.invocations()
    }

    pub fn ui_questions(&self) -> Vec<UiQuestion> {
        self.templates.ui_questions()
    }

    pub fn geocode(&self, input: GeocodeInput<'_>) -> Result<Geocoded, LocationNotFound> {
        self.geocoder.geocode(input)
    }

    pub fn stats(&self) -> ServiceStats {
        let a = self.aggregates.lock().expect("stats poisoned");
        let n = a.counts.total.max(1) as f64;
        ServiceStats {
            requests: a.counts,
            cache: self.cache.stats(),
            latency: PhaseStats {
                count: a.counts.total,
                mean_inference_ms: a.sums[0] / n,
                mean_data_lookup_ms: a.sums[1] / n,
                mean_backend_logic_ms: a.sums[2] / n,
                max_total_ms: a.max_total,
            },
            backend_invocations: self.backend.invocations(),
        }
    }

    fn record(&self, trace: &mut QueryTrace, start: Instant, outcome: fn(&mut RequestCounts)) {
        let total = ms(start.elapsed());
        trace.backend_logic_ms = (total - trace.inference_ms - trace.data_lookup_ms).max(0.0);
        let mut a = self.aggregates.lock().expect("stats poisoned");
        a.counts.total += 1;
        outcome(&mut a.counts);
        a.sums[0] += trace.inference_ms;
        a.sums[1] += trace.data_lookup_ms;
        a.sums[2] += trace.backend_logic_ms;
        a.max_total = a.max_total.max(total);
    }

    fn fail(&self, error: QueryErrorKind, message: String, mut trace: QueryTrace, start: Instant) -> QueryError {
        let outcome: fn(&mut RequestCounts) =
            if error == QueryErrorKind::Rejected { |c| c.rejected += 1 } else { |c| c.failed += 1 };
        self.record(&mut trace, start, outcome);
        QueryError { error, message, trace }
    }

    pub fn handle_query(&self, request: &QueryRequest) -> Result<QueryResponse, QueryError> {
        let start = Instant::now();
        let mut trace = QueryTrace::default();

        let point = match (request.lat, request.lon) {
            (None, None) => None,
            (Some(lat), Some(lon)) => match GeoPoint::new(lat, lon) {
                Ok(p) => Some(p),
                Err(e) => return Err(self.reject_malformed(e.to_string(), trace, start)),
            },
            _ => return Err(self.reject_malformed("lat and lon must be given together".into(), trace, start)),
        };
        let (verdict, mut question) = guardrail_check(&request.question, point.is_some(), &self.guardrail);
        trace.guardrail = Some(verdict.clone());
        if !verdict.allowed() {
            return Err(self.fail(QueryErrorKind::Rejected, verdict.reason, trace, start));
        }

        let lookup = Instant::now();
        let slot = format!("{{{SLOT_LOCATION}}}");
        if let Some(p) = point {
            match self.geocoder.geocode(GeocodeInput::Point(p)) {
                Ok(g) => {
                    question = question.replace(&slot, &g.name);
                    trace.locations.push(g.name);
                }
                Err(LocationNotFound(msg)) => {
                    trace.data_lookup_ms = ms(lookup.elapsed());
                    return Err(self.fail(QueryErrorKind::LocationNotFound, msg, trace, start));
                }
            }
        }
        if question.contains(&slot) {
            trace.data_lookup_ms = ms(lookup.elapsed());
            let msg = "Please pick a place on the map or type its name.".to_string();
            return Err(self.fail(QueryErrorKind::LocationNotFound, msg, trace, start));
        }
        for name in self.geocoder.mentions(&question) {
            if !trace.locations.contains(&name) {
                trace.locations.push(name);
            }
        }
        trace.data_lookup_ms = ms(lookup.elapsed());

        let key = cache_key(&question, &trace.locations);
        if let Some(hit) = self.cache.get(&key) {
            trace.cache_hit = true;
            trace.calls = hit.trace.calls;
            trace.annotated_answer = hit.trace.annotated_answer;
            self.record(&mut trace, start, |c| c.answered += 1);
            return Ok(QueryResponse { answer: hit.answer, trace });
        }

        let mut req = self.template_request.clone();
        req.user_prompt = question;
        let loop_start = Instant::now();
        match run_tool_loop(&self.backend, &req, &self.executor, self.retry_budget) {
            Ok(outcome) => {
                trace.inference_ms = ms(outcome.timings.generation);
                trace.data_lookup_ms += ms(outcome.timings.execution);
                trace.calls = outcome.calls.iter().map(TraceCall::from).collect();
                let answer = display_text(&outcome.final_text);
                trace.annotated_answer = Some(outcome.final_text);
                self.record(&mut trace, start, |c| c.answered += 1);
                self.cache.put(key, answer.clone(), trace.clone());
                Ok(QueryResponse { answer, trace })
            }
            Err(e) => {
                trace.inference_ms = ms(loop_start.elapsed());
                let kind = match e {
                    AdapterError::BackendUnavailable(_) => QueryErrorKind::BackendUnavailable,
                    _ => QueryErrorKind::GenerationFailed,
                };
                let message = match kind {
                    QueryErrorKind::BackendUnavailable => {
                        "The language model is not reachable right now. Please try again later.".to_string()
                    }
                    _ => format!("Sorry, I could not answer that question ({e})."),
                };
                log::warn!("query failed: {e}");
                Err(self.fail(kind, message, trace, start))
            }
        }
    }

    fn reject_malformed(&self, reason: String, mut trace: QueryTrace, start: Instant) -> QueryError {
        trace.guardrail =
            Some(GuardrailVerdict { verdict: Verdict::RejectedMalformed, reason: reason.clone(), sanitized: false });
        self.fail(QueryErrorKind::Rejected, reason, trace, start)
    }
}
