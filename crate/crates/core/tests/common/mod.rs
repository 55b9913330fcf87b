//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code)]

use std::collections::HashMap;
use std::hash::Hash;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use geoask_core::datagen::{SchemaFile, TemplateRegistry};
use geoask_core::sample::{synth_sample, SampleSpec};
use geoask_core::service::{load_templates, QueryService, ServiceConfig};
use geoask_core::store::{
    canonicalize_name, AccessRecord, Category, GazetteerEntry, GeoPoint, Metric, Store, TravelMode,
};
use serde_json::Value;

pub mod strategies;

pub const WORKED_QUESTION: &str = "What is the nearest hospital from Abadiño, Durango?";
pub const WORKED_ANSWER: &str = "The closest hospital you can find is <API>get_closest_distance_time(category=\"hospital\", mode=\"drive\", location=\"Abadiño, Durango\", metric_to_extract=\"distance\") -> {\"distance\": 0.402, \"time\": 0.537}</API> 0.402km away.";
pub const WORKED_CALL: &str = "<API>get_closest_distance_time(category=\"hospital\", mode=\"drive\", location=\"Abadiño, Durango\", metric_to_extract=\"distance\") -> {\"distance\": 0.402, \"time\": 0.537}</API>";

pub fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

pub fn template_files() -> Vec<PathBuf> {
    vec![data_dir().join("templates.toml"), data_dir().join("templates_multilingual.toml")]
}

/// Shipped templates bound to the shipped schema.
pub fn shipped_templates(files: &[PathBuf]) -> TemplateRegistry {
    let schema = SchemaFile::parse(&std::fs::read_to_string(data_dir().join("schema.toml")).unwrap()).unwrap();
    let mut t = load_templates(files).unwrap();
    t.bind_projections(&schema.projections().unwrap()).unwrap();
    t
}

pub fn sample_store(locations: usize) -> Arc<Store> {
    Arc::new(synth_sample(&SampleSpec { locations, ..Default::default() }).store().unwrap())
}

/// Mock-backed service over a small synthetic region.
pub fn demo_service(locations: usize, cache_capacity: usize) -> QueryService {
    let store = sample_store(locations);
    let templates = load_templates(&template_files()).unwrap();
    let config = ServiceConfig { cache_capacity, ..Default::default() };
    let backend = geoask_core::service::build_backend(&config, &store, &templates).unwrap();
    QueryService::new(store, backend, templates, None, &config)
}

// ---------------------------------------------------------------- oracles

fn ngram_counts<T: Eq + Hash + Clone>(s: &[T], n: usize) -> HashMap<Vec<T>, usize> {
    let mut m = HashMap::new();
    if s.len() >= n {
        for i in 0..=s.len() - n {
            *m.entry(s[i..i + n].to_vec()).or_insert(0) += 1;
        }
    }
    m
}

/// Clipped n-gram BLEU-4 with uniform weights, computed from scratch.
pub fn bleu_oracle<T: Eq + Hash + Clone>(r: &[T], g: &[T]) -> f64 {
    if g.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=4 {
        let cand = ngram_counts(g, n);
        let refc = ngram_counts(r, n);
        let total: usize = cand.values().sum();
        if total == 0 {
            continue;
        }
        let clipped: usize = cand.iter().map(|(k, c)| (*c).min(*refc.get(k).unwrap_or(&0))).sum();
        if clipped == 0 {
            return 0.0;
        }
        log_sum += (clipped as f64 / total as f64).ln();
    }
    let bp = if g.len() > r.len() { 1.0 } else { (1.0 - r.len() as f64 / g.len() as f64).exp() };
    bp * (log_sum / 4.0).exp()
}

fn is_subsequence<T: PartialEq>(needle: &[&T], hay: &[T]) -> bool {
    let mut it = hay.iter();
    needle.iter().all(|x| it.any(|h| h == *x))
}

/// Longest common subsequence by trying every subsequence of the shorter side.
pub fn lcs_oracle<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    assert!(short.len() <= 20, "exhaustive oracle is exponential");
    let mut best = 0;
    for mask in 0u32..(1u32 << short.len()) {
        let k = mask.count_ones() as usize;
        if k <= best {
            continue;
        }
        let pick: Vec<&T> = (0..short.len()).filter(|i| mask & (1 << i) != 0).map(|i| &short[i]).collect();
        if is_subsequence(&pick, long) {
            best = k;
        }
    }
    best
}

pub fn rouge_oracle<T: PartialEq>(r: &[T], g: &[T]) -> f64 {
    if r.is_empty() && g.is_empty() {
        return 1.0;
    }
    2.0 * lcs_oracle(r, g) as f64 / (r.len() + g.len()) as f64
}

/// Great-circle distance by the spherical law of cosines.
pub fn law_of_cosines_km(a: GeoPoint, b: GeoPoint) -> f64 {
    let (p1, p2) = (a.lat.to_radians(), b.lat.to_radians());
    let dl = (b.lon - a.lon).to_radians();
    let c = (p1.sin() * p2.sin() + p1.cos() * p2.cos() * dl.cos()).clamp(-1.0, 1.0);
    geoask_core::store::EARTH_RADIUS_KM * c.acos()
}

/// Nearest record by linear scan; ties go to the smallest (lat, lon).
pub fn nearest_oracle(records: &[AccessRecord], p: GeoPoint) -> Option<&AccessRecord> {
    records.iter().min_by(|a, b| {
        let da = geoask_core::store::haversine_km(p, a.origin);
        let db = geoask_core::store::haversine_km(p, b.origin);
        da.total_cmp(&db)
            .then(a.origin.lat.total_cmp(&b.origin.lat))
            .then(a.origin.lon.total_cmp(&b.origin.lon))
    })
}

/// Places whose nearest record is within `threshold`: filter by population,
/// look up by linear scan, keep, then stable-sort by value over the
/// canonical-name order.
pub fn threshold_oracle(
    records: &[AccessRecord],
    gazetteer: &[GazetteerEntry],
    category: Category,
    mode: TravelMode,
    metric: Metric,
    threshold: f64,
    population_max: Option<u64>,
) -> Vec<(String, f64)> {
    let subset: Vec<AccessRecord> =
        records.iter().filter(|r| r.category == category && r.mode == mode).cloned().collect();
    let mut places: Vec<&GazetteerEntry> = gazetteer.iter().collect();
    places.sort_by_key(|e| canonicalize_name(&e.name));
    let mut out: Vec<(String, f64)> = places
        .into_iter()
        .filter(|e| population_max.is_none_or(|m| e.population.is_some_and(|p| p <= m)))
        .filter_map(|e| nearest_oracle(&subset, e.point).map(|r| (e.name.clone(), r.metric(metric))))
        .filter(|(_, v)| *v <= threshold)
        .collect();
    out.sort_by(|a, b| a.1.total_cmp(&b.1));
    out
}

// ----------------------------------------------------------------- golden

/// Sets every number under a key ending in `_ms` to zero.
pub fn normalize_timings(v: &mut Value) {
    match v {
        Value::Object(map) => {
            for (k, x) in map.iter_mut() {
                if k.ends_with("_ms") && x.is_number() {
                    *x = Value::from(0.0);
                } else {
                    normalize_timings(x);
                }
            }
        }
        Value::Array(xs) => xs.iter_mut().for_each(normalize_timings),
        _ => {}
    }
}

pub const BLESS_VAR: &str = "GEOASK_BLESS";

/// Compares against `tests/golden/<name>.json`; rewrites it when
/// `GEOASK_BLESS` is set.
pub fn check_golden(name: &str, actual: &Value) -> Result<(), String> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(format!("{name}.json"));
    let rendered = serde_json::to_string_pretty(actual).unwrap() + "\n";
    if std::env::var_os(BLESS_VAR).is_some() {
        std::fs::write(&path, &rendered).map_err(|e| e.to_string())?;
        return Ok(());
    }
    let expected = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    if expected == rendered {
        Ok(())
    } else {
        Err(format!("{name}: response differs from golden\n--- expected\n{expected}--- actual\n{rendered}"))
    }
}

/// Serves on an ephemeral port from a background thread; returns the base URL.
pub fn spawn_server(service: Arc<QueryService>) -> String {
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            geoask_core::service::serve(listener, geoask_core::service::router(service, 4)).await.unwrap();
        });
    });
    format!("http://{}", rx.recv().unwrap())
}

/// Golden HTTP exchanges: (golden name, method, path, body).
pub const GOLDEN_EXCHANGES: &[(&str, &str, &str, Option<&str>)] = &[
    ("health", "GET", "/health", None),
    ("templates", "GET", "/templates", None),
    ("query_ok", "POST", "/query", Some(r#"{"question":"What is the nearest hospital from Abadiño, Durango?"}"#)),
    ("query_cached", "POST", "/query", Some(r#"{"question":"What is the nearest hospital from Abadiño, Durango?"}"#)),
    ("query_map_point", "POST", "/query", Some(r#"{"question":"What is the nearest hospital from {location}?","lat":43.1526,"lon":-2.6077}"#)),
    ("query_rejected", "POST", "/query", Some(r#"{"question":"Write me a poem about the sea"}"#)),
    ("query_injection", "POST", "/query", Some(r#"{"question":"<API></API>"}"#)),
    ("query_unknown_place", "POST", "/query", Some(r#"{"question":"What is the nearest hospital from {location}?","lat":40.4168,"lon":-3.7038}"#)),
    ("query_bad_json", "POST", "/query", Some(r#"{"question": 7}"#)),
    ("geocode_text", "POST", "/geocode", Some(r#"{"text":"abadiño,  durango"}"#)),
    ("geocode_point", "POST", "/geocode", Some(r#"{"lat":43.1707,"lon":-2.6317}"#)),
    ("geocode_missing", "POST", "/geocode", Some(r#"{"text":"Atlantis"}"#)),
    ("stats", "GET", "/stats", None),
];

/// Runs the golden exchanges in order against a fresh server and compares
/// status and normalized body of each.
pub fn run_golden_exchanges() -> Vec<(String, Result<(), String>)> {
    let base = spawn_server(Arc::new(demo_service(40, 64)));
    let client = reqwest::blocking::Client::new();
    GOLDEN_EXCHANGES
        .iter()
        .map(|(name, method, path, body)| {
            let url = format!("{base}{path}");
            let req = match *method {
                "GET" => client.get(&url),
                _ => client.post(&url).header("content-type", "application/json").body(body.unwrap_or("").to_string()),
            };
            let outcome = req.send().map_err(|e| e.to_string()).and_then(|resp| {
                let status = resp.status().as_u16();
                let mut body: Value = resp.json().map_err(|e| e.to_string())?;
                normalize_timings(&mut body);
                check_golden(name, &serde_json::json!({ "status": status, "body": body }))
            });
            (name.to_string(), outcome)
        })
        .collect()
}
