use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::store::{GazetteerEntry, GeoPoint};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OverpassError {
    #[error("overpass request failed: {0}")]
    Http(String),
    #[error("overpass response is not valid: {0}")]
    Response(String),
    #[error("no fixture recorded for query {0:?}")]
    NoFixture(String),
    #[error("overpass returned no named place for {0:?}")]
    NotFound(String),
}

/// Place-name query returning node and way centres.
pub fn overpass_query(name: &str) -> String {
    let escaped = name.replace('\\', "\\\\").replace('"', "\\\"");
    format!("[out:json][timeout:25];(node[\"name\"=\"{escaped}\"];way[\"name\"=\"{escaped}\"];);out center 5;")
}

fn element_entry(el: &Value) -> Option<GazetteerEntry> {
    let tags = el.get("tags")?;
    let name = tags.get("name")?.as_str()?.trim();
    if name.is_empty() {
        return None;
    }
    let coords = if el.get("lat").is_some() { el } else { el.get("center")? };
    let point = GeoPoint::new(coords.get("lat")?.as_f64()?, coords.get("lon")?.as_f64()?).ok()?;
    let population = tags.get("population").and_then(|p| p.as_str()).and_then(|p| p.trim().parse().ok());
    Some(GazetteerEntry { name: name.to_string(), point, population })
}

/// Every named element with coordinates, in response order.
pub fn parse_elements(json: &str) -> Result<Vec<GazetteerEntry>, OverpassError> {
    let v: Value = serde_json::from_str(json).map_err(|e| OverpassError::Response(e.to_string()))?;
    let elements = v
        .get("elements")
        .and_then(Value::as_array)
        .ok_or_else(|| OverpassError::Response("missing elements array".into()))?;
    Ok(elements.iter().filter_map(element_entry).collect())
}

/// Gazetteer rows from a recorded snapshot. Duplicate names keep the first
/// occurrence.
pub fn import_snapshot(json: &str) -> Result<Vec<GazetteerEntry>, OverpassError> {
    let mut seen = HashSet::new();
    let mut out: Vec<GazetteerEntry> =
        parse_elements(json)?.into_iter().filter(|e| seen.insert(e.canonical_name())).collect();
    out.sort_by_cached_key(|e| e.canonical_name());
    Ok(out)
}

/// Raw Overpass responses by query text.
pub trait OverpassSource: Send + Sync {
    fn fetch(&self, query: &str) -> Result<String, OverpassError>;
}

pub struct HttpOverpass {
    endpoint: String,
    client: reqwest::blocking::Client,
}

impl HttpOverpass {
    pub fn new(endpoint: impl Into<String>, timeout_ms: u64) -> Result<Self, OverpassError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(timeout_ms))
            .build()
            .map_err(|e| OverpassError::Http(e.to_string()))?;
        Ok(Self { endpoint: endpoint.into(), client })
    }
}

impl OverpassSource for HttpOverpass {
    fn fetch(&self, query: &str) -> Result<String, OverpassError> {
        let url = reqwest::Url::parse_with_params(&self.endpoint, [("data", query)])
            .map_err(|e| OverpassError::Http(e.to_string()))?;
        let resp = self.client.get(url).send().map_err(|e| OverpassError::Http(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(OverpassError::Http(format!("status {}", resp.status())));
        }
        resp.text().map_err(|e| OverpassError::Http(e.to_string()))
    }
}

/// One recorded exchange.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverpassFixture {
    pub query: String,
    pub response: Value,
}

/// Replays recorded exchanges; never touches the network.
#[derive(Debug, Clone, Default)]
pub struct FixtureOverpass {
    responses: BTreeMap<String, String>,
}

impl FixtureOverpass {
    pub fn new(fixtures: impl IntoIterator<Item = OverpassFixture>) -> Self {
        Self { responses: fixtures.into_iter().map(|f| (f.query, f.response.to_string())).collect() }
    }

    /// Loads every `*.json` fixture in a directory.
    pub fn load_dir(dir: &Path) -> Result<Self, OverpassError> {
        let read = |e: std::io::Error| OverpassError::Response(format!("{}: {e}", dir.display()));
        let mut paths: Vec<_> = std::fs::read_dir(dir)
            .map_err(read)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        let mut fixtures = Vec::new();
        for p in paths {
            let text = std::fs::read_to_string(&p).map_err(read)?;
            let f: OverpassFixture = serde_json::from_str(&text)
                .map_err(|e| OverpassError::Response(format!("{}: {e}", p.display())))?;
            fixtures.push(f);
        }
        Ok(Self::new(fixtures))
    }
}

impl OverpassSource for FixtureOverpass {
    fn fetch(&self, query: &str) -> Result<String, OverpassError> {
        self.responses.get(query).cloned().ok_or_else(|| OverpassError::NoFixture(query.to_string()))
    }
}

pub struct OverpassClient {
    source: Box<dyn OverpassSource>,
}

impl OverpassClient {
    pub fn new(source: Box<dyn OverpassSource>) -> Self {
        Self { source }
    }

    /// First named element the query returns, as a gazetteer entry.
    pub fn lookup(&self, name: &str) -> Result<GazetteerEntry, OverpassError> {
        let body = self.source.fetch(&overpass_query(name))?;
        parse_elements(&body)?.into_iter().next().ok_or_else(|| OverpassError::NotFound(name.to_string()))
    }
}
