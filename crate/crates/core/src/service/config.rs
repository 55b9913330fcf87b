use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ServiceError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Mock,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub endpoint: String,
    pub timeout_ms: u64,
    pub max_tokens: usize,
    pub temperature: f64,
    /// Overrides the generated system prompt.
    pub system_prompt: Option<String>,
    /// Mock only: line-delimited records with `question` and `answer`.
    pub answers: Option<PathBuf>,
    /// Mock only: register the reference answer of every template question.
    pub from_templates: bool,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::Mock,
            endpoint: "http://127.0.0.1:8000/generate".into(),
            timeout_ms: 30_000,
            max_tokens: 512,
            temperature: 0.0,
            system_prompt: None,
            answers: None,
            from_templates: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GuardrailConfig {
    pub max_question_chars: usize,
    /// Domain keywords per language tag, matched case-insensitively.
    pub keywords: BTreeMap<String, Vec<String>>,
    /// Case-insensitive phrases that mark a request as unsafe.
    pub blocklist: Vec<String>,
}

fn words(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

impl Default for GuardrailConfig {
    fn default() -> Self {
        let mut keywords = BTreeMap::new();
        keywords.insert(
            "en".into(),
            words(&[
                "hospital", "supermarket", "pharmacy", "pharmacies", "walk", "bike", "cycling", "drive", "driving",
                "car", "distance", "time", "far", "nearest", "closest", "minutes", "km", "access",
            ]),
        );
        keywords.insert(
            "es".into(),
            words(&["hospital", "supermercado", "farmacia", "andando", "bici", "coche", "distancia", "tiempo", "cerca"]),
        );
        keywords.insert(
            "eu".into(),
            words(&["ospitale", "supermerkatu", "farmazia", "oinez", "bizikleta", "autoz", "distantzia", "denbora", "gertu"]),
        );
        keywords.insert(
            "gl".into(),
            words(&["hospital", "supermercado", "farmacia", "a pé", "bicicleta", "coche", "distancia", "tempo", "preto"]),
        );
        Self {
            max_question_chars: 500,
            keywords,
            blocklist: words(&[
                "ignore previous instructions",
                "ignore all previous",
                "system prompt",
                "drop table",
                "rm -rf",
            ]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OverpassConfig {
    pub enabled: bool,
    pub endpoint: String,
    pub timeout_ms: u64,
    /// Replays recorded responses from this directory instead of the network.
    pub fixtures: Option<PathBuf>,
}

impl Default for OverpassConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            endpoint: "https://overpass-api.de/api/interpreter".into(),
            timeout_ms: 10_000,
            fixtures: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub listen: String,
    pub dataset: PathBuf,
    pub gazetteer: PathBuf,
    pub templates: Vec<PathBuf>,
    pub cache_capacity: usize,
    pub retry_budget: usize,
    /// Concurrent tool loops.
    pub pool_size: usize,
    /// Map clicks farther than this from every gazetteer entry fail.
    pub geocode_radius_km: f64,
    pub backend: BackendConfig,
    pub guardrail: GuardrailConfig,
    pub overpass: OverpassConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            listen: "127.0.0.1:8080".into(),
            dataset: "dataset.csv".into(),
            gazetteer: "gazetteer.csv".into(),
            templates: vec!["templates.toml".into()],
            cache_capacity: 1024,
            retry_budget: 1,
            pool_size: 4,
            geocode_radius_km: 3.0,
            backend: BackendConfig::default(),
            guardrail: GuardrailConfig::default(),
            overpass: OverpassConfig::default(),
        }
    }
}

fn parse_env<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ServiceError> {
    value.parse().map_err(|_| ServiceError::Config(format!("{key}={value:?} is not valid")))
}

impl ServiceConfig {
    pub fn parse(text: &str) -> Result<Self, ServiceError> {
        toml::from_str(text).map_err(|e| ServiceError::Config(e.to_string()))
    }

    /// Reads a config file; relative paths inside it resolve against the
    /// file's directory. Environment overrides are applied afterwards.
    pub fn load(path: &Path) -> Result<Self, ServiceError> {
        let text = std::fs::read_to_string(path).map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        cfg.apply_env(|k| std::env::var(k).ok())?;
        if let Some(base) = path.parent() {
            cfg.resolve_paths(base);
        }
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.dataset);
        fix(&mut self.gazetteer);
        self.templates.iter_mut().for_each(fix);
        if let Some(p) = self.backend.answers.as_mut() {
            fix(p);
        }
        if let Some(p) = self.overpass.fixtures.as_mut() {
            fix(p);
        }
    }

    /// `GEOASK_*` overrides.
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<(), ServiceError> {
        if let Some(v) = lookup("GEOASK_LISTEN") {
            self.listen = v;
        }
        if let Some(v) = lookup("GEOASK_DATASET") {
            self.dataset = v.into();
        }
        if let Some(v) = lookup("GEOASK_GAZETTEER") {
            self.gazetteer = v.into();
        }
        if let Some(v) = lookup("GEOASK_TEMPLATES") {
            self.templates = v.split(',').map(|s| PathBuf::from(s.trim())).collect();
        }
        if let Some(v) = lookup("GEOASK_CACHE_CAPACITY") {
            self.cache_capacity = parse_env("GEOASK_CACHE_CAPACITY", &v)?;
        }
        if let Some(v) = lookup("GEOASK_RETRY_BUDGET") {
            self.retry_budget = parse_env("GEOASK_RETRY_BUDGET", &v)?;
        }
        if let Some(v) = lookup("GEOASK_POOL_SIZE") {
            self.pool_size = parse_env("GEOASK_POOL_SIZE", &v)?;
        }
        if let Some(v) = lookup("GEOASK_BACKEND") {
            self.backend.kind = match v.as_str() {
                "mock" => BackendKind::Mock,
                "remote" => BackendKind::Remote,
                _ => return Err(ServiceError::Config(format!("GEOASK_BACKEND={v:?} is not mock or remote"))),
            };
        }
        if let Some(v) = lookup("GEOASK_BACKEND_ENDPOINT") {
            self.backend.endpoint = v;
        }
        if let Some(v) = lookup("GEOASK_BACKEND_TIMEOUT_MS") {
            self.backend.timeout_ms = parse_env("GEOASK_BACKEND_TIMEOUT_MS", &v)?;
        }
        if let Some(v) = lookup("GEOASK_OVERPASS_ENABLED") {
            self.overpass.enabled = parse_env("GEOASK_OVERPASS_ENABLED", &v)?;
        }
        if let Some(v) = lookup("GEOASK_OVERPASS_ENDPOINT") {
            self.overpass.endpoint = v;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_partial_config_with_defaults() {
        let cfg = ServiceConfig::parse("listen = \"0.0.0.0:9000\"\n[backend]\nkind = \"remote\"\n").unwrap();
        assert_eq!(cfg.listen, "0.0.0.0:9000");
        assert_eq!(cfg.backend.kind, BackendKind::Remote);
        assert_eq!(cfg.cache_capacity, 1024);
        assert!(cfg.guardrail.keywords.contains_key("eu"));
    }

    #[test]
    fn env_overrides() {
        let mut cfg = ServiceConfig::default();
        let env: BTreeMap<&str, &str> =
            [("GEOASK_CACHE_CAPACITY", "2"), ("GEOASK_BACKEND", "remote"), ("GEOASK_RETRY_BUDGET", "0")].into();
        cfg.apply_env(|k| env.get(k).map(|v| v.to_string())).unwrap();
        assert_eq!(cfg.cache_capacity, 2);
        assert_eq!(cfg.retry_budget, 0);
        assert_eq!(cfg.backend.kind, BackendKind::Remote);
        assert!(cfg.apply_env(|k| (k == "GEOASK_POOL_SIZE").then(|| "many".to_string())).is_err());
    }

    #[test]
    fn relative_paths_resolve_against_config_dir() {
        let mut cfg = ServiceConfig::default();
        cfg.resolve_paths(Path::new("/etc/geoask"));
        assert_eq!(cfg.dataset, PathBuf::from("/etc/geoask/dataset.csv"));
    }
}
