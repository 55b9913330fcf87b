use std::fmt;

use serde::Serialize;

use super::call::ToolCall;
use crate::store::{Category, Metric, Store, StoreError, TravelMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueKind {
    Enum(&'static [&'static str]),
    /// Free text naming a gazetteer place.
    Location,
    /// Free text that must parse as a number.
    Number,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: &'static str,
    pub kind: ValueKind,
    pub required: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToolCallSpec {
    pub name: &'static str,
    /// Order is significant: arguments must appear in this order.
    pub params: Vec<ParamSpec>,
    pub result_fields: Vec<&'static str>,
}

impl ToolCallSpec {
    pub fn param(&self, name: &str) -> Option<&ParamSpec> {
        self.params.iter().find(|p| p.name == name)
    }
}

const CATEGORIES: &[&str] = &["hospital", "supermarket", "pharmacy"];
const MODES: &[&str] = &["walk", "bike", "drive"];
const METRICS: &[&str] = &["distance", "time"];

pub const GET_CLOSEST: &str = "get_closest_distance_time";
pub const LIST_WITHIN: &str = "list_within_threshold";
pub const COMPARE_MODES: &str = "compare_modes";

/// The functions a model may call. Exactly the store's query operations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Registry {
    specs: Vec<ToolCallSpec>,
}

const fn req(name: &'static str, kind: ValueKind) -> ParamSpec {
    ParamSpec { name, kind, required: true }
}

impl Default for Registry {
    fn default() -> Self {
        Self::standard()
    }
}

impl Registry {
    pub fn standard() -> Self {
        debug_assert_eq!(CATEGORIES.len(), Category::ALL.len());
        debug_assert_eq!(MODES.len(), TravelMode::ALL.len());
        debug_assert_eq!(METRICS.len(), Metric::ALL.len());
        let specs = vec![
            ToolCallSpec {
                name: GET_CLOSEST,
                params: vec![
                    req("category", ValueKind::Enum(CATEGORIES)),
                    req("mode", ValueKind::Enum(MODES)),
                    req("location", ValueKind::Location),
                    req("metric_to_extract", ValueKind::Enum(METRICS)),
                ],
                result_fields: vec!["distance", "time"],
            },
            ToolCallSpec {
                name: LIST_WITHIN,
                params: vec![
                    req("category", ValueKind::Enum(CATEGORIES)),
                    req("mode", ValueKind::Enum(MODES)),
                    req("metric", ValueKind::Enum(METRICS)),
                    req("threshold", ValueKind::Number),
                    ParamSpec { name: "population_max", kind: ValueKind::Number, required: false },
                ],
                result_fields: vec!["count", "locations", "values"],
            },
            ToolCallSpec {
                name: COMPARE_MODES,
                params: vec![
                    req("category", ValueKind::Enum(CATEGORIES)),
                    req("location", ValueKind::Location),
                    req("metric", ValueKind::Enum(METRICS)),
                ],
                result_fields: vec!["ranking", "walk", "bike", "drive", "missing"],
            },
        ];
        Self { specs }
    }

    pub fn get(&self, name: &str) -> Option<&ToolCallSpec> {
        self.specs.iter().find(|s| s.name == name)
    }

    pub fn specs(&self) -> &[ToolCallSpec] {
        &self.specs
    }

    /// Structural problems with a call relative to its signature.
    pub fn check(&self, call: &ToolCall) -> Vec<SignatureIssue> {
        let Some(spec) = self.get(&call.name) else {
            return vec![SignatureIssue::UnknownFunction(call.name.clone())];
        };
        let mut issues = Vec::new();
        let mut seen: Vec<&str> = Vec::new();
        let mut last_pos: Option<usize> = None;
        let mut misordered = false;
        for (name, value) in &call.args {
            let Some(pos) = spec.params.iter().position(|p| p.name == name) else {
                issues.push(SignatureIssue::UnknownParameter(name.clone()));
                continue;
            };
            if seen.contains(&name.as_str()) {
                issues.push(SignatureIssue::DuplicateParameter(name.clone()));
                continue;
            }
            seen.push(name);
            if last_pos.is_some_and(|l| pos < l) {
                misordered = true;
            }
            last_pos = Some(pos);
            match spec.params[pos].kind {
                ValueKind::Enum(allowed) if !allowed.contains(&value.as_str()) => {
                    issues.push(SignatureIssue::IllegalValue { param: name.clone(), value: value.clone() })
                }
                ValueKind::Number if value.trim().parse::<f64>().map_or(true, |v| !v.is_finite()) => {
                    issues.push(SignatureIssue::IllegalValue { param: name.clone(), value: value.clone() })
                }
                _ => {}
            }
        }
        for p in spec.params.iter().filter(|p| p.required) {
            if !seen.contains(&p.name) {
                issues.push(SignatureIssue::MissingParameter(p.name.to_string()));
            }
        }
        if misordered {
            issues.push(SignatureIssue::Misordered);
        }
        issues
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum SignatureIssue {
    UnknownFunction(String),
    UnknownParameter(String),
    DuplicateParameter(String),
    MissingParameter(String),
    Misordered,
    IllegalValue { param: String, value: String },
}

impl fmt::Display for SignatureIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::UnknownFunction(n) => write!(f, "unknown function {n:?}"),
            Self::UnknownParameter(n) => write!(f, "unknown parameter {n:?}"),
            Self::DuplicateParameter(n) => write!(f, "duplicate parameter {n:?}"),
            Self::MissingParameter(n) => write!(f, "missing parameter {n:?}"),
            Self::Misordered => f.write_str("parameters out of order"),
            Self::IllegalValue { param, value } => write!(f, "illegal value {value:?} for {param:?}"),
        }
    }
}

pub(crate) fn describe(issues: &[SignatureIssue]) -> String {
    issues.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "class", content = "detail", rename_all = "snake_case")]
pub enum Validation {
    Valid,
    SyntaxInvalid(String),
    LocationInvalid(String),
    OtherInvalid(String),
}

/// Classifies a parsed call against the registry and the gazetteer.
pub fn validate_call(call: &ToolCall, registry: &Registry, store: &Store) -> Validation {
    let issues = registry.check(call);
    if !issues.is_empty() {
        return Validation::SyntaxInvalid(describe(&issues));
    }
    let spec = registry.get(&call.name).expect("checked above");
    for (name, value) in &call.args {
        match spec.param(name).map(|p| p.kind) {
            Some(ValueKind::Location) => match store.resolve_location(value) {
                Ok(_) => {}
                Err(e @ (StoreError::LocationNotFound(_) | StoreError::AmbiguousLocation { .. })) => {
                    return Validation::LocationInvalid(e.to_string())
                }
                Err(e) => return Validation::OtherInvalid(e.to_string()),
            },
            Some(ValueKind::Number) => {
                let v: f64 = value.trim().parse().expect("checked above");
                if v < 0.0 {
                    return Validation::OtherInvalid(format!("{name} must be non-negative"));
                }
            }
            _ => {}
        }
    }
    Validation::Valid
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> Store {
        let data = "lat,lon,category,mode,distance_km,time_min\n43.1525,-2.6076,hospital,drive,0.402,0.537\n";
        let gaz = "name,lat,lon,population\nDurango,43.1689,-2.6324,\n\"Abadiño, Durango\",43.1525,-2.6076,\n";
        Store::ingest(data.as_bytes(), gaz.as_bytes()).unwrap().0
    }

    fn worked_call() -> ToolCall {
        ToolCall::new(GET_CLOSEST)
            .arg("category", "hospital")
            .arg("mode", "drive")
            .arg("location", "Abadiño, Durango")
            .arg("metric_to_extract", "distance")
    }

    #[test]
    fn worked_example_is_valid() {
        assert_eq!(validate_call(&worked_call(), &Registry::standard(), &store()), Validation::Valid);
    }

    #[test]
    fn enum_violation_is_syntax() {
        let mut c = worked_call();
        c.args[1].1 = "fly".into();
        assert!(matches!(validate_call(&c, &Registry::standard(), &store()), Validation::SyntaxInvalid(_)));
    }

    #[test]
    fn misspelled_location_is_location_error() {
        let mut c = worked_call();
        c.args[2].1 = "Durnago".into();
        assert!(matches!(validate_call(&c, &Registry::standard(), &store()), Validation::LocationInvalid(_)));
    }

    #[test]
    fn structural_issues() {
        let r = Registry::standard();
        let mut swapped = worked_call();
        swapped.args.swap(0, 1);
        assert_eq!(r.check(&swapped), vec![SignatureIssue::Misordered]);

        let mut missing = worked_call();
        missing.args.remove(3);
        assert_eq!(r.check(&missing), vec![SignatureIssue::MissingParameter("metric_to_extract".into())]);

        let extra = worked_call().arg("speed", "fast");
        assert_eq!(r.check(&extra), vec![SignatureIssue::UnknownParameter("speed".into())]);

        assert_eq!(
            r.check(&ToolCall::new("drop_tables")),
            vec![SignatureIssue::UnknownFunction("drop_tables".into())]
        );
    }

    #[test]
    fn optional_and_numeric_parameters() {
        let r = Registry::standard();
        let s = store();
        let base = ToolCall::new(LIST_WITHIN)
            .arg("category", "pharmacy")
            .arg("mode", "walk")
            .arg("metric", "time")
            .arg("threshold", "10");
        assert_eq!(validate_call(&base, &r, &s), Validation::Valid);
        assert_eq!(validate_call(&base.clone().arg("population_max", "5000"), &r, &s), Validation::Valid);
        let mut bad = base.clone();
        bad.args[3].1 = "ten".into();
        assert!(matches!(validate_call(&bad, &r, &s), Validation::SyntaxInvalid(_)));
        let mut neg = base;
        neg.args[3].1 = "-1".into();
        assert!(matches!(validate_call(&neg, &r, &s), Validation::OtherInvalid(_)));
    }
}
