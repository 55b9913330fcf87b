use std::collections::{BTreeMap, BTreeSet};
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::schema::{AttrKind, Projection};
use super::DatagenError;
use crate::protocol::{Registry, ValueKind};
use crate::store::{Category, Metric, TravelMode};

pub const SLOT_LOCATION: &str = "location";
pub const SLOT_CATEGORY: &str = "category";
pub const SLOT_MODE: &str = "mode";
pub const SLOT_METRIC: &str = "metric";

/// Answer-only placeholders.
pub const SLOT_CALL: &str = "call";
pub const SLOT_VALUE: &str = "value";
pub const SLOT_UNIT: &str = "unit";
const RESULT_PREFIX: &str = "result.";

static SLOT_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\{([a-z_]+(?:\.[a-z_]+)?)\}").unwrap());

/// Slot names referenced in `text`, in order of first appearance.
pub fn slots_in(text: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for c in SLOT_RE.captures_iter(text) {
        let s = c[1].to_string();
        if !out.contains(&s) {
            out.push(s);
        }
    }
    out
}

/// Replaces every `{slot}` that `lookup` knows; others are left as written.
pub fn fill(text: &str, lookup: impl Fn(&str) -> Option<String>) -> String {
    SLOT_RE
        .replace_all(text, |c: &regex::Captures<'_>| lookup(&c[1]).unwrap_or_else(|| c[0].to_string()))
        .into_owned()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallTemplate {
    pub function: String,
    /// Parameter name to value template. Emitted in signature order.
    pub args: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionTemplate {
    pub id: String,
    #[serde(default = "default_language")]
    pub language: String,
    /// Attribute kinds of the projection the template verbalizes.
    pub projection: Vec<AttrKind>,
    pub question: String,
    pub call: CallTemplate,
    pub answer: String,
    /// Slots pinned to a single value.
    #[serde(default)]
    pub fixed: BTreeMap<String, String>,
    /// Value lists for slots beyond the built-in ones.
    #[serde(default)]
    pub domains: BTreeMap<String, Vec<String>>,
    /// Offered as a predefined question in the UI.
    #[serde(default)]
    pub ui: bool,
    /// Set during validation from the matched projection.
    #[serde(default, skip_deserializing)]
    pub superprojection: bool,
}

fn default_language() -> String {
    "en".into()
}

impl QuestionTemplate {
    /// Value-bearing slots, location first, then by name.
    pub fn value_slots(&self) -> Vec<String> {
        let mut set = BTreeSet::new();
        for text in std::iter::once(&self.question).chain(self.call.args.values()).chain([&self.answer]) {
            for s in slots_in(text) {
                if !is_answer_only(&s) {
                    set.insert(s);
                }
            }
        }
        let mut out: Vec<String> = set.into_iter().collect();
        if let Some(i) = out.iter().position(|s| s == SLOT_LOCATION) {
            let loc = out.remove(i);
            out.insert(0, loc);
        }
        out
    }

    /// Candidate values of a non-location slot.
    pub fn domain(&self, slot: &str) -> Vec<String> {
        if let Some(v) = self.fixed.get(slot) {
            return vec![v.clone()];
        }
        if let Some(d) = self.domains.get(slot) {
            return d.clone();
        }
        match slot {
            SLOT_CATEGORY => Category::ALL.iter().map(|c| c.to_string()).collect(),
            SLOT_MODE => TravelMode::ALL.iter().map(|c| c.to_string()).collect(),
            SLOT_METRIC => Metric::ALL.iter().map(|c| c.to_string()).collect(),
            _ => Vec::new(),
        }
    }

    fn is_known(&self, slot: &str) -> bool {
        matches!(slot, SLOT_LOCATION | SLOT_CATEGORY | SLOT_MODE | SLOT_METRIC)
            || self.fixed.contains_key(slot)
            || self.domains.contains_key(slot)
    }

    fn err(&self, message: impl Into<String>) -> DatagenError {
        DatagenError::Template { id: self.id.clone(), message: message.into() }
    }

    fn validate(&self, registry: &Registry) -> Result<(), DatagenError> {
        if self.id.trim().is_empty() {
            return Err(self.err("empty id"));
        }
        if self.language.trim().is_empty() {
            return Err(self.err("empty language tag"));
        }
        let spec = registry
            .get(&self.call.function)
            .ok_or_else(|| self.err(format!("unregistered function {:?}", self.call.function)))?;

        let mut bound: BTreeSet<String> = BTreeSet::new();
        for (param, value) in &self.call.args {
            let p = spec.param(param).ok_or_else(|| self.err(format!("{} has no parameter {param:?}", spec.name)))?;
            let slots = slots_in(value);
            for s in &slots {
                if is_answer_only(s) || !self.is_known(s) {
                    return Err(self.err(format!("call argument {param} uses unknown slot {{{s}}}")));
                }
                bound.insert(s.clone());
            }
            if let ValueKind::Enum(allowed) = p.kind {
                let values: Vec<String> = match slots.as_slice() {
                    [] => vec![value.clone()],
                    [s] if value == &format!("{{{s}}}") && s != SLOT_LOCATION => self.domain(s),
                    _ => return Err(self.err(format!("{param} must be a literal or a single slot"))),
                };
                if let Some(bad) = values.iter().find(|v| !allowed.contains(&v.as_str())) {
                    return Err(self.err(format!("{bad:?} is not a legal {param}")));
                }
            }
        }
        for p in spec.params.iter().filter(|p| p.required) {
            if !self.call.args.contains_key(p.name) {
                return Err(self.err(format!("call omits required parameter {}", p.name)));
            }
        }

        let answer_slots = slots_in(&self.answer);
        if SLOT_RE.find_iter(&self.answer).filter(|m| m.as_str() == "{call}").count() != 1 {
            return Err(self.err("answer must contain {call} exactly once"));
        }
        for s in &answer_slots {
            if let Some(field) = s.strip_prefix(RESULT_PREFIX) {
                if !spec.result_fields.contains(&field) {
                    return Err(self.err(format!("{} has no result field {field:?}", spec.name)));
                }
            } else if (s == SLOT_VALUE || s == SLOT_UNIT) && !bound.contains(SLOT_METRIC) && !self.fixed.contains_key(SLOT_METRIC) {
                return Err(self.err(format!("{{{s}}} needs a metric slot")));
            } else if !is_answer_only(s) && !self.is_known(s) {
                return Err(self.err(format!("answer uses unknown slot {{{s}}}")));
            }
        }

        for s in slots_in(&self.question) {
            if is_answer_only(&s) || !self.is_known(&s) {
                return Err(self.err(format!("question uses unknown slot {{{s}}}")));
            }
            if !bound.contains(&s) && !answer_slots.contains(&s) {
                return Err(self.err(format!("question slot {{{s}}} is not bound in the call or answer")));
            }
        }
        for (slot, value) in &self.fixed {
            if matches!(slot.as_str(), SLOT_CATEGORY | SLOT_MODE | SLOT_METRIC) {
                let ok = match slot.as_str() {
                    SLOT_CATEGORY => value.parse::<Category>().is_ok(),
                    SLOT_MODE => value.parse::<TravelMode>().is_ok(),
                    _ => value.parse::<Metric>().is_ok(),
                };
                if !ok {
                    return Err(self.err(format!("fixed {slot} {value:?} is not a legal value")));
                }
            }
        }
        for s in self.value_slots() {
            if s != SLOT_LOCATION && self.domain(&s).is_empty() {
                return Err(self.err(format!("slot {{{s}}} has an empty domain")));
            }
        }
        Ok(())
    }
}

fn is_answer_only(slot: &str) -> bool {
    slot == SLOT_CALL || slot == SLOT_VALUE || slot == SLOT_UNIT || slot.starts_with(RESULT_PREFIX)
}

/// Per-language display forms of slot values, e.g. mode `drive` as "by car".
pub type SurfaceForms = BTreeMap<String, BTreeMap<String, BTreeMap<String, String>>>;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateRegistry {
    #[serde(default)]
    pub surface: SurfaceForms,
    #[serde(default, rename = "template")]
    pub templates: Vec<QuestionTemplate>,
}

impl TemplateRegistry {
    /// Parses and validates one registry file.
    pub fn parse(text: &str, registry: &Registry) -> Result<Self, DatagenError> {
        let r: Self = toml::from_str(text).map_err(|e| DatagenError::Template { id: String::new(), message: e.to_string() })?;
        r.validate(registry)?;
        Ok(r)
    }

    pub fn validate(&self, registry: &Registry) -> Result<(), DatagenError> {
        let mut ids = BTreeSet::new();
        for t in &self.templates {
            if !ids.insert(t.id.as_str()) {
                return Err(t.err("duplicate template id"));
            }
            t.validate(registry)?;
        }
        Ok(())
    }

    /// Merges registries, e.g. one per language.
    pub fn merge(&mut self, other: TemplateRegistry, registry: &Registry) -> Result<(), DatagenError> {
        for (lang, forms) in other.surface {
            let entry = self.surface.entry(lang).or_default();
            for (slot, values) in forms {
                entry.entry(slot).or_default().extend(values);
            }
        }
        self.templates.extend(other.templates);
        self.validate(registry)
    }

    /// Checks every template against the surviving projections and sets its
    /// superprojection flag.
    pub fn bind_projections(&mut self, projections: &[Projection]) -> Result<(), DatagenError> {
        for t in &mut self.templates {
            let mut shape = t.projection.clone();
            shape.sort();
            let matched: Vec<&Projection> = projections.iter().filter(|p| p.shape() == shape).collect();
            if matched.is_empty() {
                return Err(t.err(format!("projection {:?} was filtered out or does not exist", t.projection)));
            }
            t.superprojection = matched.iter().any(|p| p.is_superprojection());
        }
        Ok(())
    }

    pub fn surface_form(&self, language: &str, slot: &str, value: &str) -> String {
        self.surface
            .get(language)
            .and_then(|l| l.get(slot))
            .and_then(|s| s.get(value))
            .cloned()
            .unwrap_or_else(|| value.to_string())
    }

    pub fn get(&self, id: &str) -> Option<&QuestionTemplate> {
        self.templates.iter().find(|t| t.id == id)
    }

    /// Templates flagged for the UI, with the location slot left open.
    pub fn ui_questions(&self) -> Vec<UiQuestion> {
        let mut out = Vec::new();
        for t in self.templates.iter().filter(|t| t.ui) {
            let slots = t.value_slots();
            let mut combos: Vec<BTreeMap<String, String>> = vec![BTreeMap::new()];
            for s in slots.iter().filter(|s| *s != SLOT_LOCATION) {
                combos = combos
                    .into_iter()
                    .flat_map(|c| {
                        t.domain(s).into_iter().map(move |v| {
                            let mut c = c.clone();
                            c.insert(s.clone(), v);
                            c
                        })
                    })
                    .collect();
            }
            for c in combos {
                let text = fill(&t.question, |s| c.get(s).map(|v| self.surface_form(&t.language, s, v)));
                out.push(UiQuestion { template_id: t.id.clone(), language: t.language.clone(), text });
            }
        }
        out
    }
}

/// A predefined question with a `{location}` slot for the UI to fill.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UiQuestion {
    pub template_id: String,
    pub language: String,
    pub text: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = r#"
[surface.en.mode]
drive = "by car"

[[template]]
id = "nearest"
projection = ["location", "distance"]
question = "What is the nearest {category} from {location}?"
answer = "The closest {category} you can find is {call} {result.distance}km away."
fixed = { mode = "drive", metric = "distance" }
ui = true
[template.call]
function = "get_closest_distance_time"
args = { category = "{category}", mode = "{mode}", location = "{location}", metric_to_extract = "{metric}" }
"#;

    fn parse(text: &str) -> Result<TemplateRegistry, DatagenError> {
        TemplateRegistry::parse(text, &Registry::standard())
    }

    #[test]
    fn parses_valid_registry() {
        let r = parse(GOOD).unwrap();
        let t = &r.templates[0];
        assert_eq!(t.value_slots(), ["location", "category", "metric", "mode"]);
        assert_eq!(t.domain("mode"), ["drive"]);
        assert_eq!(r.surface_form("en", "mode", "drive"), "by car");
        assert_eq!(r.ui_questions().len(), 3);
        assert_eq!(r.ui_questions()[0].text, "What is the nearest hospital from {location}?");
    }

    #[test]
    fn rejects_unbound_and_unknown_slots() {
        let unbound = GOOD.replace("What is the nearest {category}", "What is the nearest {category} {mode}")
            .replace("mode = \"{mode}\"", "mode = \"drive\"");
        assert!(matches!(parse(&unbound), Err(DatagenError::Template { .. })));
        let unknown = GOOD.replace("from {location}", "from {town}");
        assert!(parse(&unknown).is_err());
        let bad_field = GOOD.replace("result.distance", "result.speed");
        assert!(parse(&bad_field).is_err());
        let no_call = GOOD.replace("{call} ", "");
        assert!(parse(&no_call).is_err());
        let bad_fn = GOOD.replace("function = \"get_closest_distance_time\"", "function = \"drop\"");
        assert!(parse(&bad_fn).is_err());
        let bad_enum = GOOD.replace("mode = \"drive\", metric", "mode = \"fly\", metric");
        assert!(parse(&bad_enum).is_err());
        let missing = GOOD.replace(", metric_to_extract = \"{metric}\"", "");
        assert!(parse(&missing).is_err());
    }

    #[test]
    fn fill_leaves_unknown_slots() {
        assert_eq!(fill("{a} and {b}", |s| (s == "a").then(|| "x".into())), "x and {b}");
    }
}
