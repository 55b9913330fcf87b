use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::template::{fill, QuestionTemplate, TemplateRegistry, SLOT_CALL, SLOT_LOCATION, SLOT_METRIC, SLOT_UNIT, SLOT_VALUE};
use crate::protocol::{parse_annotated, serialize_call, Registry, ToolCall, ToolResult};
use crate::store::{ExecError, GazetteerEntry, Metric, ToolExecutor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    Train,
    Val,
    TestMonolingual,
    TestMultilingual,
    TestUnseenLocation,
    TestSemanticVariant,
}

impl Split {
    pub const ALL: [Split; 6] = [
        Self::Train,
        Self::Val,
        Self::TestMonolingual,
        Self::TestMultilingual,
        Self::TestUnseenLocation,
        Self::TestSemanticVariant,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Train => "train",
            Self::Val => "val",
            Self::TestMonolingual => "test-monolingual",
            Self::TestMultilingual => "test-multilingual",
            Self::TestUnseenLocation => "test-unseen-location",
            Self::TestSemanticVariant => "test-semantic-variant",
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A bound question awaiting execution of its call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skeleton {
    pub template_id: String,
    pub language: String,
    pub projection: String,
    pub superprojection: bool,
    pub question: String,
    pub call: ToolCall,
    /// Answer text with value slots filled; `{call}` and result references
    /// remain.
    pub answer_template: String,
    pub bindings: BTreeMap<String, String>,
    pub location: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairMetadata {
    pub template_id: String,
    pub projection: String,
    pub superprojection: bool,
    pub location: Option<String>,
    pub paraphrase_index: usize,
    pub language: String,
    pub split: Option<Split>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QAPair {
    pub id: String,
    pub question: String,
    pub answer: String,
    pub metadata: PairMetadata,
}

fn projection_label(t: &QuestionTemplate) -> String {
    t.projection.iter().map(|k| k.as_str()).collect::<Vec<_>>().join(",")
}

fn bind(t: &QuestionTemplate, templates: &TemplateRegistry, registry: &Registry, values: &BTreeMap<String, String>) -> Skeleton {
    let surface = |s: &str| values.get(s).map(|v| templates.surface_form(&t.language, s, v));
    let spec = registry.get(&t.call.function).expect("validated template");
    let mut call = ToolCall::new(&t.call.function);
    for p in &spec.params {
        if let Some(v) = t.call.args.get(p.name) {
            call = call.arg(p.name, fill(v, |s| values.get(s).cloned()));
        }
    }
    Skeleton {
        template_id: t.id.clone(),
        language: t.language.clone(),
        projection: projection_label(t),
        superprojection: t.superprojection,
        question: fill(&t.question, surface),
        call,
        answer_template: fill(&t.answer, surface),
        bindings: values.clone(),
        location: values.get(SLOT_LOCATION).cloned(),
    }
}

/// Cartesian product of each template's slots over the gazetteer sample and
/// the value domains, deduplicated on question text. Ordered by template id,
/// location name, then slot values.
pub fn instantiate(templates: &TemplateRegistry, registry: &Registry, gazetteer: &[GazetteerEntry]) -> Vec<Skeleton> {
    let mut locations: Vec<&str> = gazetteer.iter().map(|g| g.name.as_str()).collect();
    locations.sort_unstable();
    locations.dedup();
    let mut order: Vec<&QuestionTemplate> = templates.templates.iter().collect();
    order.sort_by(|a, b| a.id.cmp(&b.id));

    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for t in order {
        let slots = t.value_slots();
        let uses_location = slots.first().is_some_and(|s| s == SLOT_LOCATION);
        let others: Vec<(String, Vec<String>)> =
            slots.iter().filter(|s| *s != SLOT_LOCATION).map(|s| (s.clone(), t.domain(s))).collect();
        let loc_values: Vec<Option<&str>> =
            if uses_location { locations.iter().map(|l| Some(*l)).collect() } else { vec![None] };
        // Product of the remaining slot domains, last slot varying fastest.
        let mut combos: Vec<Vec<&str>> = vec![Vec::new()];
        for (_, domain) in &others {
            combos = combos
                .iter()
                .flat_map(|c| {
                    domain.iter().map(move |v| {
                        let mut c = c.clone();
                        c.push(v.as_str());
                        c
                    })
                })
                .collect();
        }
        for loc in loc_values {
            for combo in &combos {
                let mut values = BTreeMap::new();
                if let Some(l) = loc {
                    values.insert(SLOT_LOCATION.to_string(), l.to_string());
                }
                for ((name, _), v) in others.iter().zip(combo) {
                    values.insert(name.clone(), v.to_string());
                }
                let sk = bind(t, templates, registry, &values);
                if seen.insert(sk.question.clone()) {
                    out.push(sk);
                }
            }
        }
    }
    out
}

/// Executes the skeleton's call and renders the answer. Execution failures
/// are returned so the caller can drop the skeleton.
pub fn generate_answer(skeleton: &Skeleton, executor: &dyn ToolExecutor, id: String) -> Result<QAPair, ExecError> {
    let result = executor.execute(&skeleton.call)?;
    let metric = skeleton.bindings.get(SLOT_METRIC).and_then(|m| m.parse::<Metric>().ok());
    let answer = fill(&skeleton.answer_template, |s| match s {
        SLOT_CALL => Some(serialize_call(&skeleton.call, Some(&result))),
        SLOT_VALUE => metric.and_then(|m| result.get(m.as_str())).map(|v| v.to_string()),
        SLOT_UNIT => metric.map(|m| match m {
            Metric::Distance => "km".to_string(),
            Metric::Time => "min".to_string(),
        }),
        _ => s.strip_prefix("result.").and_then(|f| result.get(f)).map(|v| v.to_string()),
    });
    Ok(QAPair {
        id,
        question: skeleton.question.clone(),
        answer,
        metadata: PairMetadata {
            template_id: skeleton.template_id.clone(),
            projection: skeleton.projection.clone(),
            superprojection: skeleton.superprojection,
            location: skeleton.location.clone(),
            paraphrase_index: 0,
            language: skeleton.language.clone(),
            split: None,
        },
    })
}

/// Re-executes the embedded call and compares with the embedded result.
pub fn check_ground_truth(pair: &QAPair, executor: &dyn ToolExecutor) -> Result<(), String> {
    let ann = parse_annotated(&pair.answer);
    let calls: Vec<(&ToolCall, Option<&ToolResult>)> = ann.calls().collect();
    let [(call, Some(embedded))] = calls.as_slice() else {
        return Err(format!("{}: expected exactly one executed call", pair.id));
    };
    let fresh = executor.execute(call).map_err(|e| format!("{}: {e}", pair.id))?;
    if &fresh != *embedded {
        return Err(format!("{}: embedded {} but store returns {}", pair.id, embedded.payload(), fresh.payload()));
    }
    if let Some(loc) = &pair.metadata.location {
        if call.get(SLOT_LOCATION) != Some(loc.as_str()) || !pair.question.contains(loc.as_str()) {
            return Err(format!("{}: location {loc:?} not carried verbatim", pair.id));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::store::{Store, StoreExecutor};

    const REG: &str = r#"
[[template]]
id = "a"
projection = ["location", "distance"]
question = "What is the nearest {category} from {location}?"
answer = "The closest {category} you can find is {call} {result.distance}km away."
fixed = { mode = "drive", metric = "distance" }
[template.call]
function = "get_closest_distance_time"
args = { category = "{category}", mode = "{mode}", location = "{location}", metric_to_extract = "{metric}" }

[[template]]
id = "b"
projection = ["location", "time"]
question = "How long to the closest {category} from {location} by car?"
answer = "{call} About {value} {unit}."
fixed = { mode = "drive", metric = "time" }
[template.call]
function = "get_closest_distance_time"
args = { category = "{category}", mode = "{mode}", location = "{location}", metric_to_extract = "{metric}" }
"#;

    fn gaz(names: &[&str]) -> Vec<GazetteerEntry> {
        names
            .iter()
            .enumerate()
            .map(|(i, n)| GazetteerEntry {
                name: n.to_string(),
                point: crate::store::GeoPoint::new(43.1 + i as f64 * 0.01, -2.6).unwrap(),
                population: None,
            })
            .collect()
    }

    #[test]
    fn combinatorial_count_and_order() {
        let t = TemplateRegistry::parse(REG, &Registry::standard()).unwrap();
        let sk = instantiate(&t, &Registry::standard(), &gaz(&["E", "B", "A", "D", "C"]));
        assert_eq!(sk.len(), 30);
        assert_eq!(sk[0].question, "What is the nearest hospital from A?");
        assert_eq!(sk[1].question, "What is the nearest supermarket from A?");
        assert_eq!(sk[3].location.as_deref(), Some("B"));
        assert!(instantiate(&t, &Registry::standard(), &[]).is_empty());
    }

    #[test]
    fn worked_example_answer() {
        let t = TemplateRegistry::parse(REG, &Registry::standard()).unwrap();
        let data = "lat,lon,category,mode,distance_km,time_min\n43.1525,-2.6076,hospital,drive,0.402,0.537\n";
        let g = "name,lat,lon,population\nDurango,43.1689,-2.6324,\n\"Abadiño, Durango\",43.1525,-2.6076,\n";
        let store = Arc::new(Store::ingest(data.as_bytes(), g.as_bytes()).unwrap().0);
        let exec = StoreExecutor::new(store.clone());
        let sk = instantiate(&t, &Registry::standard(), store.gazetteer());
        let example = sk.iter().find(|s| s.question == "What is the nearest hospital from Abadiño, Durango?").unwrap();
        let pair = generate_answer(example, &exec, "x".into()).unwrap();
        assert_eq!(
            pair.answer,
            "The closest hospital you can find is <API>get_closest_distance_time(category=\"hospital\", mode=\"drive\", location=\"Abadiño, Durango\", metric_to_extract=\"distance\") -> {\"distance\": 0.402, \"time\": 0.537}</API> 0.402km away."
        );
        check_ground_truth(&pair, &exec).unwrap();

        let timed = sk.iter().find(|s| s.template_id == "b" && s.bindings["category"] == "hospital").unwrap();
        assert!(generate_answer(timed, &exec, "y".into()).unwrap().answer.ends_with("About 0.537 min."));

        let pharmacy = sk.iter().find(|s| s.bindings["category"] == "pharmacy").unwrap();
        assert!(matches!(
            generate_answer(pharmacy, &exec, "z".into()),
            Err(ExecError::Store(crate::store::StoreError::NoDataForQuery { .. }))
        ));
    }
}
