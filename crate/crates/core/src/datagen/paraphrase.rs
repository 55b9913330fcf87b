use std::sync::{Arc, LazyLock};

use regex::Regex;

use super::instantiate::QAPair;
use crate::adapter::{Backend, GenerationRequest};

const MASK_OPEN: char = '\u{E000}';
const MASK_CLOSE: char = '\u{E001}';

/// Produces question variants that keep every protected span verbatim.
pub trait Paraphraser: Send + Sync {
    fn variants(&self, question: &str, language: &str, protected: &[String], count: usize) -> Vec<String>;
}

fn preserves(candidate: &str, protected: &[String]) -> bool {
    protected.iter().all(|p| candidate.contains(p.as_str()))
}

/// Variants of `pair` with paraphrase indices 1..; slot violators are
/// dropped.
pub fn paraphrase(pair: &QAPair, engine: &dyn Paraphraser, protected: &[String], count: usize) -> Vec<QAPair> {
    if count == 0 {
        return Vec::new();
    }
    let variants: Vec<String> = engine
        .variants(&pair.question, &pair.metadata.language, protected, count)
        .into_iter()
        .filter(|v| v != &pair.question && preserves(v, protected))
        .take(count)
        .collect();
    if variants.is_empty() {
        log::debug!("no slot-preserving paraphrase for {:?}", pair.question);
    }
    variants
        .into_iter()
        .enumerate()
        .map(|(i, q)| {
            let mut p = pair.clone();
            p.id = format!("{}-p{}", pair.id, i + 1);
            p.question = q;
            p.metadata.paraphrase_index = i + 1;
            p
        })
        .collect()
}

fn lower_first(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c != MASK_OPEN && !s.starts_with("I ") => c.to_lowercase().chain(chars).collect(),
        Some(c) => std::iter::once(c).chain(chars).collect(),
        None => String::new(),
    }
}

type RuleFn = fn(&str) -> Option<String>;

static FRONT_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(?P<head>[^\u{E000}].*?) (?P<prep>from|in|near) (?P<loc>\u{E000}\d+\u{E001})(?P<tail>[^?]*)\?$").unwrap()
});
static WORD_RES: LazyLock<Vec<(Regex, &'static str)>> = LazyLock::new(|| {
    [
        (r"\bnearest\b", "closest"),
        (r"^What is\b", "What's"),
        (r"^How long\b", "How much time"),
        (r"^Which\b", "What"),
        (r"\bfind\b", "reach"),
    ]
    .into_iter()
    .map(|(p, r)| (Regex::new(p).unwrap(), r))
    .collect()
});

fn front_location(q: &str) -> Option<String> {
    let c = FRONT_RE.captures(q)?;
    let prep = &c["prep"];
    let prep = format!("{}{}", prep[..1].to_uppercase(), &prep[1..]);
    Some(format!("{prep} {}{}, {}?", &c["loc"], &c["tail"], lower_first(&c["head"])))
}

fn word_rule(i: usize, q: &str) -> Option<String> {
    let (re, rep) = &WORD_RES[i];
    re.is_match(q).then(|| re.replace(q, *rep).into_owned())
}

fn polite(q: &str) -> Option<String> {
    let body = q.strip_suffix('?')?;
    Some(format!("Could you tell me {}?", lower_first(body)))
}

const EN_RULES: &[RuleFn] = &[
    front_location,
    |q| word_rule(0, q),
    |q| word_rule(1, q),
    |q| word_rule(2, q),
    |q| word_rule(3, q),
    |q| word_rule(4, q),
    polite,
];

/// Fixed clause reorderings and synonym swaps applied with slot values
/// masked out. Rule subsets are tried smallest first, so output is
/// deterministic.
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleParaphraser;

impl RuleParaphraser {
    fn rules(language: &str) -> &'static [RuleFn] {
        match language {
            "en" => EN_RULES,
            _ => &[],
        }
    }

    fn mask(question: &str, protected: &[String]) -> (String, Vec<String>) {
        let mut spans: Vec<&String> = protected.iter().filter(|p| !p.is_empty()).collect();
        spans.sort_by_key(|p| std::cmp::Reverse(p.len()));
        let mut text = question.to_string();
        let mut table = Vec::new();
        for s in spans {
            if text.contains(s.as_str()) {
                let token = format!("{MASK_OPEN}{}{MASK_CLOSE}", table.len());
                text = text.replace(s.as_str(), &token);
                table.push(s.clone());
            }
        }
        (text, table)
    }

    fn unmask(text: &str, table: &[String]) -> String {
        let mut out = text.to_string();
        for (i, s) in table.iter().enumerate() {
            out = out.replace(&format!("{MASK_OPEN}{i}{MASK_CLOSE}"), s);
        }
        out
    }
}

impl Paraphraser for RuleParaphraser {
    fn variants(&self, question: &str, language: &str, protected: &[String], count: usize) -> Vec<String> {
        let rules = Self::rules(language);
        let (masked, table) = Self::mask(question, protected);
        let mut subsets: Vec<u32> = (1..(1u32 << rules.len())).collect();
        subsets.sort_by_key(|m| (m.count_ones(), *m));
        let mut out: Vec<String> = Vec::new();
        for mask in subsets {
            if out.len() >= count {
                break;
            }
            let mut text = masked.clone();
            let applied = (0..rules.len()).filter(|i| mask & (1 << i) != 0).all(|i| match rules[i](&text) {
                Some(t) if t != text => {
                    text = t;
                    true
                }
                _ => false,
            });
            if !applied {
                continue;
            }
            let v = Self::unmask(&text, &table);
            if v != question && !out.contains(&v) && preserves(&v, protected) {
                out.push(v);
            }
        }
        out
    }
}

/// Asks a generation backend for rewrites, one per line.
pub struct ModelParaphraser {
    pub backend: Arc<dyn Backend>,
    pub temperature: f64,
    pub max_tokens: usize,
}

impl ModelParaphraser {
    pub fn prompt(question: &str, protected: &[String], count: usize) -> String {
        format!(
            "Rewrite the question below in {count} different ways, one per line. \
             Keep these phrases exactly as written: {}.\nQuestion: {question}",
            protected.join("; ")
        )
    }
}

static LIST_MARKER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*(?:\d+[.)]|[-*])\s*").unwrap());

impl Paraphraser for ModelParaphraser {
    fn variants(&self, question: &str, _language: &str, protected: &[String], count: usize) -> Vec<String> {
        let mut req = GenerationRequest::new(Self::prompt(question, protected, count));
        req.system_prompt = "You paraphrase questions.".into();
        req.pause_in_call = false;
        req.temperature = self.temperature;
        req.max_tokens = self.max_tokens;
        let text: String = match self.backend.generate(&req) {
            Ok(stream) => match stream.collect::<Result<String, _>>() {
                Ok(t) => t,
                Err(e) => {
                    log::warn!("paraphrase backend failed: {e}");
                    return Vec::new();
                }
            },
            Err(e) => {
                log::warn!("paraphrase backend failed: {e}");
                return Vec::new();
            }
        };
        let mut out: Vec<String> = Vec::new();
        for line in text.lines() {
            let v = LIST_MARKER.replace(line, "").trim().to_string();
            if v.is_empty() || v == question || out.contains(&v) {
                continue;
            }
            if preserves(&v, protected) {
                out.push(v);
            } else {
                log::debug!("discarding paraphrase {v:?}: slot value changed");
            }
            if out.len() == count {
                break;
            }
        }
        out
    }
}
