use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::io::BufRead;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{classify_error, score_pair, ErrorClass, MetricScores};
use super::EvalError;
use crate::protocol::Registry;
use crate::store::Store;

pub const OVERALL: &str = "overall";

/// One test pair tagged with the subset it reports under.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalExample {
    pub id: String,
    pub question: String,
    pub reference: String,
    pub subset: String,
}

#[derive(Debug, Deserialize)]
struct ExportRecord {
    id: String,
    question: String,
    answer: String,
    #[serde(default)]
    metadata: serde_json::Value,
}

/// Reads exported pair records; the subset is `metadata.split`.
pub fn read_examples<R: BufRead>(input: R) -> Result<Vec<EvalExample>, EvalError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| EvalError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ExportRecord =
            serde_json::from_str(&line).map_err(|e| EvalError::Format { line: i + 1, message: e.to_string() })?;
        let subset = rec.metadata.get("split").and_then(|v| v.as_str()).unwrap_or("test").to_string();
        out.push(EvalExample { id: rec.id, question: rec.question, reference: rec.answer, subset });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub generated_text: String,
}

/// Produces the generated answer for one example. `Ok(None)` marks a gap.
pub trait Predictor: Sync {
    fn predict(&self, example: &EvalExample) -> Result<Option<String>, String>;
}

/// Predictions loaded from a line-delimited file.
#[derive(Debug, Clone, Default)]
pub struct PredictionFile {
    by_id: HashMap<String, String>,
}

impl PredictionFile {
    pub fn read<R: BufRead>(input: R) -> Result<Self, EvalError> {
        let mut by_id = HashMap::new();
        for (i, line) in input.lines().enumerate() {
            let line = line.map_err(|e| EvalError::Io(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: PredictionRecord = serde_json::from_str(&line)
                .map_err(|e| EvalError::Format { line: i + 1, message: e.to_string() })?;
            by_id.insert(rec.id, rec.generated_text);
        }
        Ok(Self { by_id })
    }

    pub fn insert(&mut self, id: impl Into<String>, text: impl Into<String>) {
        self.by_id.insert(id.into(), text.into());
    }
}

impl FromIterator<(String, String)> for PredictionFile {
    fn from_iter<I: IntoIterator<Item = (String, String)>>(iter: I) -> Self {
        Self { by_id: iter.into_iter().collect() }
    }
}

impl Predictor for PredictionFile {
    fn predict(&self, example: &EvalExample) -> Result<Option<String>, String> {
        Ok(self.by_id.get(&example.id).cloned())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleResult {
    pub id: String,
    pub subset: String,
    pub generated: String,
    pub scores: MetricScores,
    pub class: ErrorClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub subset: String,
    pub n_total: usize,
    pub n_exact: usize,
    pub ema: f64,
    pub bleu_4: f64,
    pub rouge_l: f64,
    pub class_counts: BTreeMap<ErrorClass, usize>,
    /// Percentage of the row per error class.
    pub class_pct: BTreeMap<ErrorClass, f64>,
}

impl ReportRow {
    fn from_results<'a>(subset: &str, results: impl Iterator<Item = &'a ExampleResult>) -> Self {
        let mut n_total = 0;
        let mut n_exact = 0;
        let (mut bleu, mut rouge) = (0.0, 0.0);
        let mut class_counts: BTreeMap<ErrorClass, usize> = ErrorClass::ALL.iter().map(|c| (*c, 0)).collect();
        for r in results {
            n_total += 1;
            n_exact += usize::from(r.scores.exact_match);
            bleu += r.scores.bleu_4;
            rouge += r.scores.rouge_l;
            *class_counts.get_mut(&r.class).expect("all classes present") += 1;
        }
        let pct = |n: usize| if n_total == 0 { 0.0 } else { n as f64 / n_total as f64 * 100.0 };
        let mean = |s: f64| if n_total == 0 { 0.0 } else { s / n_total as f64 };
        Self {
            subset: subset.to_string(),
            n_total,
            n_exact,
            ema: pct(n_exact),
            bleu_4: mean(bleu),
            rouge_l: mean(rouge),
            class_pct: class_counts.iter().map(|(c, n)| (*c, pct(*n))).collect(),
            class_counts,
        }
    }

    pub fn pct(&self, class: ErrorClass) -> f64 {
        self.class_pct.get(&class).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// One row per subset in name order, then the overall row.
    pub rows: Vec<ReportRow>,
    pub examples: Vec<ExampleResult>,
}

impl EvalReport {
    pub fn row(&self, subset: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.subset == subset)
    }

    pub fn overall(&self) -> &ReportRow {
        self.rows.last().expect("overall row always present")
    }

    /// Aligned plain-text table.
    pub fn render_text(&self) -> String {
        let width = self.rows.iter().map(|r| r.subset.len()).max().unwrap_or(0).max("subset".len());
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<width$}  {:>7}  {:>7}  {:>7}  {:>7}  {:>7}  {:>7}  {:>7}  {:>7}",
            "subset", "N", "exact", "EM%", "BLEU-4", "ROUGE-L", "syntax%", "loc%", "other%"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<width$}  {:>7}  {:>7}  {:>7.2}  {:>7.4}  {:>7.4}  {:>7.2}  {:>7.2}  {:>7.2}",
                r.subset,
                r.n_total,
                r.n_exact,
                r.ema,
                r.bleu_4,
                r.rouge_l,
                r.pct(ErrorClass::SyntaxError),
                r.pct(ErrorClass::LocationError),
                r.pct(ErrorClass::Other),
            );
        }
        out
    }

    /// Rows only, as JSON.
    pub fn render_json(&self) -> String {
        serde_json::to_string_pretty(&self.rows).expect("report rows serialize")
    }
}

/// Scores every example, aggregates per subset and overall.
pub fn evaluate_corpus(
    examples: &[EvalExample],
    predictor: &dyn Predictor,
    registry: &Registry,
    store: &Store,
) -> Result<EvalReport, EvalError> {
    let predictions: Vec<Result<Option<String>, String>> =
        examples.par_iter().map(|ex| predictor.predict(ex)).collect();

    let mut missing = Vec::new();
    let mut generated = Vec::with_capacity(examples.len());
    for (ex, p) in examples.iter().zip(predictions) {
        match p {
            Ok(Some(text)) => generated.push(text),
            Ok(None) => missing.push(ex.id.clone()),
            Err(message) => return Err(EvalError::Prediction { id: ex.id.clone(), message }),
        }
    }
    if !missing.is_empty() {
        return Err(EvalError::ReportIncomplete(missing));
    }

    let results: Vec<ExampleResult> = examples
        .par_iter()
        .zip(generated.into_par_iter())
        .map(|(ex, generated)| ExampleResult {
            scores: score_pair(&ex.reference, &generated),
            class: classify_error(&ex.reference, &generated, registry, store),
            id: ex.id.clone(),
            subset: ex.subset.clone(),
            generated,
        })
        .collect();

    let mut subsets: Vec<&str> = results.iter().map(|r| r.subset.as_str()).collect();
    subsets.sort_unstable();
    subsets.dedup();
    let mut rows: Vec<ReportRow> = subsets
        .iter()
        .map(|s| ReportRow::from_results(s, results.iter().filter(|r| r.subset == *s)))
        .collect();
    rows.push(ReportRow::from_results(OVERALL, results.iter()));
    Ok(EvalReport { rows, examples: results })
}
