//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

mod common;

use std::collections::{BTreeSet, HashMap};
use std::panic::AssertUnwindSafe;
use std::sync::Arc;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::strategies::{call, partition, result, transcript, Piece};
use common::*;
use geoask_core::adapter::{run_tool_loop, GenerationRequest, LoopPredictor, MockBackend};
use geoask_core::datagen::{
    check_ground_truth, generate_pairs, split_and_export, QAPair, RuleParaphraser, Split, SplitSpec,
};
use geoask_core::eval::{bleu_4, evaluate_corpus, rouge_l, ErrorClass, EvalExample};
use geoask_core::protocol::{
    parse_call, scan_stream, serialize_call, Registry, ScanItem, StreamEvent, ToolCall, GET_CLOSEST,
};
use geoask_core::sample::{synth_sample, SampleSpec};
use geoask_core::service::{QueryErrorKind, QueryRequest};
use geoask_core::store::{
    haversine_km, AccessRecord, Category, GazetteerEntry, GeoPoint, Metric, Store, StoreExecutor, ToolExecutor,
    TravelMode,
};

type Check = fn() -> Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, || format!("took {elapsed:.2?}, limit {limit:?}"))
}

// ------------------------------------------------------------------ metrics

fn metric_oracles() -> Result<String, String> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let vocab = ["the", "nearest", "hospital", "is", "km", "away"];
    let mut nonzero = 0;
    for i in 0..200 {
        // Narrow vocabularies on some pairs so higher-order n-grams overlap.
        let v = if i % 2 == 0 { 3 } else { vocab.len() };
        let seq = |rng: &mut ChaCha8Rng| -> Vec<&str> {
            let n = rng.random_range(0..=12);
            (0..n).map(|_| vocab[rng.random_range(0..v)]).collect()
        };
        let r = seq(&mut rng);
        let g = seq(&mut rng);
        let (b, bo) = (bleu_4(&r, &g), bleu_oracle(&r, &g));
        ensure((b - bo).abs() <= 1e-9, || format!("bleu {b} vs oracle {bo} on {r:?} / {g:?}"))?;
        let (l, lo) = (rouge_l(&r, &g), rouge_oracle(&r, &g));
        ensure((l - lo).abs() <= 1e-9, || format!("rouge {l} vs oracle {lo} on {r:?} / {g:?}"))?;
        nonzero += usize::from(b > 0.0);
    }
    ensure(nonzero >= 20, || format!("only {nonzero} pairs with non-zero BLEU"))?;
    within(start.elapsed(), Duration::from_secs(5))?;
    Ok(format!("200 pairs, {nonzero} with non-zero BLEU, {:.2?}", start.elapsed()))
}

fn metric_point_checks() -> Result<String, String> {
    let r = ["what", "is", "the", "nearest", "hospital"];
    let g = ["the", "nearest", "hospital"];
    let v = rouge_l(&r, &g);
    ensure(v == 0.75, || format!("rouge_l = {v}"))?;
    let same = ["a", "b", "c", "d", "e"];
    let v = bleu_4(&same, &same);
    ensure(v == 1.0, || format!("bleu of identical = {v}"))?;
    // Unigrams and bigrams overlap, no trigram does.
    let v = bleu_4(&["a", "b", "x", "c", "d"], &["a", "b", "y", "c", "d"]);
    ensure(v == 0.0, || format!("bleu with zero trigram precision = {v}"))?;
    Ok("rouge_l 0.75, identical 1.0, zero precision 0.0".into())
}

// ----------------------------------------------------------------- protocol

fn worked_example_store() -> Store {
    let p = |lat, lon| GeoPoint::new(lat, lon).unwrap();
    let rec = |o, d, t| AccessRecord {
        origin: o,
        category: Category::Hospital,
        mode: TravelMode::Drive,
        distance_km: d,
        time_min: t,
    };
    let records = vec![
        rec(p(43.1525, -2.6076), 0.402, 0.537),
        rec(p(43.1706, -2.6316), 2.94, 4.1),
        rec(p(43.2193, -2.7336), 9.8, 12.5),
    ];
    let gazetteer = vec![
        GazetteerEntry { name: "Abadiño, Durango".into(), point: p(43.1525, -2.6076), population: Some(7_600) },
        GazetteerEntry { name: "Durango".into(), point: p(43.1706, -2.6316), population: Some(30_800) },
    ];
    Store::from_parts(records, gazetteer).unwrap()
}

fn worked_example() -> Result<String, String> {
    let exec = StoreExecutor::new(Arc::new(worked_example_store()));
    let call = ToolCall::new(GET_CLOSEST)
        .arg("category", "hospital")
        .arg("mode", "drive")
        .arg("location", "Abadiño, Durango")
        .arg("metric_to_extract", "distance");
    let res = exec.execute(&call).map_err(|e| e.to_string())?;
    let text = serialize_call(&call, Some(&res));
    ensure(text == WORKED_CALL, || format!("serialized {text}"))?;
    ensure(WORKED_ANSWER.contains(&text), || "not a substring of the reference answer".into())?;

    // The same bytes come out of the tool loop on the demo region.
    let mock = MockBackend::new();
    mock.register(WORKED_QUESTION, WORKED_ANSWER);
    let demo = StoreExecutor::new(sample_store(358));
    let out = run_tool_loop(&mock, &GenerationRequest::new(WORKED_QUESTION), &demo, 0).map_err(|e| e.to_string())?;
    ensure(out.final_text == WORKED_ANSWER, || format!("tool loop produced {}", out.final_text))?;
    Ok("executed call and tool-loop transcript are byte-identical".into())
}

fn events_of(items: &[ScanItem]) -> Vec<StreamEvent> {
    items
        .iter()
        .filter_map(|i| match i {
            ScanItem::Event(e) => Some(e.clone()),
            ScanItem::Error(_) => None,
        })
        .collect()
}

fn grammar_round_trip() -> Result<String, String> {
    let start = Instant::now();
    let cases = 10_000;
    let mut runner = TestRunner::new(Config { cases, failure_persistence: None, ..Config::default() });
    let strategy = (
        call(),
        prop::option::of(result()),
        transcript(),
        prop::collection::vec(any::<prop::sample::Index>(), 0..8),
    );
    runner
        .run(&strategy, |(c, r, pieces, cuts)| {
            let text = serialize_call(&c, r.as_ref());
            let parsed = parse_call(&text).map_err(|e| TestCaseError::fail(format!("{text}: {e}")))?;
            prop_assert_eq!(&parsed.call, &c);
            prop_assert_eq!(&parsed.result, &r);
            prop_assert_eq!(parsed.span, 0..text.len());

            let stream: String = pieces.iter().map(Piece::render).collect();
            let whole = scan_stream([stream.as_str()]);
            let chunked = scan_stream(partition(&stream, &cuts));
            prop_assert_eq!(&chunked, &whole, "text {:?}", stream);
            let expected: Vec<&ToolCall> = pieces
                .iter()
                .filter_map(|p| match p {
                    Piece::Call(c, _) => Some(c),
                    Piece::Prose(_) => None,
                })
                .collect();
            let seen: Vec<&ToolCall> = whole
                .iter()
                .filter_map(|i| match i {
                    ScanItem::Event(StreamEvent::CallReady(c)) => Some(c),
                    _ => None,
                })
                .collect();
            prop_assert_eq!(seen, expected, "text {:?}", stream);
            prop_assert_eq!(events_of(&whole).pop(), Some(StreamEvent::End));
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    within(start.elapsed(), Duration::from_secs(30))?;
    Ok(format!("{cases} cases, {:.2?}", start.elapsed()))
}

// --------------------------------------------------------------- end to end

fn examples_of(pairs: &[QAPair]) -> Vec<EvalExample> {
    pairs
        .iter()
        .map(|p| EvalExample {
            id: p.id.clone(),
            question: p.question.clone(),
            reference: p.answer.clone(),
            subset: p.metadata.template_id.clone(),
        })
        .collect()
}

fn end_to_end_mock() -> Result<String, String> {
    let mut templates = shipped_templates(&[data_dir().join("templates.toml")]);
    templates.templates.sort_by(|a, b| a.id.cmp(&b.id));
    templates.templates.truncate(10);
    let store = sample_store(50);
    let exec = StoreExecutor::new(store.clone());
    let registry = Registry::standard();
    let g = generate_pairs(&templates, &registry, store.gazetteer(), &exec, &RuleParaphraser, 3);
    ensure(g.pairs.len() >= 1500, || format!("only {} pairs", g.pairs.len()))?;

    let mock = MockBackend::new();
    for p in &g.pairs {
        mock.register(&p.question, p.answer.clone());
    }
    let examples = examples_of(&g.pairs);
    let predictor =
        LoopPredictor { backend: &mock, executor: &exec, template: GenerationRequest::new(""), retry_budget: 1 };
    let report = evaluate_corpus(&examples, &predictor, &registry, &store).map_err(|e| e.to_string())?;
    let o = report.overall();
    ensure(o.ema == 100.0, || format!("EMA {}", o.ema))?;
    ensure(o.bleu_4 == 1.0 && o.rouge_l == 1.0, || format!("BLEU {} ROUGE {}", o.bleu_4, o.rouge_l))?;
    let off: Vec<&str> =
        report.examples.iter().filter(|r| r.class != ErrorClass::Exact).map(|r| r.id.as_str()).collect();
    ensure(off.is_empty(), || format!("{} examples not exact, e.g. {:?}", off.len(), &off[..off.len().min(5)]))?;
    Ok(format!(
        "{} templates, {} pairs: EMA {:.1}%, BLEU {:.3}, ROUGE-L {:.3}",
        templates.templates.len(),
        o.n_total,
        o.ema,
        o.bleu_4,
        o.rouge_l
    ))
}

/// Rewrites the first call head of `answer` with `edit`.
fn corrupt(answer: &str, edit: impl FnOnce(&ToolCall) -> ToolCall) -> String {
    let call = parse_call(answer).expect("reference parses").call;
    answer.replacen(&call.head(), &edit(&call).head(), 1)
}

fn controlled_noise() -> Result<String, String> {
    let templates = shipped_templates(&[data_dir().join("templates.toml")]);
    let store = sample_store(60);
    let exec = StoreExecutor::new(store.clone());
    let registry = Registry::standard();
    let g = generate_pairs(&templates, &registry, store.gazetteer(), &exec, &RuleParaphraser, 0);
    let mut pool: Vec<QAPair> = g
        .pairs
        .into_iter()
        .filter(|p| parse_call(&p.answer).is_ok_and(|c| c.call.name == GET_CLOSEST))
        .collect();
    ensure(pool.len() >= 500, || format!("only {} single-location pairs", pool.len()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    pool.shuffle(&mut rng);
    pool.truncate(500);

    let names: Vec<String> = store.gazetteer().iter().map(|e| e.name.clone()).collect();
    let mut injected: HashMap<String, ErrorClass> = HashMap::new();
    let mock = MockBackend::new();
    for (i, p) in pool.iter().enumerate() {
        let noisy = match i {
            0..25 => {
                injected.insert(p.id.clone(), ErrorClass::LocationError);
                corrupt(&p.answer, |c| {
                    let here = c.get("location").unwrap_or_default().to_string();
                    let other = loop {
                        let n = &names[rng.random_range(0..names.len())];
                        if n.to_lowercase() != here.to_lowercase() {
                            break n.clone();
                        }
                    };
                    let args = c.args.iter().map(|(k, v)| {
                        let v = if k == "location" { other.clone() } else { v.clone() };
                        (k.clone(), v)
                    });
                    ToolCall { name: c.name.clone(), args: args.collect() }
                })
            }
            25..50 => {
                injected.insert(p.id.clone(), ErrorClass::SyntaxError);
                corrupt(&p.answer, |c| ToolCall {
                    name: c.name.clone(),
                    args: c.args.iter().filter(|(k, _)| k != "mode").cloned().collect(),
                })
            }
            _ => p.answer.clone(),
        };
        mock.register(&p.question, noisy);
    }

    let examples = examples_of(&pool);
    let predictor =
        LoopPredictor { backend: &mock, executor: &exec, template: GenerationRequest::new(""), retry_budget: 0 };
    let report = evaluate_corpus(&examples, &predictor, &registry, &store).map_err(|e| e.to_string())?;
    let o = report.overall();
    let (loc, syn) = (o.pct(ErrorClass::LocationError), o.pct(ErrorClass::SyntaxError));
    let attributed = report
        .examples
        .iter()
        .filter(|r| injected.get(&r.id) == Some(&r.class))
        .count();
    let clean_exact = report
        .examples
        .iter()
        .filter(|r| !injected.contains_key(&r.id) && r.class == ErrorClass::Exact)
        .count();
    let attribution = 100.0 * attributed as f64 / injected.len() as f64;
    let summary =
        format!("EMA {:.1}%, location {loc:.1}%, syntax {syn:.1}%, attribution {attribution:.1}%", o.ema);
    ensure(o.n_total == 500, || format!("{} examples", o.n_total))?;
    ensure(o.ema == 90.0 && loc == 5.0 && syn == 5.0, || summary.clone())?;
    ensure(attribution >= 99.0, || summary.clone())?;
    ensure(clean_exact == 450, || format!("{clean_exact} of 450 clean examples exact"))?;
    Ok(summary)
}

// ------------------------------------------------------------------ datagen

fn export_once(dest: &std::path::Path) -> Result<(usize, Vec<QAPair>), String> {
    let templates = shipped_templates(&template_files());
    let store = Arc::new(synth_sample(&SampleSpec::default()).store().map_err(|e| e.to_string())?);
    let exec = StoreExecutor::new(store.clone());
    let registry = Registry::standard();
    let mut g = generate_pairs(&templates, &registry, store.gazetteer(), &exec, &RuleParaphraser, 3);
    ensure(g.dropped.is_empty(), || format!("{} skeletons dropped", g.dropped.len()))?;
    let spec = SplitSpec { seed: 7, unseen_locations: 18, ..SplitSpec::default() };
    let manifest = split_and_export(&mut g.pairs, &spec, dest, &registry).map_err(|e| e.to_string())?;
    Ok((manifest.total, g.pairs))
}

fn read_dir_bytes(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn datagen_hygiene() -> Result<String, String> {
    let start = Instant::now();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (total, _) = export_once(a.path())?;
    let first_run = start.elapsed();
    within(first_run, Duration::from_secs(600))?;
    let (total_b, _) = export_once(b.path())?;
    ensure(total == total_b, || format!("{total} vs {total_b} pairs"))?;
    ensure(read_dir_bytes(a.path()) == read_dir_bytes(b.path()), || "exports differ between runs".into())?;

    let store = Arc::new(synth_sample(&SampleSpec::default()).store().map_err(|e| e.to_string())?);
    let exec = StoreExecutor::new(store.clone());
    let mut by_split: HashMap<Split, BTreeSet<String>> = HashMap::new();
    let mut checked = 0;
    for split in Split::ALL {
        let body = std::fs::read_to_string(a.path().join(format!("{split}.jsonl"))).map_err(|e| e.to_string())?;
        for line in body.lines() {
            let p: QAPair = serde_json::from_str(line).map_err(|e| e.to_string())?;
            check_ground_truth(&p, &exec)?;
            if let Some(loc) = &p.metadata.location {
                by_split.entry(split).or_default().insert(loc.clone());
            }
            checked += 1;
        }
    }
    ensure(checked == total, || format!("{checked} exported lines, manifest says {total}"))?;
    let unseen = by_split.remove(&Split::TestUnseenLocation).unwrap_or_default();
    let train = by_split.remove(&Split::Train).unwrap_or_default();
    ensure(unseen.len() == 18, || format!("{} unseen locations", unseen.len()))?;
    let shared: Vec<&String> = unseen.intersection(&train).collect();
    ensure(shared.is_empty(), || format!("unseen locations in train: {shared:?}"))?;
    Ok(format!("{total} pairs re-executed, export {first_run:.1?}, identical reruns, 0 shared locations"))
}

// -------------------------------------------------------------------- store

fn store_correctness() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let point = |rng: &mut ChaCha8Rng, lat: (f64, f64), lon: (f64, f64)| {
        GeoPoint::new(rng.random_range(lat.0..lat.1), rng.random_range(lon.0..lon.1)).unwrap()
    };
    let (lat, lon) = ((43.0, 43.3), (-2.9, -2.4));
    // Two records equidistant from (43.0625, -2.5) exercise the tie-break.
    let tie_query = GeoPoint::new(43.0625, -2.5).unwrap();
    let mut origins = vec![GeoPoint::new(43.0625, -2.5009765625).unwrap(), GeoPoint::new(43.0625, -2.4990234375).unwrap()];
    while origins.len() < 200 {
        origins.push(point(&mut rng, lat, lon));
    }
    let records: Vec<AccessRecord> = origins
        .iter()
        .map(|&o| AccessRecord {
            origin: o,
            category: Category::Hospital,
            mode: TravelMode::Drive,
            // One decimal so equal values are common.
            distance_km: (rng.random_range(0.0..5.0f64) * 10.0).round() / 10.0,
            time_min: (rng.random_range(0.0..8.0f64) * 10.0).round() / 10.0,
        })
        .collect();
    let gazetteer: Vec<GazetteerEntry> = (0..80)
        .map(|i| GazetteerEntry {
            name: format!("Place {i:02}"),
            point: point(&mut rng, lat, lon),
            population: (i % 7 != 0).then(|| rng.random_range(50..5_000)),
        })
        .collect();
    let store = Store::from_parts(records.clone(), gazetteer.clone()).map_err(|e| e.to_string())?;

    let mut queries = vec![tie_query; 10];
    while queries.len() < 1000 {
        // Include points outside the records' bounding box.
        queries.push(point(&mut rng, (42.8, 43.5), (-3.1, -2.2)));
    }
    for q in &queries {
        let got = store.nearest_record(Category::Hospital, TravelMode::Drive, *q).map_err(|e| e.to_string())?;
        let want = nearest_oracle(&records, *q).unwrap();
        ensure(got == want, || format!("nearest to {q}: {:?} vs {:?}", got.origin, want.origin))?;
    }
    let tie = store.nearest_record(Category::Hospital, TravelMode::Drive, tie_query).unwrap();
    ensure(tie.origin == origins[0], || format!("tie resolved to {}", tie.origin))?;

    let mut lists = 0;
    for metric in [Metric::Distance, Metric::Time] {
        for threshold in [0.0, 0.5, 1.0, 2.5, 4.0, 100.0] {
            for pop in [None, Some(300), Some(2_000)] {
                let got: Vec<(String, f64)> = store
                    .list_within_threshold(Category::Hospital, TravelMode::Drive, metric, threshold, pop)
                    .map_err(|e| e.to_string())?
                    .into_iter()
                    .map(|h| (h.name, h.value))
                    .collect();
                let want =
                    threshold_oracle(&records, &gazetteer, Category::Hospital, TravelMode::Drive, metric, threshold, pop);
                ensure(got == want, || format!("list {metric:?} <= {threshold} pop {pop:?}: {got:?} vs {want:?}"))?;
                lists += 1;
            }
        }
    }

    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let a = point(&mut rng, (-89.0, 89.0), (-180.0, 180.0));
        let b = point(&mut rng, (-89.0, 89.0), (-180.0, 180.0));
        worst = worst.max((haversine_km(a, b) - law_of_cosines_km(a, b)).abs());
    }
    ensure(worst <= 1e-6, || format!("haversine off by {worst} km"))?;
    Ok(format!("1000 nearest queries, {lists} threshold lists, haversine max dev {worst:.1e} km"))
}

// ------------------------------------------------------------------ service

fn service_contracts() -> Result<String, String> {
    let service = demo_service(40, 64);
    let rejected = [
        QueryRequest::new(""),
        QueryRequest::new("Write me a poem about the sea"),
        QueryRequest::new("<API> </API>"),
        QueryRequest::new("x".repeat(2_000)),
        QueryRequest::new("nearest hospital\u{0007}"),
        QueryRequest { lat: Some(43.15), ..QueryRequest::new("nearest hospital to {location}") },
    ];
    for req in &rejected {
        let err = service.handle_query(req).err().ok_or_else(|| format!("{:?} was answered", req.question))?;
        ensure(err.error == QueryErrorKind::Rejected, || format!("{:?}: {:?}", req.question, err.error))?;
    }
    ensure(service.backend_invocations() == 0, || {
        format!("{} backend calls for rejected requests", service.backend_invocations())
    })?;

    let q = QueryRequest::new(WORKED_QUESTION);
    let first = service.handle_query(&q).map_err(|e| e.message)?;
    let calls = service.backend_invocations();
    let second = service.handle_query(&q).map_err(|e| e.message)?;
    ensure(!first.trace.cache_hit && second.trace.cache_hit, || "second request missed the cache".into())?;
    ensure(first.answer == second.answer, || "cached answer differs".into())?;
    ensure(second.trace.inference_ms == 0.0, || format!("cached inference {} ms", second.trace.inference_ms))?;
    ensure(service.backend_invocations() == calls, || "cache hit reached the backend".into())?;
    ensure(first.answer.contains("0.402km away"), || first.answer.clone())?;

    let exchanges = run_golden_exchanges();
    let failed: Vec<String> = exchanges.iter().filter_map(|(_, r)| r.clone().err()).collect();
    ensure(failed.is_empty(), || failed.join("\n"))?;
    Ok(format!("{} rejections with 0 backend calls, cache hit verified, {} golden exchanges", rejected.len(), exchanges.len()))
}

fn main() {
    let checks: [(&str, Check); 9] = [
        ("metric oracle equivalence", metric_oracles),
        ("metric point checks", metric_point_checks),
        ("worked example byte-exactness", worked_example),
        ("grammar round-trip", grammar_round_trip),
        ("end-to-end mock pipeline", end_to_end_mock),
        ("controlled-noise evaluation", controlled_noise),
        ("datagen hygiene at scale", datagen_hygiene),
        ("store correctness", store_correctness),
        ("service contracts", service_contracts),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failures = 0;
    for (name, check) in checks {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|p| Err(p.downcast_ref::<String>().cloned().unwrap_or_else(|| "panicked".into())));
        let t = start.elapsed();
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail} [{t:.1?}]"),
            Err(why) => {
                failures += 1;
                println!("FAIL  {name}: {why} [{t:.1?}]");
            }
        }
    }
    if failures > 0 {
        std::process::exit(1);
    }
}
