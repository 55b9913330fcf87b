use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use geoask_core::adapter::{Backend, GenerationRequest, LoopPredictor, MockBackend, RemoteBackend, RemoteConfig};
use geoask_core::datagen::{
    generate_pairs, split_and_export, ModelParaphraser, Paraphraser, RuleParaphraser, SchemaFile, SplitSpec,
};
use geoask_core::eval::{evaluate_corpus, read_examples, EvalExample, PredictionFile, PredictionRecord, Predictor};
use geoask_core::protocol::Registry;
use geoask_core::sample::{synth_sample, SampleSpec};
use geoask_core::service::{build_service, import_snapshot, load_templates, router, serve, QueryRequest, ServiceConfig};
use geoask_core::store::{write_gazetteer, Store, StoreExecutor};

#[derive(Parser)]
#[command(name = "geoask", version, about = "Ask questions about access to services in plain language")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ParaphraserKind {
    Rule,
    Model,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendChoice {
    /// Replays the reference answers of the examples.
    Mock,
    Remote,
}

#[derive(Subcommand)]
enum Command {
    /// Write a deterministic synthetic dataset and gazetteer.
    SynthSample {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 17)]
        seed: u64,
        #[arg(long, default_value_t = 358)]
        locations: usize,
    },
    /// Generate, split and export question/answer pairs.
    Generate {
        #[arg(long)]
        schema: PathBuf,
        #[arg(long, required = true, num_args = 1..)]
        templates: Vec<PathBuf>,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        gazetteer: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        paraphrases: usize,
        #[arg(long, default_value_t = 0)]
        unseen_locations: usize,
        #[arg(long, default_value_t = 0.05)]
        semantic_variant_fraction: f64,
        #[arg(long, default_value_t = 0.06)]
        test_fraction: f64,
        #[arg(long, default_value_t = 0.02)]
        val_fraction: f64,
        #[arg(long, value_enum, default_value_t = ParaphraserKind::Rule)]
        paraphraser: ParaphraserKind,
        /// Completion endpoint for the model paraphraser.
        #[arg(long)]
        endpoint: Option<String>,
    },
    /// Score generated answers against references.
    Evaluate {
        /// Exported split files.
        #[arg(long, required = true, num_args = 1..)]
        examples: Vec<PathBuf>,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        gazetteer: PathBuf,
        /// Precomputed predictions; otherwise the tool loop runs on a backend.
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = BackendChoice::Mock)]
        backend: BackendChoice,
        #[arg(long)]
        endpoint: Option<String>,
        #[arg(long, default_value_t = 1)]
        retry_budget: usize,
        /// Write each generated answer here.
        #[arg(long)]
        predictions_out: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Answer one question without the HTTP layer.
    Query {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        question: String,
        #[arg(long, requires = "lon", allow_negative_numbers = true)]
        lat: Option<f64>,
        #[arg(long, requires = "lat", allow_negative_numbers = true)]
        lon: Option<f64>,
    },
    /// Convert a recorded Overpass response into a gazetteer file.
    ImportOverpass {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

type CliResult = Result<(), String>;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn open(path: &Path) -> Result<BufReader<File>, String> {
    File::open(path).map(BufReader::new).map_err(|e| format!("{}: {e}", path.display()))
}

fn synth(out: &Path, seed: u64, locations: usize) -> CliResult {
    let sample = synth_sample(&SampleSpec { seed, locations, ..Default::default() });
    sample.write(out).map_err(err)?;
    println!("wrote {} records and {} places to {}", sample.records.len(), sample.gazetteer.len(), out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn generate(
    schema: &Path,
    templates: &[PathBuf],
    dataset: &Path,
    gazetteer: &Path,
    out: &Path,
    spec: SplitSpec,
    paraphrases: usize,
    paraphraser: ParaphraserKind,
    endpoint: Option<String>,
) -> CliResult {
    let start = Instant::now();
    let registry = Registry::standard();
    let schema = SchemaFile::parse(&std::fs::read_to_string(schema).map_err(err)?).map_err(err)?;
    let projections = schema.projections().map_err(err)?;
    let mut templates = load_templates(templates).map_err(err)?;
    templates.bind_projections(&projections).map_err(err)?;
    let (store, _) = Store::open(dataset, gazetteer).map_err(err)?;
    let store = Arc::new(store);
    let executor = StoreExecutor::new(store.clone());
    let engine: Box<dyn Paraphraser> = match paraphraser {
        ParaphraserKind::Rule => Box::new(RuleParaphraser),
        ParaphraserKind::Model => {
            let endpoint = endpoint.ok_or("--paraphraser model needs --endpoint")?;
            let backend = RemoteBackend::new(RemoteConfig { endpoint, timeout_ms: 30_000 }).map_err(err)?;
            Box::new(ModelParaphraser { backend: Arc::new(backend), temperature: 0.7, max_tokens: 256 })
        }
    };
    let mut generated =
        generate_pairs(&templates, &registry, store.gazetteer(), &executor, engine.as_ref(), paraphrases);
    if !generated.dropped.is_empty() {
        log::warn!("{} skeletons dropped because their call could not be executed", generated.dropped.len());
    }
    let manifest = split_and_export(&mut generated.pairs, &spec, out, &registry).map_err(err)?;
    println!("{} projections, {} templates", projections.len(), templates.templates.len());
    for (split, n) in &manifest.counts {
        println!("{split:>24} {n:>8}");
    }
    println!("{:>24} {:>8}", "total", manifest.total);
    println!("content hash {}", manifest.content_hash);
    println!("done in {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn evaluate(
    files: &[PathBuf],
    dataset: &Path,
    gazetteer: &Path,
    predictions: Option<PathBuf>,
    backend: BackendChoice,
    endpoint: Option<String>,
    retry_budget: usize,
    predictions_out: Option<PathBuf>,
    json: bool,
) -> CliResult {
    let mut examples: Vec<EvalExample> = Vec::new();
    for f in files {
        examples.extend(read_examples(open(f)?).map_err(err)?);
    }
    let (store, _) = Store::open(dataset, gazetteer).map_err(err)?;
    let store = Arc::new(store);
    let registry = Registry::standard();
    let report = match predictions {
        Some(path) => {
            let preds = PredictionFile::read(open(&path)?).map_err(err)?;
            evaluate_corpus(&examples, &preds, &registry, &store).map_err(err)?
        }
        None => {
            let backend: Box<dyn Backend> = match backend {
                BackendChoice::Mock => {
                    let mock = MockBackend::new();
                    for ex in &examples {
                        mock.register(&ex.question, ex.reference.clone());
                    }
                    Box::new(mock)
                }
                BackendChoice::Remote => {
                    let endpoint = endpoint.ok_or("--backend remote needs --endpoint")?;
                    Box::new(RemoteBackend::new(RemoteConfig { endpoint, timeout_ms: 30_000 }).map_err(err)?)
                }
            };
            let executor = StoreExecutor::new(store.clone());
            let predictor = LoopPredictor {
                backend: backend.as_ref(),
                executor: &executor,
                template: GenerationRequest::new(""),
                retry_budget,
            };
            let p: &dyn Predictor = &predictor;
            evaluate_corpus(&examples, p, &registry, &store).map_err(err)?
        }
    };
    if let Some(path) = predictions_out {
        let mut w = BufWriter::new(File::create(&path).map_err(err)?);
        for ex in &report.examples {
            let rec = PredictionRecord { id: ex.id.clone(), generated_text: ex.generated.clone() };
            writeln!(w, "{}", serde_json::to_string(&rec).map_err(err)?).map_err(err)?;
        }
        w.flush().map_err(err)?;
    }
    if json {
        println!("{}", report.render_json());
    } else {
        print!("{}", report.render_text());
    }
    Ok(())
}

fn run_serve(config: &Path) -> CliResult {
    let cfg = ServiceConfig::load(config).map_err(err)?;
    let service = Arc::new(build_service(&cfg).map_err(err)?);
    let app = router(service, cfg.pool_size);
    let rt = tokio::runtime::Runtime::new().map_err(err)?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(&cfg.listen).await.map_err(|e| format!("{}: {e}", cfg.listen))?;
        log::info!("listening on {}", cfg.listen);
        println!("listening on http://{}", listener.local_addr().map_err(err)?);
        serve(listener, app).await.map_err(err)
    })
}

fn run_query(config: &Path, question: String, lat: Option<f64>, lon: Option<f64>) -> CliResult {
    let cfg = ServiceConfig::load(config).map_err(err)?;
    let service = build_service(&cfg).map_err(err)?;
    let request = QueryRequest { question, lat, lon, lang: None };
    match service.handle_query(&request) {
        Ok(resp) => {
            println!("{}", serde_json::to_string_pretty(&resp).map_err(err)?);
            Ok(())
        }
        Err(e) => {
            println!("{}", serde_json::to_string_pretty(&e).map_err(err)?);
            Err(e.message)
        }
    }
}

fn import_overpass(input: &Path, out: &Path) -> CliResult {
    let text = std::fs::read_to_string(input).map_err(|e| format!("{}: {e}", input.display()))?;
    let entries = import_snapshot(&text).map_err(err)?;
    write_gazetteer(BufWriter::new(File::create(out).map_err(err)?), &entries).map_err(err)?;
    println!("wrote {} places to {}", entries.len(), out.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::SynthSample { out, seed, locations } => synth(&out, seed, locations),
        Command::Generate {
            schema,
            templates,
            dataset,
            gazetteer,
            out,
            seed,
            paraphrases,
            unseen_locations,
            semantic_variant_fraction,
            test_fraction,
            val_fraction,
            paraphraser,
            endpoint,
        } => {
            let spec = SplitSpec {
                seed,
                unseen_locations,
                semantic_variant_fraction,
                test_fraction,
                val_fraction,
                ..Default::default()
            };
            generate(&schema, &templates, &dataset, &gazetteer, &out, spec, paraphrases, paraphraser, endpoint)
        }
        Command::Evaluate {
            examples,
            dataset,
            gazetteer,
            predictions,
            backend,
            endpoint,
            retry_budget,
            predictions_out,
            json,
        } => evaluate(
            &examples,
            &dataset,
            &gazetteer,
            predictions,
            backend,
            endpoint,
            retry_budget,
            predictions_out,
            json,
        ),
        Command::Serve { config } => run_serve(&config),
        Command::Query { config, question, lat, lon } => run_query(&config, question, lat, lon),
        Command::ImportOverpass { input, out } => import_overpass(&input, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
