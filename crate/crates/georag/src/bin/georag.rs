//! Command-line front end: build and inspect indexes, run single queries,
//! evaluate benchmark manifests, render reports, and probe endpoints.
//!
//! Exit codes: 0 success, 1 configuration or usage error, 2 data error
//! (unreadable or malformed inputs), 3 transport error, 4 no coordinate in
//! the model reply.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use georag::config::{ConfigError, RunConfig};
use georag::eval::{evaluate_dataset, write_outcomes_jsonl, EvalError};
use georag::ingest::{
    assemble_gallery, load_benchmark_manifest, load_gallery_metadata, load_vectors,
};
use georag::mllm::mock::{EchoFirstCoordinateTransport, ScriptEntry, ScriptedTransport};
use georag::mllm::{Client, ClientError};
use georag::prompt::{ImageAttachment, RetrievalResult, TemplateRegistry};
use georag::parse_coordinates;
use georag::report::{render_report, AccuracyReport, ReportFormat};
use georag::vecstore::Index;

const EXIT_CONFIG: i32 = 1;
const EXIT_DATA: i32 = 2;
const EXIT_TRANSPORT: i32 = 3;
const EXIT_PARSE_MISS: i32 = 4;

#[derive(Parser)]
#[command(
    name = "georag",
    version,
    about = "Retrieval-augmented image geolocalization over a vector gallery and a multimodal model endpoint"
)]
struct Cli {
    /// Key=value config file applied between defaults and flags.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    #[command(flatten)]
    overrides: Overrides,

    #[command(subcommand)]
    command: Command,
}

/// One long flag per config-file key; values mean exactly what the file
/// form means.
#[derive(Args)]
struct Overrides {
    /// Chat-completions endpoint base URL.
    #[arg(long, global = true, value_name = "URL")]
    base_url: Option<String>,
    /// Model name sent in requests.
    #[arg(long, global = true, value_name = "NAME")]
    model: Option<String>,
    /// Sampling temperature in [0, 2].
    #[arg(long, global = true, value_name = "T")]
    temperature: Option<String>,
    /// Nucleus sampling mass in (0, 1].
    #[arg(long, global = true, value_name = "P")]
    top_p: Option<String>,
    /// Reply token budget.
    #[arg(long, global = true, value_name = "N")]
    max_tokens: Option<String>,
    /// Per-request timeout in seconds.
    #[arg(long, global = true, value_name = "S")]
    request_timeout_s: Option<String>,
    /// Extra attempts after a timeout or 5xx.
    #[arg(long, global = true, value_name = "N")]
    max_retries: Option<String>,
    /// First retry delay in seconds; doubles per retry.
    #[arg(long, global = true, value_name = "S")]
    retry_backoff_s: Option<String>,
    /// Nearest neighbors per prompt.
    #[arg(long, global = true, value_name = "K")]
    k_similar: Option<String>,
    /// Farthest neighbors per prompt.
    #[arg(long, global = true, value_name = "K")]
    k_dissimilar: Option<String>,
    /// Prompt template id.
    #[arg(long, global = true, value_name = "ID")]
    template: Option<String>,
    /// Maximum in-flight model calls during evaluate.
    #[arg(long, global = true, value_name = "N")]
    concurrency: Option<String>,
    /// Keep raw model replies in outcome records (true/false).
    #[arg(long, global = true, value_name = "BOOL")]
    include_raw_responses: Option<String>,
    /// Dataset name used in reports.
    #[arg(long, global = true, value_name = "NAME")]
    dataset: Option<String>,
    /// Index mode: flat or ivf.
    #[arg(long, global = true, value_name = "MODE")]
    mode: Option<String>,
    /// Inverted lists for ivf mode.
    #[arg(long, global = true, value_name = "N")]
    nlist: Option<String>,
    /// Lists probed per ivf query.
    #[arg(long, global = true, value_name = "N")]
    nprobe: Option<String>,
    /// K-means iterations when training ivf centroids.
    #[arg(long, global = true, value_name = "N")]
    kmeans_iterations: Option<String>,
    /// RNG seed for centroid initialization.
    #[arg(long, global = true, value_name = "SEED")]
    seed: Option<String>,
}

impl Overrides {
    fn pairs(&self) -> Vec<(&'static str, String)> {
        let mut pairs = Vec::new();
        let mut push = |key: &'static str, value: &Option<String>| {
            if let Some(value) = value {
                pairs.push((key, value.clone()));
            }
        };
        push("base_url", &self.base_url);
        push("model", &self.model);
        push("temperature", &self.temperature);
        push("top_p", &self.top_p);
        push("max_tokens", &self.max_tokens);
        push("request_timeout_s", &self.request_timeout_s);
        push("max_retries", &self.max_retries);
        push("retry_backoff_s", &self.retry_backoff_s);
        push("k_similar", &self.k_similar);
        push("k_dissimilar", &self.k_dissimilar);
        push("template", &self.template);
        push("concurrency", &self.concurrency);
        push("include_raw_responses", &self.include_raw_responses);
        push("dataset", &self.dataset);
        push("mode", &self.mode);
        push("nlist", &self.nlist);
        push("nprobe", &self.nprobe);
        push("kmeans_iterations", &self.kmeans_iterations);
        push("seed", &self.seed);
        pairs
    }
}

#[derive(Subcommand)]
enum Command {
    /// Build an index file from a vector blob and gallery metadata.
    BuildIndex(BuildIndexArgs),
    /// Run the pipeline for one image and print the predicted coordinate.
    Query(QueryArgs),
    /// Evaluate a benchmark manifest and write outcome and report files.
    Evaluate(EvaluateArgs),
    /// Re-render a JSON report into another format.
    Report(ReportArgs),
    /// Probe the model endpoint with a minimal request.
    Healthcheck(HealthcheckArgs),
}

#[derive(Args)]
struct BuildIndexArgs {
    /// Gallery embeddings (vector blob).
    #[arg(long, value_name = "PATH")]
    vectors: PathBuf,
    /// Gallery metadata (JSON lines: id, lat, lon, source).
    #[arg(long, value_name = "PATH")]
    metadata: PathBuf,
    /// Output index path.
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    /// L2-normalize gallery vectors before indexing.
    #[arg(long)]
    normalize: bool,
}

#[derive(Args)]
struct QueryArgs {
    /// Index file.
    #[arg(long, value_name = "PATH")]
    index: PathBuf,
    /// Query image file.
    #[arg(long, value_name = "PATH")]
    image: PathBuf,
    /// Query embedding blob.
    #[arg(long, value_name = "PATH")]
    embedding: PathBuf,
    /// Row of the embedding blob to use.
    #[arg(long, default_value_t = 0, value_name = "N")]
    row: usize,
    /// Print retrieved neighbors.
    #[arg(long)]
    verbose: bool,
    /// Print the rendered prompt.
    #[arg(long)]
    show_prompt: bool,
    /// Directory of extra *.txt prompt templates.
    #[arg(long, value_name = "DIR")]
    templates_dir: Option<PathBuf>,
    #[command(flatten)]
    mock: MockFlags,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Benchmark manifest (JSON lines: id, image_path, lat, lon).
    #[arg(long, value_name = "PATH")]
    manifest: PathBuf,
    /// Index file.
    #[arg(long, value_name = "PATH")]
    index: PathBuf,
    /// Query embeddings, one row per manifest item.
    #[arg(long, value_name = "PATH")]
    embeddings: PathBuf,
    /// Output directory for outcomes.jsonl and report files.
    #[arg(long, value_name = "DIR")]
    out_dir: PathBuf,
    /// Comma-separated report formats (markdown, csv, json).
    #[arg(long, default_value = "markdown", value_name = "LIST")]
    format: String,
    /// Directory of extra *.txt prompt templates.
    #[arg(long, value_name = "DIR")]
    templates_dir: Option<PathBuf>,
    #[command(flatten)]
    mock: MockFlags,
}

#[derive(Args)]
struct ReportArgs {
    /// JSON report produced by evaluate.
    #[arg(long, value_name = "PATH")]
    input: PathBuf,
    /// Output format (markdown, csv, json).
    #[arg(long, default_value = "markdown", value_name = "FMT")]
    format: String,
}

#[derive(Args)]
struct HealthcheckArgs {
    #[command(flatten)]
    mock: MockFlags,
}

#[derive(Args)]
struct MockFlags {
    /// JSON script of canned responses replacing the live endpoint.
    #[arg(long, value_name = "PATH", conflicts_with = "mock_echo_nearest")]
    mock_script: Option<PathBuf>,
    /// Mock endpoint replying with the first coordinate in each prompt.
    #[arg(long)]
    mock_echo_nearest: bool,
}

/// A failed command: exit code plus the message printed to stderr.
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Failure {
        Failure {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }

    fn data(message: impl Into<String>) -> Failure {
        Failure {
            code: EXIT_DATA,
            message: message.into(),
        }
    }

    fn transport(message: impl Into<String>) -> Failure {
        Failure {
            code: EXIT_TRANSPORT,
            message: message.into(),
        }
    }

    fn parse_miss(message: impl Into<String>) -> Failure {
        Failure {
            code: EXIT_PARSE_MISS,
            message: message.into(),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Failure {
        Failure::config(e.to_string())
    }
}

impl From<ClientError> for Failure {
    fn from(e: ClientError) -> Failure {
        match e {
            ClientError::InvalidConfig(_) => Failure::config(e.to_string()),
            ClientError::OversizedImage { .. } => Failure::data(e.to_string()),
            _ => Failure::transport(e.to_string()),
        }
    }
}

fn main() {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            std::process::exit(if e.use_stderr() { EXIT_CONFIG } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => {}
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            std::process::exit(failure.code);
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut run_config = RunConfig::default();
    if let Some(path) = &cli.config {
        run_config.apply_file(path)?;
    }
    run_config.apply_env();
    for (key, value) in cli.overrides.pairs() {
        run_config.set(key, &value)?;
    }
    run_config.validate()?;

    match cli.command {
        Command::BuildIndex(args) => cmd_build_index(&run_config, &args),
        Command::Query(args) => cmd_query(&run_config, &args),
        Command::Evaluate(args) => cmd_evaluate(&run_config, &args),
        Command::Report(args) => cmd_report(&args),
        Command::Healthcheck(args) => cmd_healthcheck(&run_config, &args),
    }
}

fn cmd_build_index(run_config: &RunConfig, args: &BuildIndexArgs) -> Result<(), Failure> {
    let blob = load_vectors(&args.vectors).map_err(|e| Failure::data(e.to_string()))?;
    let rows = load_gallery_metadata(&args.metadata).map_err(|e| Failure::data(e.to_string()))?;
    let records =
        assemble_gallery(&blob, &rows, args.normalize).map_err(|e| Failure::data(e.to_string()))?;
    let index_config = run_config.index_config(blob.dimension());
    index_config
        .validate()
        .map_err(|e| Failure::config(e.to_string()))?;
    let started = Instant::now();
    let index = Index::build(&records, &index_config).map_err(|e| Failure::data(e.to_string()))?;
    let build_ms = started.elapsed().as_millis();
    index
        .save(&args.out)
        .map_err(|e| Failure::data(e.to_string()))?;
    println!(
        "count={} dimension={} mode={} nlist={} build_ms={}",
        index.count(),
        index.dimension(),
        run_config.mode,
        index.nlist(),
        build_ms
    );
    Ok(())
}

fn template_registry(dir: Option<&Path>) -> Result<TemplateRegistry, Failure> {
    let mut registry = TemplateRegistry::builtin();
    if let Some(dir) = dir {
        registry
            .load_dir(dir)
            .map_err(|e| Failure::data(e.to_string()))?;
    }
    Ok(registry)
}

fn build_client(run_config: &RunConfig, mock: &MockFlags) -> Result<Client, Failure> {
    let model_config = run_config.model_config();
    let client = if let Some(path) = &mock.mock_script {
        let transport = load_mock_script(path)?;
        Client::with_transport(model_config, Box::new(transport))
    } else if mock.mock_echo_nearest {
        Client::with_transport(model_config, Box::new(EchoFirstCoordinateTransport))
    } else {
        Client::new(model_config)
    };
    Ok(client
        .map_err(|e| Failure::config(e.to_string()))?
        .with_api_key(run_config.api_key.clone()))
}

/// Script file shape: either a JSON array of entries, or an object
/// `{"expect_model": "name", "entries": [...]}`. Each entry is one of
/// `{"text": "reply"}`, `{"status": 503, "body": "..."}`, or
/// `{"timeout": true}`, optionally with `delay_ms` and (for text) `model`.
#[derive(Deserialize)]
#[serde(untagged)]
enum MockScriptFile {
    Entries(Vec<MockEntrySpec>),
    Tagged {
        expect_model: Option<String>,
        entries: Vec<MockEntrySpec>,
    },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MockEntrySpec {
    text: Option<String>,
    status: Option<u16>,
    body: Option<String>,
    timeout: Option<bool>,
    delay_ms: Option<u64>,
    model: Option<String>,
}

impl MockEntrySpec {
    fn into_entry(self) -> Result<ScriptEntry, Failure> {
        let entry = if self.timeout == Some(true) {
            ScriptEntry::timeout()
        } else if let Some(text) = &self.text {
            ScriptEntry::assistant_text_for_model(
                text,
                self.model.as_deref().unwrap_or("mock-model"),
            )
        } else if let Some(status) = self.status {
            ScriptEntry::status(status, self.body.as_deref().unwrap_or(""))
        } else {
            return Err(Failure::data(
                "mock script entry needs \"text\", \"status\", or \"timeout\": true".to_string(),
            ));
        };
        Ok(match self.delay_ms {
            Some(ms) => entry.with_delay_ms(ms),
            None => entry,
        })
    }
}

fn load_mock_script(path: &Path) -> Result<ScriptedTransport, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::data(format!("failed to read {}: {e}", path.display())))?;
    let file: MockScriptFile = serde_json::from_str(&text)
        .map_err(|e| Failure::data(format!("invalid mock script {}: {e}", path.display())))?;
    let (expect_model, specs) = match file {
        MockScriptFile::Entries(entries) => (None, entries),
        MockScriptFile::Tagged {
            expect_model,
            entries,
        } => (expect_model, entries),
    };
    if specs.is_empty() {
        return Err(Failure::data(format!(
            "mock script {} has no entries",
            path.display()
        )));
    }
    let entries = specs
        .into_iter()
        .map(MockEntrySpec::into_entry)
        .collect::<Result<Vec<_>, _>>()?;
    Ok(match expect_model {
        Some(model) => ScriptedTransport::expecting_model(&model, entries),
        None => ScriptedTransport::new(entries),
    })
}

fn media_type_for_image(path: &Path) -> &'static str {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .as_deref()
    {
        Some("png") => "image/png",
        Some("webp") => "image/webp",
        Some("gif") => "image/gif",
        Some("bmp") => "image/bmp",
        _ => "image/jpeg",
    }
}

fn cmd_query(run_config: &RunConfig, args: &QueryArgs) -> Result<(), Failure> {
    let index = Index::load(&args.index).map_err(|e| Failure::data(e.to_string()))?;
    let blob = load_vectors(&args.embedding).map_err(|e| Failure::data(e.to_string()))?;
    if args.row >= blob.count() as usize {
        return Err(Failure::data(format!(
            "--row {} out of range; blob has {} rows",
            args.row,
            blob.count()
        )));
    }
    let query = blob
        .embedding(args.row)
        .map_err(|e| Failure::data(e.to_string()))?;

    let (similar, dissimilar) = index
        .search_both(&query, run_config.k_similar, run_config.k_dissimilar)
        .map_err(|e| Failure::data(e.to_string()))?;
    if args.verbose {
        print_neighbors("similar", &similar);
        print_neighbors("dissimilar", &dissimilar);
    }
    let retrieval = RetrievalResult::new(
        similar,
        dissimilar,
        run_config.k_similar,
        run_config.k_dissimilar,
    )
    .map_err(|e| Failure::data(e.to_string()))?;

    let image_bytes = std::fs::read(&args.image)
        .map_err(|e| Failure::data(format!("failed to read {}: {e}", args.image.display())))?;
    let image = ImageAttachment {
        media_type: media_type_for_image(&args.image).to_string(),
        bytes: image_bytes,
        image_id: args.image.display().to_string(),
    };
    let registry = template_registry(args.templates_dir.as_deref())?;
    let bundle = registry
        .build_prompt(image, &retrieval, &run_config.template)
        .map_err(|e| Failure::config(e.to_string()))?;
    if args.show_prompt {
        println!("--- prompt ---");
        println!("{}", bundle.text);
        println!("--- end prompt ---");
    }

    let client = build_client(run_config, &args.mock)?;
    let response = client.complete(&bundle)?;
    println!("model reply:");
    println!("{}", response.raw_text);

    let parsed = parse_coordinates(&response.raw_text);
    match parsed.coord {
        Some(coord) => {
            println!("parsed: ({:.6}, {:.6})", coord.lat(), coord.lon());
            Ok(())
        }
        None => Err(Failure::parse_miss(
            "no coordinate found in the model reply".to_string(),
        )),
    }
}

fn print_neighbors(label: &str, neighbors: &[georag::Neighbor]) {
    println!("{label}:");
    for (rank, n) in neighbors.iter().enumerate() {
        println!(
            "  {:>2}. id={} lat={:.6} lon={:.6} distance={:.6}",
            rank + 1,
            n.id,
            n.coord.lat(),
            n.coord.lon(),
            n.distance
        );
    }
}

fn parse_format_list(list: &str) -> Result<Vec<ReportFormat>, Failure> {
    let mut formats = Vec::new();
    for part in list.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let format: ReportFormat = part.parse().map_err(Failure::config)?;
        if !formats.contains(&format) {
            formats.push(format);
        }
    }
    if formats.is_empty() {
        return Err(Failure::config("--format list is empty".to_string()));
    }
    Ok(formats)
}

fn cmd_evaluate(run_config: &RunConfig, args: &EvaluateArgs) -> Result<(), Failure> {
    let formats = parse_format_list(&args.format)?;
    let manifest = load_benchmark_manifest(&args.manifest).map_err(|e| Failure::data(e.to_string()))?;
    let index = Index::load(&args.index).map_err(|e| Failure::data(e.to_string()))?;
    let queries = load_vectors(&args.embeddings).map_err(|e| Failure::data(e.to_string()))?;
    let registry = template_registry(args.templates_dir.as_deref())?;
    let client = build_client(run_config, &args.mock)?;

    let mut eval_config = run_config.eval_config();
    eval_config.timestamp_unix_ms = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .ok()
        .map(|d| d.as_millis() as u64);

    let run = evaluate_dataset(&manifest, &queries, &index, &registry, &client, &eval_config)
        .map_err(|e| match e {
            EvalError::UnknownTemplate(_) | EvalError::ZeroK | EvalError::ZeroConcurrency => {
                Failure::config(e.to_string())
            }
            _ => Failure::data(e.to_string()),
        })?;

    std::fs::create_dir_all(&args.out_dir)
        .map_err(|e| Failure::data(format!("failed to create {}: {e}", args.out_dir.display())))?;
    let outcomes_path = args.out_dir.join("outcomes.jsonl");
    write_outcomes_jsonl(&outcomes_path, &run.outcomes)
        .map_err(|e| Failure::data(e.to_string()))?;
    for format in &formats {
        let path = args.out_dir.join(format!("report.{}", format.extension()));
        std::fs::write(&path, render_report(&run.report, *format))
            .map_err(|e| Failure::data(format!("failed to write {}: {e}", path.display())))?;
    }

    print!("{}", render_report(&run.report, ReportFormat::Markdown));
    println!("outcomes: {}", outcomes_path.display());
    Ok(())
}

fn cmd_report(args: &ReportArgs) -> Result<(), Failure> {
    let format: ReportFormat = args.format.parse().map_err(Failure::config)?;
    let text = std::fs::read_to_string(&args.input)
        .map_err(|e| Failure::data(format!("failed to read {}: {e}", args.input.display())))?;
    let report: AccuracyReport = serde_json::from_str(&text)
        .map_err(|e| Failure::data(format!("invalid report {}: {e}", args.input.display())))?;
    print!("{}", render_report(&report, format));
    Ok(())
}

fn cmd_healthcheck(run_config: &RunConfig, args: &HealthcheckArgs) -> Result<(), Failure> {
    let client = build_client(run_config, &args.mock)?;
    let report = client.healthcheck()?;
    println!(
        "ok model={} latency_ms={} attempts={}",
        report.model.as_deref().unwrap_or("unknown"),
        report.latency_ms,
        report.attempt_count
    );
    Ok(())
}
