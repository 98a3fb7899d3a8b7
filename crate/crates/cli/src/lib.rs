//! The `citesum` command line. `main` only forwards to [`run`], so tests can
//! drive every subcommand in-process.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use citesum::agreement::{correlation_study, iaa_report};
use citesum::corpus::{self, JUDGMENTS_SCHEMA, SUMMARIZER_TRAIN_SCHEMA, TRACKER_TRAIN_SCHEMA};
use citesum::gateway::{BackendRef, DemoBank, Gateway, GatewayConfig, Judgment, JudgmentCache};
use citesum::metrics::{
    evaluate_run, load_report, render_aspect_table, render_method_table, render_report, write_report, Aggregation,
    EvaluationReport,
};
use citesum::pipelines::{self, PipelineBackends, PipelineConfig, PipelineKind, DEFAULT_THRESHOLD};
use citesum::segmenter::SEGMENTER_VERSION;
use citesum::Dataset;
use citesum_annotation::http::ApiConfig;
use citesum_annotation::{score_pairs, AnnotationService, RatingRecord, StoreKind};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

#[derive(Debug, Parser)]
#[command(
    name = "citesum",
    version,
    about = "Aspect-based summaries with sentence citations: run, score, annotate"
)]
pub struct Cli {
    /// Worker threads for generation and evaluation (0 = one per core).
    #[arg(long, global = true, default_value_t = 0, env = "CITESUM_JOBS")]
    pub jobs: usize,
    /// Print one machine-readable JSON object instead of text.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a dataset file against the schema and its article file.
    Validate { dataset: PathBuf },
    /// Split a dataset into train and test by article.
    Split(SplitArgs),
    /// Corpus statistics per aspect.
    Stats { dataset: PathBuf },
    /// Write tracker and summarizer training sets.
    ExportTraining(ExportArgs),
    /// Run a summarization pipeline over a dataset.
    Generate(GenerateArgs),
    /// Score a pipeline run against the references.
    Evaluate(EvaluateArgs),
    /// Render one or more evaluation reports as tables.
    Report(ReportArgs),
    /// Inter-annotator agreement and judge correlation.
    Agree(AgreeArgs),
    /// Run the annotation service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    pub dataset: PathBuf,
    /// Share of articles going to the training side.
    #[arg(long, default_value_t = 0.8)]
    pub ratio: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory for train.jsonl and test.jsonl.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Attach the full article text to summarizer records.
    #[arg(long)]
    pub full_context: bool,
}

#[derive(Debug, Args)]
pub struct BackendArgs {
    /// Backend configuration (TOML). Without it a single mock backend named `mock` is used.
    #[arg(long, env = "CITESUM_BACKENDS")]
    pub backends: Option<PathBuf>,
}

impl BackendArgs {
    fn gateway(&self) -> Result<Gateway> {
        match &self.backends {
            Some(path) => {
                let config = GatewayConfig::load(path)?;
                Ok(Gateway::from_config(&config)?)
            }
            None => Ok(Gateway::with_default_mock()),
        }
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[command(flatten)]
    pub backends: BackendArgs,
    #[arg(long, value_parser = parse_pipeline)]
    pub pipeline: PipelineKind,
    /// Backend for every role, unless a role is given explicitly.
    #[arg(long, default_value = "mock")]
    pub backend: String,
    #[arg(long)]
    pub tracker: Option<String>,
    #[arg(long)]
    pub summarizer: Option<String>,
    #[arg(long)]
    pub generator: Option<String>,
    /// Sentences scoring strictly above this are selected.
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Demonstration pairs per aspect (few-shot only).
    #[arg(long)]
    pub demos: Option<PathBuf>,
    /// Run directory to create.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Run directory or run file.
    #[arg(long)]
    pub run: PathBuf,
    #[command(flatten)]
    pub backends: BackendArgs,
    /// Entailment judge backend.
    #[arg(long, default_value = "mock")]
    pub judge: String,
    /// Claim decomposition backend; defaults to the judge.
    #[arg(long)]
    pub decomposer: Option<String>,
    /// Use recorded human judgments instead of the judge backend.
    #[arg(long)]
    pub judgments: Option<PathBuf>,
    #[arg(long, default_value = "macro")]
    pub aggregation: Aggregation,
    /// Judgment cache file, read before and written after scoring.
    #[arg(long)]
    pub cache: Option<PathBuf>,
    /// Report file; defaults to `evaluation.json` in the run directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(required = true)]
    pub reports: Vec<PathBuf>,
    #[arg(long, default_value = "macro")]
    pub aggregation: Aggregation,
}

#[derive(Debug, Args)]
pub struct AgreeArgs {
    /// Rating records exported from the annotation service (JSON array or JSONL).
    #[arg(long)]
    pub ratings: Option<PathBuf>,
    /// Evaluation report from the automatic judge.
    #[arg(long, requires = "human")]
    pub auto: Option<PathBuf>,
    /// Evaluation report from human judgments.
    #[arg(long, requires = "auto")]
    pub human: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// `memory`, `file:<path>` or `sqlite:<path>`.
    #[arg(long, default_value = "file:annotations.jsonl", env = "CITESUM_STORE")]
    pub store: String,
    #[arg(long, default_value = "127.0.0.1:8080", env = "CITESUM_ADDR")]
    pub addr: SocketAddr,
    #[arg(long, env = "CITESUM_ADMIN_TOKEN", hide_env_values = true)]
    pub admin_token: String,
    /// Directory of static frontend assets served at `/`.
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
    /// Where the admin export endpoint writes the revised dataset.
    #[arg(long)]
    pub export_path: Option<PathBuf>,
}

fn parse_pipeline(s: &str) -> Result<PipelineKind, String> {
    s.parse()
}

/// Parses `args` (including the program name) and runs the command.
///
/// Returns the process exit status: 0 on success, 1 for data or runtime
/// errors, 2 for usage errors.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(output) => {
            let mut stdout = std::io::stdout().lock();
            let text = if cli.json {
                serde_json::to_string_pretty(&output.json).expect("serializable") + "\n"
            } else {
                output.text
            };
            let _ = stdout.write_all(text.as_bytes());
            0
        }
        Err(e) => {
            if cli.json {
                println!("{}", json!({ "error": format!("{e:#}") }));
            } else {
                eprintln!("error: {e:#}");
            }
            1
        }
    }
}

/// What a command prints, in both output modes.
pub struct Output {
    pub text: String,
    pub json: Value,
}

pub fn execute(cli: &Cli) -> Result<Output> {
    match &cli.command {
        Command::Validate { dataset } => validate(dataset),
        Command::Split(a) => split(a),
        Command::Stats { dataset } => stats(dataset),
        Command::ExportTraining(a) => export_training(a),
        Command::Generate(a) => generate(a, cli.jobs),
        Command::Evaluate(a) => evaluate(a, cli.jobs),
        Command::Report(a) => report(a),
        Command::Agree(a) => agree(a),
        Command::Serve(a) => serve(a),
    }
}

fn load_dataset(path: &Path) -> Result<Dataset> {
    Dataset::load(path).with_context(|| format!("loading dataset {}", path.display()))
}

fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Replay record for commands that write artifacts.
#[derive(Serialize)]
struct CommandManifest {
    tool: &'static str,
    tool_version: &'static str,
    command: &'static str,
    config: Value,
    segmenter: &'static str,
    /// Input path to sha256 of its contents.
    inputs: BTreeMap<String, String>,
    /// Output path to sha256 of its contents.
    outputs: BTreeMap<String, String>,
}

impl CommandManifest {
    fn new(command: &'static str, config: Value) -> Self {
        CommandManifest {
            tool: "citesum",
            tool_version: env!("CARGO_PKG_VERSION"),
            command,
            config,
            segmenter: SEGMENTER_VERSION,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    fn input(mut self, path: &Path) -> Result<Self> {
        self.inputs.insert(path.display().to_string(), file_sha256(path)?);
        Ok(self)
    }

    fn dataset_input(self, path: &Path) -> Result<Self> {
        let articles = corpus::articles_path_for(path);
        let s = self.input(path)?;
        if articles.exists() {
            s.input(&articles)
        } else {
            Ok(s)
        }
    }

    fn output(mut self, path: &Path) -> Result<Self> {
        self.outputs.insert(file_name(path), file_sha256(path)?);
        Ok(self)
    }

    fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("serializable") + "\n";
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
    }
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn validate(path: &Path) -> Result<Output> {
    let ds = load_dataset(path)?;
    let negatives = ds.instances().iter().filter(|i| i.reference.is_negative()).count();
    Ok(Output {
        text: format!(
            "{}: ok ({} articles, {} instances, {} negative)\n",
            path.display(),
            ds.articles().len(),
            ds.instances().len(),
            negatives
        ),
        json: json!({
            "valid": true,
            "articles": ds.articles().len(),
            "instances": ds.instances().len(),
            "negative": negatives,
            "dataset_hash": ds.content_hash(),
        }),
    })
}

fn split(a: &SplitArgs) -> Result<Output> {
    let ds = load_dataset(&a.dataset)?;
    let (train, test) = ds.split(a.ratio, a.seed)?;
    create_dir(&a.out)?;
    let train_path = a.out.join("train.jsonl");
    let test_path = a.out.join("test.jsonl");
    train.save(&train_path)?;
    test.save(&test_path)?;
    CommandManifest::new("split", json!({ "ratio": a.ratio, "seed": a.seed }))
        .dataset_input(&a.dataset)?
        .output(&train_path)?
        .output(&test_path)?
        .write(&a.out.join("split.manifest.json"))?;
    Ok(Output {
        text: format!(
            "train: {} instances -> {}\ntest:  {} instances -> {}\n",
            train.instances().len(),
            train_path.display(),
            test.instances().len(),
            test_path.display()
        ),
        json: json!({
            "train": { "path": train_path, "instances": train.instances().len() },
            "test": { "path": test_path, "instances": test.instances().len() },
        }),
    })
}

fn stats(path: &Path) -> Result<Output> {
    let ds = load_dataset(path)?;
    let stats = corpus::compute_stats(ds.articles(), ds.instances());
    Ok(Output {
        text: stats.render(),
        json: serde_json::to_value(&stats)?,
    })
}

fn export_training(a: &ExportArgs) -> Result<Output> {
    let ds = load_dataset(&a.dataset)?;
    let tracker = corpus::build_tracker_training_set(ds.articles(), ds.instances());
    let summarizer = corpus::build_summarizer_training_set(ds.articles(), ds.instances(), a.full_context);
    create_dir(&a.out)?;
    let tracker_path = a.out.join("tracker.jsonl");
    let summarizer_path = a.out.join("summarizer.jsonl");
    corpus::write_export(&tracker_path, TRACKER_TRAIN_SCHEMA, &tracker)?;
    corpus::write_export(&summarizer_path, SUMMARIZER_TRAIN_SCHEMA, &summarizer)?;
    CommandManifest::new("export-training", json!({ "full_context": a.full_context }))
        .dataset_input(&a.dataset)?
        .output(&tracker_path)?
        .output(&summarizer_path)?
        .write(&a.out.join("export.manifest.json"))?;
    Ok(Output {
        text: format!(
            "tracker pairs:      {} -> {}\nsummarizer records: {} -> {}\n",
            tracker.len(),
            tracker_path.display(),
            summarizer.len(),
            summarizer_path.display()
        ),
        json: json!({ "tracker": tracker.len(), "summarizer": summarizer.len() }),
    })
}

fn generate(a: &GenerateArgs, jobs: usize) -> Result<Output> {
    let ds = load_dataset(&a.dataset)?;
    let gateway = a.backends.gateway()?;
    let demos = a.demos.as_deref().map(DemoBank::load).transpose()?;
    let base = PipelineConfig::new(a.pipeline, &a.backend).backends;
    let pick = |explicit: &Option<String>, default: Option<String>| explicit.clone().or(default);
    let config = PipelineConfig {
        kind: a.pipeline,
        threshold: a.threshold,
        backends: PipelineBackends {
            tracker: pick(&a.tracker, base.tracker),
            summarizer: pick(&a.summarizer, base.summarizer),
            generator: pick(&a.generator, base.generator),
        },
        seed: a.seed,
        jobs,
    };
    let output = pipelines::run_pipeline(&ds, &gateway, &config, demos.as_ref())?;
    create_dir(&a.out)?;
    pipelines::write_run(&a.out, &output)?;
    let ledger = gateway.ledger();
    let costs_path = a.out.join("costs.json");
    let costs = json!({ "entries": ledger.entries(), "totals": ledger.totals() });
    std::fs::write(&costs_path, serde_json::to_string_pretty(&costs)? + "\n")?;
    let m = &output.manifest;
    Ok(Output {
        text: format!(
            "{} over {} instances ({} failed), threshold {} -> {}\n\n{}",
            a.pipeline.label(),
            m.instance_count,
            m.failed_count,
            m.threshold,
            a.out.display(),
            ledger.render()
        ),
        json: json!({ "manifest": m, "costs": costs }),
    })
}

fn load_judgments(path: &Path) -> Result<Vec<Judgment>> {
    Ok(corpus::load_export(path, JUDGMENTS_SCHEMA)?)
}

fn evaluate(a: &EvaluateArgs, jobs: usize) -> Result<Output> {
    let ds = load_dataset(&a.dataset)?;
    let (manifest, runs) = pipelines::load_run(&a.run)?;
    if let Some(m) = &manifest {
        if m.dataset_hash != ds.content_hash() {
            bail!(
                "run {} was generated from a different dataset (hash {} vs {})",
                a.run.display(),
                m.dataset_hash,
                ds.content_hash()
            );
        }
    }
    let mut gateway = a.backends.gateway()?;
    if let Some(cache) = &a.cache {
        gateway = gateway.with_cache(JudgmentCache::load(cache)?);
    }
    let decomposer_name = a.decomposer.as_deref().unwrap_or(&a.judge);
    let decomposer = BackendRef::new(&gateway, decomposer_name)?;
    let human = a
        .judgments
        .as_deref()
        .map(|p| load_judgments(p).map(|j| citesum_annotation::judge_from(&j)))
        .transpose()?;
    let backend_judge;
    let (judge, judge_name): (&dyn citesum::gateway::EntailmentJudge, &str) = match &human {
        Some(h) => (h, citesum_annotation::HUMAN_JUDGE),
        None => {
            backend_judge = BackendRef::new(&gateway, &a.judge)?;
            (&backend_judge, a.judge.as_str())
        }
    };
    let instances = evaluate_run(&ds, &runs, judge, &decomposer, jobs)?;
    let report = EvaluationReport::new(
        manifest.as_ref().map(|m| m.pipeline),
        judge_name,
        decomposer_name,
        a.aggregation,
        &ds,
        instances,
    );
    let run_dir = if a.run.is_dir() {
        a.run.clone()
    } else {
        a.run.parent().unwrap_or(Path::new(".")).to_path_buf()
    };
    let out = a.out.clone().unwrap_or_else(|| run_dir.join("evaluation.json"));
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_report(&out, &report)?;
    if let Some(cache) = &a.cache {
        gateway.cache().save(cache)?;
    }
    let run_file = if a.run.is_dir() {
        a.run.join(pipelines::RUN_FILE)
    } else {
        a.run.clone()
    };
    let mut manifest_out = CommandManifest::new(
        "evaluate",
        json!({
            "judge": judge_name,
            "decomposer": decomposer_name,
            "aggregation": a.aggregation,
            "backend_specs": gateway
                .backend_names()
                .iter()
                .filter_map(|n| gateway.spec(n).map(|s| (n.clone(), serde_json::to_value(s).expect("serializable"))))
                .collect::<BTreeMap<_, _>>(),
        }),
    )
    .dataset_input(&a.dataset)?
    .input(&run_file)?;
    if let Some(j) = &a.judgments {
        manifest_out = manifest_out.input(j)?;
    }
    manifest_out.output(&out)?.write(&out.with_extension("manifest.json"))?;
    let summary = report.summary(a.aggregation)?;
    Ok(Output {
        text: format!(
            "{}\nreport written to {}\n\n{}",
            render_report(&report, a.aggregation)?,
            out.display(),
            gateway.ledger().render()
        ),
        json: json!({ "report": out, "summary": summary, "flags": report.flag_counts().into_iter().map(|(f, n)| (serde_json::to_value(f).expect("serializable").as_str().unwrap_or_default().to_string(), n)).collect::<BTreeMap<_, _>>() }),
    })
}

fn report(a: &ReportArgs) -> Result<Output> {
    let mut loaded = Vec::new();
    for path in &a.reports {
        let r = load_report(path).with_context(|| format!("loading report {}", path.display()))?;
        let label = r
            .pipeline
            .map(|p| p.label().to_string())
            .unwrap_or_else(|| file_name(path));
        let summary = r.summary(a.aggregation)?;
        loaded.push((label, r, summary));
    }
    let rows: Vec<(String, &citesum::metrics::MetricRow)> =
        loaded.iter().map(|(l, _, s)| (l.clone(), &s.overall)).collect();
    let mut text = render_method_table(&rows);
    for (label, r, s) in &loaded {
        text.push_str(&format!(
            "\n{label} (judge: {}, {} instances)\n",
            r.judge, s.instance_count
        ));
        text.push_str(&render_aspect_table(s));
    }
    Ok(Output {
        text,
        json: json!(loaded
            .iter()
            .map(|(l, r, s)| json!({ "label": l, "judge": r.judge, "summary": s }))
            .collect::<Vec<_>>()),
    })
}

fn load_ratings(path: &Path) -> Result<Vec<RatingRecord>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if text.trim_start().starts_with('[') {
        return serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()));
    }
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("{}:{}", path.display(), i + 1)))
        .collect()
}

fn agree(a: &AgreeArgs) -> Result<Output> {
    if a.ratings.is_none() && a.auto.is_none() {
        bail!("nothing to compare: pass --ratings and/or --auto with --human");
    }
    let mut text = String::new();
    let mut out = serde_json::Map::new();
    if let Some(path) = &a.ratings {
        let pairs = score_pairs(&load_ratings(path)?);
        let iaa = iaa_report(&pairs)?;
        text.push_str("Inter-annotator agreement\n");
        text.push_str(&format!("  {:<13} {}\n", "pooled", iaa.pooled.render()));
        for (metric, s) in &iaa.per_metric {
            text.push_str(&format!("  {:<13} {}\n", metric.name(), s.render()));
        }
        out.insert("iaa".into(), serde_json::to_value(&iaa)?);
    }
    if let (Some(auto), Some(human)) = (&a.auto, &a.human) {
        let study = correlation_study(&load_report(auto)?, &load_report(human)?)?;
        if !text.is_empty() {
            text.push('\n');
        }
        text.push_str("Correlation with human judgments\n");
        text.push_str(&study.render());
        out.insert("correlation".into(), serde_json::to_value(&study)?);
    }
    Ok(Output {
        text,
        json: Value::Object(out),
    })
}

fn serve(a: &ServeArgs) -> Result<Output> {
    let ds = load_dataset(&a.dataset)?;
    let store = StoreKind::parse(&a.store).open()?;
    let service = AnnotationService::open(ds, store)?;
    let config = ApiConfig {
        admin_token: a.admin_token.clone(),
        static_dir: a.static_dir.clone(),
        export_path: a.export_path.clone(),
    };
    eprintln!("annotation service listening on http://{}", a.addr);
    tokio::runtime::Runtime::new()?.block_on(citesum_annotation::http::serve(service, config, a.addr))?;
    Ok(Output {
        text: String::new(),
        json: json!({ "stopped": true }),
    })
}
