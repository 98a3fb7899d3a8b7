//! Inference pipelines producing traceable summaries for `(article, aspect)` pairs.
//!
//! - track-then-summarize (TTS): a tracker picks sentences scoring above the
//!   threshold, a summarizer condenses them; citations are exactly the picked
//!   sentences. The `TtsFull` variant also hands the summarizer the whole
//!   article as background.
//! - summarize-then-track (STT): summarize the article first, then cite the
//!   sentences scoring above the threshold against that summary.
//! - end-to-end (ETE): one model call that emits summary and citations.
//! - few-shot: like ETE but with one positive and one negative demonstration.
//!
//! "Above the threshold" is strict: a score equal to the threshold is not selected.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aspect::AspectCode;
use crate::corpus::{self, Article, CorpusError, Dataset, TraceableSummary};
use crate::gateway::parse::{parse_generation, ParseFlag};
use crate::gateway::prompt::{render_ete_prompt, render_generation_prompt, DemoBank, DemoPair};
use crate::gateway::{BackendRef, Gateway, GatewayError, Generator, RelevanceTracker, Summarizer};
use crate::segmenter::SEGMENTER_VERSION;

pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const RUN_SCHEMA: &str = "citesum/run";
pub const RUN_FILE: &str = "runs.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const TIMINGS_FILE: &str = "timings.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PipelineKind {
    Tts,
    TtsFull,
    Stt,
    Ete,
    FewShot,
}

impl PipelineKind {
    pub const ALL: [PipelineKind; 5] = [
        PipelineKind::Tts,
        PipelineKind::TtsFull,
        PipelineKind::Stt,
        PipelineKind::Ete,
        PipelineKind::FewShot,
    ];

    pub fn id(self) -> &'static str {
        match self {
            PipelineKind::Tts => "tts",
            PipelineKind::TtsFull => "tts-full",
            PipelineKind::Stt => "stt",
            PipelineKind::Ete => "ete",
            PipelineKind::FewShot => "few-shot",
        }
    }

    /// Row label used in report tables.
    pub fn label(self) -> &'static str {
        match self {
            PipelineKind::Tts => "TTS",
            PipelineKind::TtsFull => "TTS + f.",
            PipelineKind::Stt => "STT",
            PipelineKind::Ete => "ETE",
            PipelineKind::FewShot => "Few-shot",
        }
    }

    pub fn uses_tracker(self) -> bool {
        matches!(self, PipelineKind::Tts | PipelineKind::TtsFull | PipelineKind::Stt)
    }
}

impl fmt::Display for PipelineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for PipelineKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        match norm.as_str() {
            "tts" => Ok(PipelineKind::Tts),
            "tts-full" | "tts+f" | "ttsf" => Ok(PipelineKind::TtsFull),
            "stt" => Ok(PipelineKind::Stt),
            "ete" | "end-to-end" => Ok(PipelineKind::Ete),
            "few-shot" | "fewshot" => Ok(PipelineKind::FewShot),
            _ => Err(format!(
                "unknown pipeline `{s}` (expected one of tts, tts-full, stt, ete, few-shot)"
            )),
        }
    }
}

/// Recoverable oddities recorded on a run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RunFlag {
    /// TTS: sentences were selected but the summarizer answered "Unknown".
    SummarizerDeclined,
    /// STT: a summary was produced but no sentence scored above the threshold.
    NoCitationsSelected,
    Parse {
        flag: ParseFlag,
    },
    /// The pipeline failed; the run is scored as a negative output.
    Failed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub output: TraceableSummary,
    pub flags: Vec<RunFlag>,
    /// Tracker scores per sentence, when a tracker was used.
    pub scores: Option<Vec<f64>>,
    /// Raw model text, for single-call pipelines.
    pub raw: Option<String>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("unparseable model output: {message}")]
    Parse { message: String, raw: String },
    #[error("tracker score {score} for sentence {index} is outside [0, 1]")]
    BadScore { index: usize, score: f64 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Corpus(#[from] CorpusErrorMessage),
}

/// `CorpusError` wraps `io::Error` and is not `Clone`; keep its message.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{0}")]
pub struct CorpusErrorMessage(pub String);

impl From<CorpusError> for PipelineError {
    fn from(e: CorpusError) -> Self {
        PipelineError::Corpus(CorpusErrorMessage(e.to_string()))
    }
}

impl PipelineError {
    pub fn raw_text(&self) -> Option<&str> {
        match self {
            PipelineError::Parse { raw, .. } => Some(raw),
            _ => None,
        }
    }
}

/// Indices whose score against `query` is strictly above `threshold`, plus every score.
pub fn select_sentences(
    query: &str,
    sentences: &[String],
    tracker: &dyn RelevanceTracker,
    threshold: f64,
) -> Result<(BTreeSet<usize>, Vec<f64>), PipelineError> {
    let mut selected = BTreeSet::new();
    let mut scores = Vec::with_capacity(sentences.len());
    for (i, s) in sentences.iter().enumerate() {
        let score = tracker.score(query, s)?;
        if !(0.0..=1.0).contains(&score) {
            return Err(PipelineError::BadScore { index: i, score });
        }
        if score > threshold {
            selected.insert(i);
        }
        scores.push(score);
    }
    Ok((selected, scores))
}

pub fn run_tts(
    article: &Article,
    aspect: AspectCode,
    tracker: &dyn RelevanceTracker,
    summarizer: &dyn Summarizer,
    threshold: f64,
    with_full_context: bool,
) -> Result<PipelineOutput, PipelineError> {
    let (selected, scores) = select_sentences(&aspect.tracker_query(), &article.sentences, tracker, threshold)?;
    if selected.is_empty() {
        return Ok(PipelineOutput {
            output: TraceableSummary::Negative,
            flags: vec![],
            scores: Some(scores),
            raw: None,
        });
    }
    let sources: Vec<String> = selected.iter().map(|&i| article.sentences[i].clone()).collect();
    let context = with_full_context.then_some(article.raw_text.as_str());
    let (output, flags) = match summarizer.summarize(aspect, &sources, context)? {
        Some(summary) => (
            TraceableSummary::Positive {
                summary,
                citations: selected,
            },
            vec![],
        ),
        None => (TraceableSummary::Negative, vec![RunFlag::SummarizerDeclined]),
    };
    Ok(PipelineOutput {
        output,
        flags,
        scores: Some(scores),
        raw: None,
    })
}

pub fn run_stt(
    article: &Article,
    aspect: AspectCode,
    summarizer: &dyn Summarizer,
    tracker: &dyn RelevanceTracker,
    threshold: f64,
) -> Result<PipelineOutput, PipelineError> {
    let Some(summary) = summarizer.summarize_article(aspect, article)? else {
        return Ok(PipelineOutput {
            output: TraceableSummary::Negative,
            flags: vec![],
            scores: None,
            raw: None,
        });
    };
    let (citations, scores) = select_sentences(&summary, &article.sentences, tracker, threshold)?;
    let flags = if citations.is_empty() {
        vec![RunFlag::NoCitationsSelected]
    } else {
        vec![]
    };
    Ok(PipelineOutput {
        output: TraceableSummary::Positive { summary, citations },
        flags,
        scores: Some(scores),
        raw: None,
    })
}

fn parse_single_call(text: String, article: &Article) -> Result<PipelineOutput, PipelineError> {
    match parse_generation(&text, article.sentence_count()) {
        Ok(parsed) => Ok(PipelineOutput {
            output: parsed.summary,
            flags: parsed.flags.into_iter().map(|flag| RunFlag::Parse { flag }).collect(),
            scores: None,
            raw: Some(text),
        }),
        Err(e) => Err(PipelineError::Parse {
            message: e.to_string(),
            raw: text,
        }),
    }
}

pub fn run_ete(article: &Article, aspect: AspectCode, model: &dyn Generator) -> Result<PipelineOutput, PipelineError> {
    let text = model.generate(&render_ete_prompt(article, aspect))?;
    parse_single_call(text, article)
}

pub fn run_fewshot(
    article: &Article,
    aspect: AspectCode,
    model: &dyn Generator,
    demos: &DemoPair,
) -> Result<PipelineOutput, PipelineError> {
    let text = model.generate(&render_generation_prompt(article, aspect, demos))?;
    parse_single_call(text, article)
}

/// One line of a run file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineRun {
    pub pipeline: PipelineKind,
    pub pmid: String,
    pub aspect: AspectCode,
    #[serde(flatten)]
    pub output: TraceableSummary,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<RunFlag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl PipelineRun {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

/// Wall-clock timing, kept out of the run file so run files stay reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTiming {
    pub pmid: String,
    pub aspect: AspectCode,
    pub millis: u64,
}

/// Backend names per role.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PipelineBackends {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tracker: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summarizer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub kind: PipelineKind,
    pub threshold: f64,
    pub backends: PipelineBackends,
    pub seed: u64,
    /// Worker threads; 0 means one per core.
    pub jobs: usize,
}

impl PipelineConfig {
    /// Every role served by the same backend.
    pub fn new(kind: PipelineKind, backend: &str) -> Self {
        let name = Some(backend.to_string());
        let backends = match kind {
            PipelineKind::Tts | PipelineKind::TtsFull | PipelineKind::Stt => PipelineBackends {
                tracker: name.clone(),
                summarizer: name,
                generator: None,
            },
            PipelineKind::Ete | PipelineKind::FewShot => PipelineBackends {
                generator: name,
                ..Default::default()
            },
        };
        PipelineConfig {
            kind,
            threshold: DEFAULT_THRESHOLD,
            backends,
            seed: 0,
            jobs: 0,
        }
    }

    fn validate(&self) -> Result<(), PipelineError> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(PipelineError::Config(format!(
                "threshold {} outside [0, 1]",
                self.threshold
            )));
        }
        let need = |role: &str, v: &Option<String>| {
            v.as_ref()
                .map(|_| ())
                .ok_or_else(|| PipelineError::Config(format!("pipeline {} needs a {role} backend", self.kind)))
        };
        if self.kind.uses_tracker() {
            need("tracker", &self.backends.tracker)?;
            need("summarizer", &self.backends.summarizer)?;
        } else {
            need("generator", &self.backends.generator)?;
        }
        Ok(())
    }
}

/// Everything needed to replay a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: String,
    pub version: u32,
    pub pipeline: PipelineKind,
    pub backends: PipelineBackends,
    /// Backend configuration as resolved at run time (credentials excluded).
    pub backend_specs: BTreeMap<String, serde_json::Value>,
    pub threshold: f64,
    pub seed: u64,
    pub dataset_hash: String,
    pub segmenter: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demos_hash: Option<String>,
    pub instance_count: usize,
    pub failed_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub manifest: RunManifest,
    pub runs: Vec<PipelineRun>,
    pub timings: Vec<RunTiming>,
}

fn bind<'a>(gateway: &'a Gateway, name: &'a Option<String>) -> Result<Option<BackendRef<'a>>, PipelineError> {
    Ok(name.as_deref().map(|n| BackendRef::new(gateway, n)).transpose()?)
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool, PipelineError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| PipelineError::Config(e.to_string()))
}

/// Runs `config.kind` over every instance of `dataset`. Per-instance failures
/// are recorded in the run (flag `failed`, negative output) rather than aborting.
pub fn run_pipeline(
    dataset: &Dataset,
    gateway: &Gateway,
    config: &PipelineConfig,
    demos: Option<&DemoBank>,
) -> Result<RunOutput, PipelineError> {
    config.validate()?;
    let tracker = bind(gateway, &config.backends.tracker)?;
    let summarizer = bind(gateway, &config.backends.summarizer)?;
    let generator = bind(gateway, &config.backends.generator)?;
    if config.kind == PipelineKind::FewShot {
        let bank = demos.ok_or_else(|| PipelineError::Config("few-shot needs demonstrations".into()))?;
        for inst in dataset.instances() {
            bank.get(inst.aspect)?;
        }
    }

    let mut jobs: Vec<(&Article, AspectCode)> = dataset
        .instances()
        .iter()
        .map(|i| (dataset.article(&i.pmid).expect("validated dataset"), i.aspect))
        .collect();
    jobs.sort_by(|a, b| (&a.0.pmid, a.1).cmp(&(&b.0.pmid, b.1)));

    let run_one = |article: &Article, aspect: AspectCode| -> Result<PipelineOutput, PipelineError> {
        match config.kind {
            PipelineKind::Tts | PipelineKind::TtsFull => run_tts(
                article,
                aspect,
                tracker.as_ref().expect("validated"),
                summarizer.as_ref().expect("validated"),
                config.threshold,
                config.kind == PipelineKind::TtsFull,
            ),
            PipelineKind::Stt => run_stt(
                article,
                aspect,
                summarizer.as_ref().expect("validated"),
                tracker.as_ref().expect("validated"),
                config.threshold,
            ),
            PipelineKind::Ete => run_ete(article, aspect, generator.as_ref().expect("validated")),
            PipelineKind::FewShot => run_fewshot(
                article,
                aspect,
                generator.as_ref().expect("validated"),
                demos.expect("validated").get(aspect)?,
            ),
        }
    };

    let results: Vec<(PipelineRun, RunTiming)> = pool(config.jobs)?.install(|| {
        jobs.par_iter()
            .map(|&(article, aspect)| {
                let started = Instant::now();
                let result = run_one(article, aspect);
                let timing = RunTiming {
                    pmid: article.pmid.clone(),
                    aspect,
                    millis: started.elapsed().as_millis() as u64,
                };
                let run = match result {
                    Ok(out) => PipelineRun {
                        pipeline: config.kind,
                        pmid: article.pmid.clone(),
                        aspect,
                        output: out.output,
                        flags: out.flags,
                        scores: out.scores,
                        raw: out.raw,
                        error: None,
                    },
                    Err(e) => PipelineRun {
                        pipeline: config.kind,
                        pmid: article.pmid.clone(),
                        aspect,
                        output: TraceableSummary::Negative,
                        flags: vec![RunFlag::Failed],
                        scores: None,
                        raw: e.raw_text().map(str::to_string),
                        error: Some(e.to_string()),
                    },
                };
                (run, timing)
            })
            .collect()
    });
    let (runs, timings): (Vec<_>, Vec<_>) = results.into_iter().unzip();

    let mut backend_specs = BTreeMap::new();
    for name in [
        &config.backends.tracker,
        &config.backends.summarizer,
        &config.backends.generator,
    ]
    .into_iter()
    .flatten()
    {
        if let Some(spec) = gateway.spec(name) {
            backend_specs.insert(name.clone(), serde_json::to_value(spec).expect("serializable spec"));
        }
    }
    let manifest = RunManifest {
        schema: RUN_SCHEMA.to_string(),
        version: corpus::SCHEMA_VERSION,
        pipeline: config.kind,
        backends: config.backends.clone(),
        backend_specs,
        threshold: config.threshold,
        seed: config.seed,
        dataset_hash: dataset.content_hash(),
        segmenter: SEGMENTER_VERSION.to_string(),
        demos_hash: match (config.kind, demos) {
            (PipelineKind::FewShot, Some(bank)) => Some(hash_json(bank)),
            _ => None,
        },
        instance_count: runs.len(),
        failed_count: runs.iter().filter(|r| r.failed()).count(),
    };
    Ok(RunOutput {
        manifest,
        runs,
        timings,
    })
}

fn hash_json<T: Serialize>(value: &T) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(serde_json::to_vec(value).expect("serializable")))
}

pub fn runs_jsonl(runs: &[PipelineRun]) -> String {
    runs.iter().map(corpus::json_line).collect()
}

/// Writes `manifest.json`, `runs.jsonl` and `timings.jsonl` into `dir`.
pub fn write_run(dir: &Path, output: &RunOutput) -> Result<(), CorpusError> {
    let manifest = serde_json::to_string_pretty(&output.manifest).expect("serializable") + "\n";
    corpus::write_file(&dir.join(MANIFEST_FILE), &manifest)?;
    corpus::write_file(&dir.join(RUN_FILE), &runs_jsonl(&output.runs))?;
    let timings: String = output.timings.iter().map(corpus::json_line).collect();
    corpus::write_file(&dir.join(TIMINGS_FILE), &timings)
}

/// Reads a run directory written by [`write_run`]. `path` may also point at the run file itself.
pub fn load_run(path: &Path) -> Result<(Option<RunManifest>, Vec<PipelineRun>), CorpusError> {
    let (dir, file): (PathBuf, PathBuf) = if path.is_dir() {
        (path.to_path_buf(), path.join(RUN_FILE))
    } else {
        (
            path.parent().unwrap_or(Path::new(".")).to_path_buf(),
            path.to_path_buf(),
        )
    };
    let io = |p: &Path| {
        let p = p.to_path_buf();
        move |source| CorpusError::Io { path: p, source }
    };
    let text = std::fs::read_to_string(&file).map_err(io(&file))?;
    let mut runs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let run: PipelineRun = serde_json::from_str(line).map_err(|e| CorpusError::Parse {
            path: file.clone(),
            line: i + 1,
            message: e.to_string(),
        })?;
        runs.push(run);
    }
    let manifest_path = dir.join(MANIFEST_FILE);
    let manifest = match std::fs::read_to_string(&manifest_path) {
        Ok(t) => Some(serde_json::from_str(&t).map_err(|e| CorpusError::Parse {
            path: manifest_path.clone(),
            line: e.line(),
            message: e.to_string(),
        })?),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
        Err(e) => return Err(io(&manifest_path)(e)),
    };
    Ok((manifest, runs))
}
