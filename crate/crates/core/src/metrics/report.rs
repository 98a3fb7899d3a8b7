use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aspect::AspectCode;
use crate::corpus::{self, CorpusError, Dataset, TraceableSummary};
use crate::gateway::{ClaimDecomposer, EntailmentJudge};
use crate::pipelines::{PipelineKind, PipelineRun};

use super::aggregate::{aggregate, render_aspect_table, render_method_table, Aggregation, MetricReport};
use super::{evaluate_instance, InstanceReport, MetricFlag, MetricsError};

pub const REPORT_SCHEMA: &str = "citesum/evaluation";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvaluatedInstance {
    pub pmid: String,
    pub aspect: AspectCode,
    #[serde(flatten)]
    pub report: InstanceReport,
}

/// Per-instance results plus the context needed to interpret them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub schema: String,
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pipeline: Option<PipelineKind>,
    pub judge: String,
    pub decomposer: String,
    pub aggregation: Aggregation,
    pub dataset_hash: String,
    pub instances: Vec<EvaluatedInstance>,
}

impl EvaluationReport {
    pub fn new(
        pipeline: Option<PipelineKind>,
        judge: &str,
        decomposer: &str,
        aggregation: Aggregation,
        dataset: &Dataset,
        instances: Vec<EvaluatedInstance>,
    ) -> Self {
        EvaluationReport {
            schema: REPORT_SCHEMA.to_string(),
            version: corpus::SCHEMA_VERSION,
            pipeline,
            judge: judge.to_string(),
            decomposer: decomposer.to_string(),
            aggregation,
            dataset_hash: dataset.content_hash(),
            instances,
        }
    }

    pub fn summary(&self, mode: Aggregation) -> Result<MetricReport, MetricsError> {
        let items: Vec<(AspectCode, &InstanceReport)> = self.instances.iter().map(|i| (i.aspect, &i.report)).collect();
        aggregate(&items, mode)
    }

    /// Number of instances carrying each flag.
    pub fn flag_counts(&self) -> BTreeMap<MetricFlag, usize> {
        let mut counts = BTreeMap::new();
        for i in &self.instances {
            for f in &i.report.flags {
                *counts.entry(*f).or_insert(0) += 1;
            }
        }
        counts
    }
}

/// Scores every dataset instance against its run output.
///
/// Failed runs are scored as negative outputs and flagged. Results are
/// ordered by `(pmid, aspect)`; `jobs = 0` uses one thread per core.
pub fn evaluate_run(
    dataset: &Dataset,
    runs: &[PipelineRun],
    judge: &dyn EntailmentJudge,
    decomposer: &dyn ClaimDecomposer,
    jobs: usize,
) -> Result<Vec<EvaluatedInstance>, MetricsError> {
    let mut by_key: HashMap<(&str, AspectCode), &PipelineRun> = HashMap::new();
    for run in runs {
        if dataset.instance(&run.pmid, run.aspect).is_none() {
            return Err(MetricsError::Mismatch(format!(
                "run output for {} has no reference instance",
                corpus::instance_id(&run.pmid, run.aspect)
            )));
        }
        if by_key.insert((run.pmid.as_str(), run.aspect), run).is_some() {
            return Err(MetricsError::Mismatch(format!(
                "duplicate run output for {}",
                corpus::instance_id(&run.pmid, run.aspect)
            )));
        }
    }
    let mut work = Vec::with_capacity(dataset.instances().len());
    for inst in dataset.instances() {
        let run = by_key
            .get(&(inst.pmid.as_str(), inst.aspect))
            .ok_or_else(|| MetricsError::Mismatch(format!("no run output for {}", inst.id())))?;
        work.push((inst, *run));
    }
    work.sort_by(|a, b| (&a.0.pmid, a.0.aspect).cmp(&(&b.0.pmid, b.0.aspect)));

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| MetricsError::Mismatch(e.to_string()))?;
    pool.install(|| {
        work.par_iter()
            .map(|(inst, run)| {
                let article = dataset.article(&inst.pmid).expect("validated dataset");
                let output = if run.failed() {
                    TraceableSummary::Negative
                } else {
                    run.output.clone()
                };
                let mut report = evaluate_instance(&inst.reference, &output, article, judge, decomposer)?;
                if run.failed() {
                    report.flags.insert(MetricFlag::RunFailed);
                }
                Ok(EvaluatedInstance {
                    pmid: inst.pmid.clone(),
                    aspect: inst.aspect,
                    report,
                })
            })
            .collect()
    })
}

#[derive(Serialize)]
struct ReportFile<'a> {
    #[serde(flatten)]
    report: &'a EvaluationReport,
    summary: MetricReport,
}

/// Writes the report as pretty JSON with an aggregated `summary` block.
pub fn write_report(path: &Path, report: &EvaluationReport) -> Result<(), CorpusError> {
    let summary = report
        .summary(report.aggregation)
        .map_err(|e| CorpusError::Invalid(e.to_string()))?;
    let text = serde_json::to_string_pretty(&ReportFile { report, summary }).expect("serializable") + "\n";
    corpus::write_file(path, &text)
}

/// Reads a report file; the stored summary block is ignored and recomputed on demand.
pub fn load_report(path: &Path) -> Result<EvaluationReport, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let report: EvaluationReport = serde_json::from_str(&text).map_err(|e| CorpusError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })?;
    if report.schema != REPORT_SCHEMA {
        return Err(CorpusError::Schema {
            path: path.to_path_buf(),
            message: format!("expected schema {REPORT_SCHEMA}, found {}", report.schema),
        });
    }
    Ok(report)
}

/// Human-readable summary: method row, aspect table and flag counts.
pub fn render_report(report: &EvaluationReport, mode: Aggregation) -> Result<String, MetricsError> {
    let summary = report.summary(mode)?;
    let label = report.pipeline.map_or("run", PipelineKind::label).to_string();
    let mut out = format!(
        "{} average over {} instances (judge: {}, decomposer: {}), scores in %\n\n",
        match mode {
            Aggregation::Macro => "Macro",
            Aggregation::Micro => "Micro",
        },
        summary.instance_count,
        report.judge,
        report.decomposer
    );
    out.push_str(&render_method_table(&[(label, &summary.overall)]));
    out.push('\n');
    out.push_str(&render_aspect_table(&summary));
    let flags = report.flag_counts();
    if !flags.is_empty() {
        out.push_str("\nflags:\n");
        for (flag, n) in flags {
            let name = serde_json::to_value(flag).expect("serializable");
            out.push_str(&format!("  {:<34} {n}\n", name.as_str().unwrap_or_default()));
        }
    }
    Ok(out)
}
