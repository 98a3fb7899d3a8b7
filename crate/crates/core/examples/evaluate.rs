//! Score summaries with claim and citation recall/precision.
//!
//! The first part uses a hand-written entailment table so every number can be
//! checked by eye. The second part evaluates a full pipeline run with mocks.

use std::collections::BTreeSet;
use std::path::PathBuf;

use citesum::gateway::{BackendRef, Gateway, GatewayConfig, TableDecomposer, TableJudge};
use citesum::metrics::{evaluate_instance, evaluate_run, render_report, Aggregation, EvaluationReport};
use citesum::pipelines::{run_pipeline, PipelineConfig, PipelineKind};
use citesum::{Article, Dataset, TraceableSummary};

fn main() -> anyhow::Result<()> {
    let article = Article::new(
        "1",
        "A cream was tested on dry skin. Forty adults used it for a month. Itching fell by half. Redness was unchanged.",
    )?;
    let reference = TraceableSummary::positive("Itching fell but redness did not change.", [2, 3]);
    let output = TraceableSummary::positive("Itching fell.", BTreeSet::from([2, 1]));

    let mut decomposer = TableDecomposer::default();
    decomposer.insert(
        "Itching fell but redness did not change.",
        vec!["Itching fell.".into(), "Redness did not change.".into()],
    );
    decomposer.insert("Itching fell.", vec!["Itching fell.".into()]);

    let mut judge = TableJudge::new("by-hand").with_default(false);
    judge.insert("Itching fell.", "Itching fell.", true);
    judge.insert("Itching fell but redness did not change.", "Itching fell.", true);
    judge.insert("Itching fell by half.", "Itching fell.", true);
    judge.insert("Redness was unchanged.", "Redness did not change.", true);

    let r = evaluate_instance(&reference, &output, &article, &judge, &decomposer)?;
    println!("CLR {} ({}%)", r.clr.value(), r.clr.percent());
    println!("CLP {} ({}%)", r.clp.value(), r.clp.percent());
    println!("CIR {} ({}%)", r.cir.value(), r.cir.percent());
    println!("CIP {} ({}%)", r.cip.value(), r.cip.percent());
    println!("valid citations {:?}\n", r.valid_citations);

    let fixtures = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let ds = Dataset::load(fixtures.join("corpus/dataset.jsonl"))?;
    let gw = Gateway::from_config(&GatewayConfig::load(&fixtures.join("backends.toml"))?)?;
    let mut config = PipelineConfig::new(PipelineKind::Tts, "llm");
    config.backends.tracker = Some("tracker".into());
    let run = run_pipeline(&ds, &gw, &config, None)?;
    let evaluated = evaluate_run(
        &ds,
        &run.runs,
        &BackendRef::new(&gw, "judge")?,
        &BackendRef::new(&gw, "llm")?,
        0,
    )?;
    let report = EvaluationReport::new(
        Some(PipelineKind::Tts),
        "judge",
        "llm",
        Aggregation::Macro,
        &ds,
        evaluated,
    );
    println!("{}", render_report(&report, Aggregation::Macro)?);
    Ok(())
}
