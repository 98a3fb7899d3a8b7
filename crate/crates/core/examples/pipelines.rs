//! Run every generation pipeline over the fixture corpus with offline mock backends.

use std::path::PathBuf;

use citesum::gateway::{DemoBank, Gateway, GatewayConfig};
use citesum::pipelines::{run_pipeline, PipelineConfig, PipelineKind};
use citesum::Dataset;

fn main() -> anyhow::Result<()> {
    let fixtures = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let ds = Dataset::load(fixtures.join("corpus/dataset.jsonl"))?;
    let demos = DemoBank::load(&fixtures.join("demos.json"))?;
    let gw = Gateway::from_config(&GatewayConfig::load(&fixtures.join("backends.toml"))?)?;

    for kind in [
        PipelineKind::Tts,
        PipelineKind::TtsFull,
        PipelineKind::Stt,
        PipelineKind::Ete,
        PipelineKind::FewShot,
    ] {
        let mut config = PipelineConfig::new(kind, "llm");
        if kind.uses_tracker() {
            config.backends.tracker = Some("tracker".into());
        }
        config.jobs = 4;
        let out = run_pipeline(&ds, &gw, &config, Some(&demos))?;
        let negatives = out.runs.iter().filter(|r| r.output.is_negative()).count();
        println!(
            "{:<10} {} runs, {negatives} negative, {} failed",
            kind.label(),
            out.runs.len(),
            out.manifest.failed_count
        );
    }

    // Lower thresholds keep more sentences.
    for threshold in [0.2, 0.5, 0.8] {
        let mut config = PipelineConfig::new(PipelineKind::Tts, "llm");
        config.backends.tracker = Some("tracker".into());
        config.threshold = threshold;
        let out = run_pipeline(&ds, &gw, &config, None)?;
        let cited: usize = out
            .runs
            .iter()
            .filter_map(|r| r.output.citations())
            .map(|c| c.len())
            .sum();
        println!("threshold {threshold}: {cited} citations");
    }
    Ok(())
}
