//! Render a few-shot prompt and parse model outputs back into traceable summaries.

use citesum::gateway::parse::parse_generation;
use citesum::gateway::prompt::{render_generation_prompt, render_output};
use citesum::gateway::DemoBank;
use citesum::{Article, AspectCode, TraceableSummary};

fn main() -> anyhow::Result<()> {
    let demos = DemoBank::load(&std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/demos.json"))?;
    let article = Article::new(
        "12345678",
        "We tested a walking plan in older adults. Sixty people walked daily for eight weeks. \
         Balance scores improved. Two people reported sore feet.",
    )?;
    let prompt = render_generation_prompt(&article, AspectCode::Outcomes, demos.get(AspectCode::Outcomes)?);
    println!("{prompt}\n----");

    let n = article.sentence_count();
    for raw in [
        "Summary: Balance scores improved after the walking plan.\nCitations: [2]",
        "Summary: Balance improved and feet hurt.\nCitations: [2], [9], [3]",
        "Summary: Unknown.\nCitations: Null.",
        "Balance improved.",
    ] {
        match parse_generation(raw, n) {
            Ok(parsed) => println!("{raw:?} -> {:?} flags {:?}", parsed.summary, parsed.flags),
            Err(e) => println!("{raw:?} -> error: {e}"),
        }
    }
    println!(
        "rendered: {}",
        render_output(&TraceableSummary::positive("Balance improved.", [2]))
    );
    Ok(())
}
