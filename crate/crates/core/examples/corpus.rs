//! Load a dataset, print statistics, split it by article and build training exports.

use std::path::PathBuf;

use citesum::corpus::{build_summarizer_training_set, build_tracker_training_set, compute_stats};
use citesum::Dataset;

fn main() -> anyhow::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/corpus/dataset.jsonl"));
    let ds = Dataset::load(&path)?;
    println!(
        "{} articles, {} instances, hash {}",
        ds.articles().len(),
        ds.instances().len(),
        ds.content_hash()
    );
    println!("{}", compute_stats(ds.articles(), ds.instances()).render());

    let (train, test) = ds.split(0.75, 7)?;
    println!(
        "split 0.75/seed 7: {} train / {} test instances",
        train.instances().len(),
        test.instances().len()
    );

    let tracker = build_tracker_training_set(train.articles(), train.instances());
    let positives = tracker.iter().filter(|e| e.output == 1).count();
    println!("tracker pairs: {} ({positives} positive)", tracker.len());
    let summarizer = build_summarizer_training_set(train.articles(), train.instances(), false);
    println!("summarizer records: {}", summarizer.len());
    Ok(())
}
