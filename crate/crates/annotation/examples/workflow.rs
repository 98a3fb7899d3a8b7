//! The annotation workflow in process: onboarding, dual assignment, ratings,
//! revision selection, a revision and the revised-dataset export.

use std::path::Path;

use citesum::agreement::iaa_report;
use citesum::{Dataset, TraceableSummary};
use citesum_annotation::{score_pairs, AnnotationService, Consent, Domain, MemoryStore, Scores};

fn main() -> anyhow::Result<()> {
    let ds = Dataset::load(Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/corpus/dataset.jsonl"))?;
    let svc = AnnotationService::open(ds, Box::new(MemoryStore::default()))?;

    let mut ids = Vec::new();
    for (email, domain) in [("med@example.org", Domain::Medical), ("nlp@example.org", Domain::Nlp)] {
        let (a, _token) = svc.register(email, domain)?;
        svc.consent(
            &a.id,
            Consent {
                data_use: true,
                cookies: true,
            },
        )?;
        svc.approve(&a.id)?;
        ids.push(a.id);
    }
    let assignment = svc.assign(42)?;
    println!("assigned {} instances to {} annotators", assignment.len(), ids.len());

    // The two annotators disagree sharply on the first article.
    for (i, task) in svc.tasks(&ids[0])?.iter().enumerate() {
        let low = task.instance_id.starts_with("90000001");
        svc.submit_rating(&ids[0], &task.instance_id, Scores::new(if low { 2 } else { 4 }, 4, 4)?)?;
        svc.submit_rating(
            &ids[1],
            &task.instance_id,
            Scores::new(if low { 5 } else { 4 }, 4, 3 + (i % 2) as u8)?,
        )?;
    }
    let selection = svc.revision_selection();
    println!("selected for revision: {:?}", selection.selected);

    for id in &selection.selected {
        let item = svc
            .revision_queue(&ids[0])?
            .into_iter()
            .find(|r| &r.instance_id == id)
            .unwrap();
        let revised = match item.draft.summary() {
            Some(text) => TraceableSummary::positive(text, item.draft.citations().unwrap().iter().copied().chain([0])),
            None => TraceableSummary::Negative,
        };
        svc.submit_revision(&ids[0], id, revised, "cite the opening sentence too")?;
    }
    let exported = svc.export_revised_dataset(false)?;
    println!(
        "exported {} instances, hash {}",
        exported.instances().len(),
        exported.content_hash()
    );

    let iaa = iaa_report(&score_pairs(&svc.ratings()))?;
    println!("agreement: {}", iaa.pooled.render());
    Ok(())
}
