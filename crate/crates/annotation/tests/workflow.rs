use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use citesum::gateway::TableDecomposer;
use citesum::metrics::{evaluate_instance, Score};
use citesum::{Dataset, TraceableSummary};
use citesum_annotation::{
    AnnotationService, Consent, Domain, Event, FileStore, HumanVerdict, JudgmentTask, MemoryStore, RevisionPolicy,
    Scores, ServiceError, SqliteStore, Store, VerdictTarget,
};
use proptest::prelude::*;

fn dataset() -> Dataset {
    Dataset::load(Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/corpus/dataset.jsonl")).unwrap()
}

const BOTH: Consent = Consent {
    data_use: true,
    cookies: true,
};

/// Two medical and two NLP annotators, all eligible, with every instance assigned.
fn staffed(store: Box<dyn Store>) -> (AnnotationService, Vec<String>) {
    let svc = AnnotationService::open(dataset(), store)
        .unwrap()
        .with_clock(|| 1_700_000_000);
    let mut ids = Vec::new();
    for (i, domain) in [Domain::Medical, Domain::Medical, Domain::Nlp, Domain::Nlp]
        .into_iter()
        .enumerate()
    {
        let (a, _token) = svc.register(&format!("rater{i}@example.org"), domain).unwrap();
        svc.consent(&a.id, BOTH).unwrap();
        svc.approve(&a.id).unwrap();
        ids.push(a.id);
    }
    svc.assign(7).unwrap();
    (svc, ids)
}

/// Both assigned annotators rate every instance; instances whose pmid ends
/// in 1 or 3 get a low pair and end up selected for revision.
fn rate_all(svc: &AnnotationService) -> BTreeSet<String> {
    let mut low = BTreeSet::new();
    for (id, pair) in svc.assignments() {
        let poor = id.split(':').next().unwrap().ends_with(['1', '3']);
        let (a, b) = if poor {
            ((2, 4, 3), (3, 3, 3))
        } else {
            ((5, 4, 4), (4, 4, 5))
        };
        svc.submit_rating(&pair[0], &id, Scores::new(a.0, a.1, a.2).unwrap())
            .unwrap();
        svc.submit_rating(&pair[1], &id, Scores::new(b.0, b.1, b.2).unwrap())
            .unwrap();
        if poor {
            low.insert(id);
        }
    }
    low
}

fn revise_all(svc: &AnnotationService) {
    for id in svc.pending_revisions() {
        let who = svc.assignments()[&id][0].clone();
        let revised = if id == "90000001:a" {
            TraceableSummary::positive(
                "The trial asked whether a combination pill lowers blood pressure in older adults.",
                [1, 5],
            )
        } else {
            TraceableSummary::Negative
        };
        svc.submit_revision(&who, &id, revised, "clarified").unwrap();
    }
}

fn full_workflow(open: impl Fn() -> Box<dyn Store>) {
    let (svc, _) = staffed(open());
    let ds = svc.dataset().clone();

    let assignments = svc.assignments();
    assert_eq!(assignments.len(), ds.instances().len());
    let mut load: BTreeMap<&str, usize> = BTreeMap::new();
    for pair in assignments.values() {
        for a in pair {
            *load.entry(a).or_default() += 1;
        }
    }
    let loads: Vec<usize> = load.values().copied().collect();
    assert!(
        loads.iter().max().unwrap() - loads.iter().min().unwrap() <= 1,
        "{load:?}"
    );

    let low = rate_all(&svc);
    let selection = svc.revision_selection();
    assert_eq!(selection.selected, low);
    assert!(selection.skipped.is_empty());

    match svc.export_revised_dataset(false) {
        Err(ServiceError::PendingRevisions(p)) => assert_eq!(p.len(), low.len()),
        other => panic!("expected pending revisions, got {other:?}"),
    }
    revise_all(&svc);
    assert!(svc.pending_revisions().is_empty());
    let exported = svc.export_revised_dataset(false).unwrap();
    let before = (svc.ratings(), svc.revisions(), svc.assignments(), svc.annotators());
    drop(svc);

    // Replaying the same log reproduces the state and the export.
    let svc = AnnotationService::open(dataset(), open()).unwrap();
    assert_eq!(
        (svc.ratings(), svc.revisions(), svc.assignments(), svc.annotators()),
        before
    );
    assert_eq!(
        svc.export_revised_dataset(false).unwrap().content_hash(),
        exported.content_hash()
    );

    // Assigning again finds nothing new.
    assert!(svc.assign(99).unwrap().is_empty());
}

#[test]
fn workflow_with_file_store() {
    let dir = tempfile::tempdir().unwrap();
    let path: PathBuf = dir.path().join("events.jsonl");
    full_workflow(|| Box::new(FileStore::open(&path).unwrap()));
}

#[test]
fn workflow_with_sqlite_store() {
    let dir = tempfile::tempdir().unwrap();
    let path: PathBuf = dir.path().join("events.sqlite");
    full_workflow(|| Box::new(SqliteStore::open(&path).unwrap()));
}

#[test]
fn revision_replaces_citations_in_export() {
    let (svc, _) = staffed(Box::new(MemoryStore::default()));
    rate_all(&svc);
    let original = svc
        .dataset()
        .instance("90000001", citesum::AspectCode::Aims)
        .unwrap()
        .clone();
    assert_eq!(original.reference.citations().unwrap(), &BTreeSet::from([1]));
    revise_all(&svc);

    let out = svc.export_revised_dataset(false).unwrap();
    let inst = out.instance("90000001", citesum::AspectCode::Aims).unwrap();
    assert_eq!(inst.reference.citations().unwrap(), &BTreeSet::from([1, 5]));

    // Unrevised instances are untouched; exporting twice gives the same dataset.
    for (a, b) in svc.dataset().instances().iter().zip(out.instances()) {
        let revised = svc.revisions().iter().any(|r| r.instance_id == a.id());
        assert_eq!(revised, a != b, "{}", a.id());
    }
    assert_eq!(
        svc.export_revised_dataset(false).unwrap().content_hash(),
        out.content_hash()
    );

    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("revised.jsonl");
    out.save(&p).unwrap();
    assert_eq!(Dataset::load(&p).unwrap().content_hash(), out.content_hash());
}

#[test]
fn export_without_revisions_is_identity() {
    let (svc, _) = staffed(Box::new(MemoryStore::default()));
    assert_eq!(
        svc.export_revised_dataset(false).unwrap().content_hash(),
        dataset().content_hash()
    );
}

#[test]
fn revision_policy_limits_who_may_revise() {
    let (svc, ids) = staffed(Box::new(MemoryStore::default()));
    rate_all(&svc);
    let id = "90000001:a";
    let pair = svc.assignments()[id].clone();
    let outsider = ids.iter().find(|a| !pair.contains(a)).unwrap().clone();
    let revised = || TraceableSummary::positive("Revised aims.", [1]);

    assert!(matches!(
        svc.submit_revision(&outsider, id, revised(), ""),
        Err(ServiceError::Forbidden(_))
    ));
    svc.set_policy(RevisionPolicy::DesignatedRevisers).unwrap();
    assert!(matches!(
        svc.submit_revision(&pair[0], id, revised(), ""),
        Err(ServiceError::Forbidden(_))
    ));
    svc.assign_reviser(id, &outsider).unwrap();
    svc.submit_revision(&outsider, id, revised(), "").unwrap();

    assert!(matches!(
        svc.submit_revision(&outsider, id, TraceableSummary::positive("x", [40]), ""),
        Err(ServiceError::InvalidRevision(_))
    ));
}

#[test]
fn unselected_instance_cannot_be_revised() {
    let (svc, _) = staffed(Box::new(MemoryStore::default()));
    rate_all(&svc);
    let id = "90000002:a";
    let who = svc.assignments()[id][0].clone();
    assert!(matches!(
        svc.submit_revision(&who, id, TraceableSummary::Negative, ""),
        Err(ServiceError::Conflict(_))
    ));
}

#[test]
fn audit_log_keeps_superseded_ratings() {
    let (svc, _) = staffed(Box::new(MemoryStore::default()));
    let id = "90000001:o";
    let who = svc.assignments()[id][0].clone();
    svc.submit_rating(&who, id, Scores::new(1, 1, 1).unwrap()).unwrap();
    svc.submit_rating(&who, id, Scores::new(5, 5, 5).unwrap()).unwrap();
    assert_eq!(
        svc.instance_detail(&who, id).unwrap().own_rating,
        Some(Scores::new(5, 5, 5).unwrap())
    );
    let rated = svc
        .audit_log(id)
        .unwrap()
        .into_iter()
        .filter(|e| matches!(e, Event::Rated(_)))
        .count();
    assert_eq!(rated, 2);
}

// ------------------------------------------------------------ human judgments

fn task() -> JudgmentTask {
    JudgmentTask {
        instance_id: "90000001:o".into(),
        reference_summary: Some(
            "Systolic pressure fell by 14 mmHg with the pill versus 6 mmHg with usual care.".into(),
        ),
        generated_summary: Some("Pressure fell more with the pill.".into()),
        reference_subclaims: vec![
            "Systolic pressure fell by 14 mmHg with the pill.".into(),
            "It fell by 6 mmHg with usual care.".into(),
        ],
        generated_subclaims: vec!["Pressure fell more with the pill.".into()],
        reference_citations: vec![5],
        generated_citations: vec![4, 5],
    }
}

fn all_yes(t: &JudgmentTask) -> Vec<HumanVerdict> {
    let mut v = Vec::new();
    for index in 0..t.reference_subclaims.len() {
        v.push(VerdictTarget::ReferenceSubclaim { index });
    }
    for index in 0..t.generated_subclaims.len() {
        v.push(VerdictTarget::GeneratedSubclaim { index });
    }
    for &citation in t
        .generated_citations
        .iter()
        .filter(|c| t.reference_citations.contains(c))
    {
        for subclaim in 0..t.generated_subclaims.len() {
            v.push(VerdictTarget::CitationSupport { citation, subclaim });
        }
    }
    v.into_iter()
        .map(|target| HumanVerdict { target, entailed: true })
        .collect()
}

#[test]
fn all_yes_judgments_give_full_claim_recall() {
    let (svc, _) = staffed(Box::new(MemoryStore::default()));
    let t = task();
    svc.load_judgment_tasks(vec![t.clone()]).unwrap();
    let who = svc.assignments()[&t.instance_id][1].clone();
    let record = svc.record_human_judgments(&who, &t.instance_id, all_yes(&t)).unwrap();
    assert!(record.complete);
    assert!(record.judgments.iter().all(|j| j.verdict && j.judge == "human"));

    let article = svc.dataset().article("90000001").unwrap().clone();
    let reference = TraceableSummary::positive(t.reference_summary.clone().unwrap(), t.reference_citations.clone());
    let report = evaluate_instance(
        &reference,
        &t.generated_output(),
        &article,
        &svc.human_judge(),
        &svc.task_decomposer(),
    )
    .unwrap();
    assert_eq!(report.clr, Score::ratio(2, 2));
    assert_eq!(report.clp, Score::ratio(1, 1));
    assert_eq!(report.cir, Score::ratio(1, 1));
    assert_eq!(report.cip, Score::ratio(1, 2));
    assert_eq!(report.judge, "human");
}

#[test]
fn empty_verdicts_mark_the_instance_incomplete() {
    let (svc, _) = staffed(Box::new(MemoryStore::default()));
    let t = task();
    svc.load_judgment_tasks(vec![t.clone()]).unwrap();
    let who = svc.assignments()[&t.instance_id][0].clone();
    let record = svc.record_human_judgments(&who, &t.instance_id, vec![]).unwrap();
    assert!(!record.complete);
    assert!(record.judgments.is_empty());

    // A missing verdict also leaves it incomplete.
    let mut partial = all_yes(&t);
    partial.remove(0);
    assert!(
        !svc.record_human_judgments(&who, &t.instance_id, partial)
            .unwrap()
            .complete
    );
}

#[test]
fn verdict_for_missing_subclaim_is_rejected() {
    let (svc, _) = staffed(Box::new(MemoryStore::default()));
    let t = task();
    svc.load_judgment_tasks(vec![t.clone()]).unwrap();
    let who = svc.assignments()[&t.instance_id][0].clone();
    for target in [
        VerdictTarget::ReferenceSubclaim { index: 9 },
        VerdictTarget::CitationSupport {
            citation: 4,
            subclaim: 0,
        },
    ] {
        let err = svc
            .record_human_judgments(&who, &t.instance_id, vec![HumanVerdict { target, entailed: true }])
            .unwrap_err();
        assert!(matches!(err, ServiceError::InvalidVerdict(_)), "{err:?}");
    }
    assert!(svc.human_judgment_records().is_empty());
}

#[test]
fn judgment_task_citations_are_range_checked() {
    let (svc, _) = staffed(Box::new(MemoryStore::default()));
    let mut t = task();
    t.generated_citations.push(30);
    assert!(matches!(
        svc.load_judgment_tasks(vec![t]),
        Err(ServiceError::Invalid(_))
    ));
}

#[test]
fn task_decomposer_serves_task_subclaims() {
    let (svc, _) = staffed(Box::new(MemoryStore::default()));
    svc.load_judgment_tasks(vec![task()]).unwrap();
    let d: TableDecomposer = svc.task_decomposer();
    use citesum::gateway::ClaimDecomposer;
    let out = d.decompose(task().reference_summary.as_deref().unwrap()).unwrap();
    assert_eq!(out.subclaims, task().reference_subclaims);
}

// -------------------------------------------------------------- authorization

#[derive(Debug, Clone)]
enum Who {
    Eligible(usize),
    NoConsent,
    Unapproved,
}

fn who() -> impl Strategy<Value = Who> {
    prop_oneof![
        (0usize..4).prop_map(Who::Eligible),
        Just(Who::NoConsent),
        Just(Who::Unapproved),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn only_assigned_eligible_annotators_may_rate(
        attempts in prop::collection::vec((who(), 0usize..28, 0u8..7), 1..25),
    ) {
        let (svc, ids) = staffed(Box::new(MemoryStore::default()));
        let (no_consent, _) = svc.register("late@example.org", Domain::Medical).unwrap();
        svc.approve(&no_consent.id).unwrap();
        let (unapproved, _) = svc.register("new@example.org", Domain::Nlp).unwrap();
        svc.consent(&unapproved.id, BOTH).unwrap();
        let instances: Vec<String> = svc.dataset().instances().iter().map(|i| i.id()).collect();

        for (w, inst, score) in attempts {
            let annotator = match w {
                Who::Eligible(i) => ids[i].clone(),
                Who::NoConsent => no_consent.id.clone(),
                Who::Unapproved => unapproved.id.clone(),
            };
            let id = &instances[inst];
            let scores = Scores { completeness: score, conciseness: 3, traceability: 3 };
            let allowed = matches!(w, Who::Eligible(_))
                && svc.assignments()[id].contains(&annotator)
                && (1..=5).contains(&score);
            let before = svc.ratings().len();
            let result = svc.submit_rating(&annotator, id, scores);
            prop_assert_eq!(result.is_ok(), allowed, "{:?} {} {}", w, id, score);
            if !allowed {
                prop_assert_eq!(svc.ratings().len(), before);
            }
        }
        for r in svc.ratings() {
            prop_assert!(svc.assignments()[&r.instance_id].contains(&r.annotator_id));
        }
    }
}
