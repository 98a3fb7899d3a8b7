use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::{Mutex, MutexGuard};
use std::time::{SystemTime, UNIX_EPOCH};

use citesum::agreement::{LikertMetric, ScorePair};
use citesum::corpus::instance_id;
use citesum::gateway::{Judgment, TableDecomposer, TableJudge};
use citesum::{AspectCode, Dataset, DatasetInstance, TraceableSummary};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::model::{
    Annotator, Consent, Domain, Event, HumanJudgmentRecord, HumanVerdict, JudgmentTask, RatingRecord, RevisionPolicy,
    RevisionRecord, Scores, VerdictTarget,
};
use crate::store::Store;
use crate::ServiceError;

/// Judge name carried by judgments recorded through the service.
pub const HUMAN_JUDGE: &str = "human";

/// Instance id to its two annotators, medical first.
pub type Assignment = BTreeMap<String, [String; 2]>;

/// Pairs every instance with one medical and one NLP annotator.
///
/// Only eligible annotators are used. Each domain's pool is shuffled with the
/// seed and dealt round-robin, so loads differ by at most one per domain.
pub fn assign_tasks(instances: &[String], annotators: &[Annotator], seed: u64) -> Result<Assignment, ServiceError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pools = Vec::with_capacity(2);
    for domain in [Domain::Medical, Domain::Nlp] {
        let mut ids: Vec<&str> = annotators
            .iter()
            .filter(|a| a.domain == domain && a.eligible())
            .map(|a| a.id.as_str())
            .collect();
        if ids.is_empty() {
            return Err(ServiceError::NoEligibleAnnotator(domain));
        }
        ids.sort_unstable();
        ids.dedup();
        ids.shuffle(&mut rng);
        pools.push(ids);
    }
    let mut order: Vec<&String> = instances.iter().collect();
    order.sort();
    order.dedup();
    order.shuffle(&mut rng);
    Ok(order
        .into_iter()
        .enumerate()
        .map(|(i, inst)| {
            let pick = |pool: &Vec<&str>| pool[i % pool.len()].to_string();
            (inst.clone(), [pick(&pools[0]), pick(&pools[1])])
        })
        .collect())
}

/// True when any metric has mean below 3.5 or the two scores differ by more than 2.
pub fn needs_revision(a: &Scores, b: &Scores) -> bool {
    a.values()
        .into_iter()
        .zip(b.values())
        .any(|(x, y)| x + y < 7 || x.abs_diff(y) > 2)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevisionSelection {
    pub selected: BTreeSet<String>,
    /// Instances without exactly two ratings, with their rating count.
    pub skipped: BTreeMap<String, usize>,
}

/// Phase-II filter over all rating records.
pub fn select_for_revision(ratings: &[RatingRecord]) -> RevisionSelection {
    let mut by_instance: BTreeMap<&str, Vec<&Scores>> = BTreeMap::new();
    for r in ratings {
        by_instance.entry(&r.instance_id).or_default().push(&r.scores);
    }
    let mut out = RevisionSelection::default();
    for (id, scores) in by_instance {
        match scores.as_slice() {
            [a, b] => {
                if needs_revision(a, b) {
                    out.selected.insert(id.to_string());
                }
            }
            other => {
                out.skipped.insert(id.to_string(), other.len());
            }
        }
    }
    out
}

/// Rating pairs for agreement statistics: one pair per metric for every
/// instance rated by exactly two annotators. Annotators are ordered by id.
pub fn score_pairs(ratings: &[RatingRecord]) -> Vec<ScorePair> {
    let mut by_instance: BTreeMap<&str, Vec<&RatingRecord>> = BTreeMap::new();
    for r in ratings {
        by_instance.entry(&r.instance_id).or_default().push(r);
    }
    let mut out = Vec::new();
    for (id, mut rs) in by_instance {
        if rs.len() != 2 {
            continue;
        }
        rs.sort_by(|a, b| a.annotator_id.cmp(&b.annotator_id));
        for (k, metric) in LikertMetric::ALL.into_iter().enumerate() {
            out.push(ScorePair {
                item: id.to_string(),
                metric,
                score_a: rs[0].scores.values()[k],
                score_b: rs[1].scores.values()[k],
            });
        }
    }
    out
}

/// Turns verdicts into premise/hypothesis judgments and reports whether every
/// verdict the evaluation procedure needs is present.
pub fn resolve_verdicts(
    task: &JudgmentTask,
    sentences: &[String],
    verdicts: &[HumanVerdict],
) -> Result<(Vec<Judgment>, bool), ServiceError> {
    let bad = |m: String| ServiceError::InvalidVerdict(m);
    let subclaim = |list: &[String], i: usize, which: &str| {
        list.get(i).cloned().ok_or_else(|| {
            bad(format!(
                "{which} subclaim {i} does not exist ({} subclaims)",
                list.len()
            ))
        })
    };
    let mut latest: BTreeMap<VerdictTarget, bool> = BTreeMap::new();
    let mut judgments = Vec::with_capacity(verdicts.len());
    for v in verdicts {
        let (premise, hypothesis) = match v.target {
            VerdictTarget::ReferenceSubclaim { index } => (
                task.generated_summary
                    .clone()
                    .ok_or_else(|| bad("the generated output is negative".into()))?,
                subclaim(&task.reference_subclaims, index, "reference")?,
            ),
            VerdictTarget::GeneratedSubclaim { index } => (
                task.reference_summary
                    .clone()
                    .ok_or_else(|| bad("the reference is negative".into()))?,
                subclaim(&task.generated_subclaims, index, "generated")?,
            ),
            VerdictTarget::CitationSupport { citation, subclaim: s } => {
                if !task.generated_citations.contains(&citation) || !task.reference_citations.contains(&citation) {
                    return Err(bad(format!(
                        "citation {citation} is not shared by the reference and the output"
                    )));
                }
                let sentence = sentences
                    .get(citation)
                    .cloned()
                    .ok_or_else(|| bad(format!("sentence {citation} does not exist")))?;
                (sentence, subclaim(&task.generated_subclaims, s, "generated")?)
            }
        };
        latest.insert(v.target, v.entailed);
        judgments.push(Judgment {
            premise,
            hypothesis,
            verdict: v.entailed,
            judge: HUMAN_JUDGE.to_string(),
        });
    }
    Ok((judgments, verdicts_complete(task, &latest)))
}

fn verdicts_complete(task: &JudgmentTask, latest: &BTreeMap<VerdictTarget, bool>) -> bool {
    let has = |t: VerdictTarget| latest.contains_key(&t);
    if task.generated_summary.is_some()
        && !(0..task.reference_subclaims.len()).all(|index| has(VerdictTarget::ReferenceSubclaim { index }))
    {
        return false;
    }
    if task.reference_summary.is_some()
        && !(0..task.generated_subclaims.len()).all(|index| has(VerdictTarget::GeneratedSubclaim { index }))
    {
        return false;
    }
    let n = task.generated_subclaims.len();
    task.generated_citations
        .iter()
        .filter(|c| task.reference_citations.contains(c))
        .all(|&citation| {
            let support = |subclaim| {
                latest
                    .get(&VerdictTarget::CitationSupport { citation, subclaim })
                    .copied()
            };
            (0..n).any(|s| support(s) == Some(true)) || (0..n).all(|s| support(s).is_some())
        })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TaskSummary {
    pub instance_id: String,
    pub pmid: String,
    pub aspect: AspectCode,
    pub rated: bool,
}

/// What an annotator sees for one task. Only their own rating is included.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InstanceDetail {
    pub instance_id: String,
    pub pmid: String,
    pub aspect: AspectCode,
    pub aspect_name: &'static str,
    pub aspect_description: &'static str,
    pub sentences: Vec<String>,
    pub draft: TraceableSummary,
    pub own_rating: Option<Scores>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RevisionItem {
    pub instance_id: String,
    pub draft: TraceableSummary,
    pub ratings: Vec<Scores>,
    pub revision: Option<RevisionRecord>,
}

#[derive(Debug, Default)]
struct State {
    annotators: BTreeMap<String, Annotator>,
    tokens: HashMap<String, String>,
    assignments: Assignment,
    ratings: BTreeMap<(String, String), RatingRecord>,
    policy: RevisionPolicy,
    revisers: BTreeMap<String, BTreeSet<String>>,
    revisions: BTreeMap<String, RevisionRecord>,
    tasks: BTreeMap<String, JudgmentTask>,
    judgments: BTreeMap<(String, String), HumanJudgmentRecord>,
}

impl State {
    fn apply(&mut self, event: Event) {
        match event {
            Event::Registered {
                annotator,
                token_sha256,
            } => {
                self.tokens.insert(token_sha256, annotator.id.clone());
                self.annotators.insert(annotator.id.clone(), annotator);
            }
            Event::Consented { annotator_id, consent } => {
                if let Some(a) = self.annotators.get_mut(&annotator_id) {
                    a.consent = consent;
                }
            }
            Event::Approved { annotator_id } => {
                if let Some(a) = self.annotators.get_mut(&annotator_id) {
                    a.approved = true;
                }
            }
            Event::Assigned {
                instance_id,
                annotators,
            } => {
                self.assignments.insert(instance_id, annotators);
            }
            Event::Rated(r) => {
                self.ratings.insert((r.instance_id.clone(), r.annotator_id.clone()), r);
            }
            Event::PolicySet { policy } => self.policy = policy,
            Event::ReviserAssigned {
                instance_id,
                annotator_id,
            } => {
                self.revisers.entry(instance_id).or_default().insert(annotator_id);
            }
            Event::Revised(r) => {
                self.revisions.insert(r.instance_id.clone(), r);
            }
            Event::JudgmentTaskLoaded(t) => {
                self.tasks.insert(t.instance_id.clone(), t);
            }
            Event::Judged(j) => {
                self.judgments
                    .insert((j.instance_id.clone(), j.annotator_id.clone()), j);
            }
        }
    }

    fn eligible(&self, id: &str) -> Result<&Annotator, ServiceError> {
        let a = self
            .annotators
            .get(id)
            .ok_or_else(|| ServiceError::UnknownAnnotator(id.to_string()))?;
        if !a.eligible() {
            return Err(ServiceError::NotEligible(id.to_string()));
        }
        Ok(a)
    }

    fn is_assigned(&self, instance: &str, annotator: &str) -> bool {
        self.assignments
            .get(instance)
            .is_some_and(|pair| pair.iter().any(|a| a == annotator))
    }

    fn may_revise(&self, instance: &str, annotator: &str) -> bool {
        match self.policy {
            RevisionPolicy::OriginalAnnotators => self.is_assigned(instance, annotator),
            RevisionPolicy::DesignatedRevisers => self.revisers.get(instance).is_some_and(|s| s.contains(annotator)),
        }
    }

    fn rating_list(&self) -> Vec<RatingRecord> {
        self.ratings.values().cloned().collect()
    }

    fn pending(&self) -> Vec<String> {
        select_for_revision(&self.rating_list())
            .selected
            .into_iter()
            .filter(|id| !self.revisions.contains_key(id))
            .collect()
    }
}

struct Inner {
    store: Box<dyn Store>,
    state: State,
}

impl Inner {
    /// Persist first, then apply, so state never runs ahead of the log.
    fn commit(&mut self, event: Event) -> Result<(), ServiceError> {
        self.store.append(&event)?;
        self.state.apply(event);
        Ok(())
    }
}

type Clock = Box<dyn Fn() -> u64 + Send + Sync>;

/// The annotation workflow over one dataset. Thread-safe; every mutation is a
/// single durable event.
pub struct AnnotationService {
    dataset: Dataset,
    index: HashMap<String, usize>,
    inner: Mutex<Inner>,
    clock: Clock,
}

fn token_hash(token: &str) -> String {
    hex::encode(Sha256::digest(token.as_bytes()))
}

impl AnnotationService {
    /// Opens the service, replaying any events already in `store`.
    pub fn open(dataset: Dataset, mut store: Box<dyn Store>) -> Result<Self, ServiceError> {
        let index: HashMap<String, usize> = dataset
            .instances()
            .iter()
            .enumerate()
            .map(|(i, inst)| (inst.id(), i))
            .collect();
        let mut state = State::default();
        for event in store.load()? {
            if let Some(id) = event.instance_id() {
                if !index.contains_key(id) {
                    return Err(ServiceError::Invalid(format!(
                        "event log refers to instance {id}, which is not in the dataset"
                    )));
                }
            }
            state.apply(event);
        }
        Ok(AnnotationService {
            dataset,
            index,
            inner: Mutex::new(Inner { store, state }),
            clock: Box::new(|| {
                SystemTime::now()
                    .duration_since(UNIX_EPOCH)
                    .map(|d| d.as_secs())
                    .unwrap_or(0)
            }),
        })
    }

    /// Replaces the wall clock used for record timestamps.
    pub fn with_clock(mut self, clock: impl Fn() -> u64 + Send + Sync + 'static) -> Self {
        self.clock = Box::new(clock);
        self
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn instance(&self, id: &str) -> Result<&DatasetInstance, ServiceError> {
        self.index
            .get(id)
            .map(|&i| &self.dataset.instances()[i])
            .ok_or_else(|| ServiceError::UnknownInstance(id.to_string()))
    }

    fn sentences(&self, inst: &DatasetInstance) -> &[String] {
        &self.dataset.article(&inst.pmid).expect("validated dataset").sentences
    }

    /// Creates an unapproved account. Returns it with its bearer token, which
    /// is not stored (only its hash is).
    pub fn register(&self, email: &str, domain: Domain) -> Result<(Annotator, String), ServiceError> {
        let email = email.trim();
        if !email.contains('@') {
            return Err(ServiceError::Invalid(format!("`{email}` is not an email address")));
        }
        let mut inner = self.lock();
        if inner
            .state
            .annotators
            .values()
            .any(|a| a.email.eq_ignore_ascii_case(email))
        {
            return Err(ServiceError::Conflict(format!("{email} is already registered")));
        }
        let annotator = Annotator {
            id: format!("ann-{:04}", inner.state.annotators.len() + 1),
            email: email.to_string(),
            domain,
            consent: Consent::default(),
            approved: false,
        };
        let token = hex::encode(rand::thread_rng().gen::<[u8; 32]>());
        inner.commit(Event::Registered {
            annotator: annotator.clone(),
            token_sha256: token_hash(&token),
        })?;
        Ok((annotator, token))
    }

    pub fn authenticate(&self, token: &str) -> Result<Annotator, ServiceError> {
        let inner = self.lock();
        inner
            .state
            .tokens
            .get(&token_hash(token))
            .and_then(|id| inner.state.annotators.get(id))
            .cloned()
            .ok_or(ServiceError::Unauthenticated)
    }

    pub fn consent(&self, annotator_id: &str, consent: Consent) -> Result<Annotator, ServiceError> {
        let mut inner = self.lock();
        if !inner.state.annotators.contains_key(annotator_id) {
            return Err(ServiceError::UnknownAnnotator(annotator_id.to_string()));
        }
        inner.commit(Event::Consented {
            annotator_id: annotator_id.to_string(),
            consent,
        })?;
        Ok(inner.state.annotators[annotator_id].clone())
    }

    pub fn approve(&self, annotator_id: &str) -> Result<Annotator, ServiceError> {
        let mut inner = self.lock();
        if !inner.state.annotators.contains_key(annotator_id) {
            return Err(ServiceError::UnknownAnnotator(annotator_id.to_string()));
        }
        inner.commit(Event::Approved {
            annotator_id: annotator_id.to_string(),
        })?;
        Ok(inner.state.annotators[annotator_id].clone())
    }

    pub fn annotators(&self) -> Vec<Annotator> {
        self.lock().state.annotators.values().cloned().collect()
    }

    /// Assigns every not-yet-assigned instance. Returns the new assignments.
    pub fn assign(&self, seed: u64) -> Result<Assignment, ServiceError> {
        let mut inner = self.lock();
        let open: Vec<String> = self
            .dataset
            .instances()
            .iter()
            .map(DatasetInstance::id)
            .filter(|id| !inner.state.assignments.contains_key(id))
            .collect();
        let annotators: Vec<Annotator> = inner.state.annotators.values().cloned().collect();
        let assignment = assign_tasks(&open, &annotators, seed)?;
        for (instance_id, annotators) in &assignment {
            inner.commit(Event::Assigned {
                instance_id: instance_id.clone(),
                annotators: annotators.clone(),
            })?;
        }
        Ok(assignment)
    }

    pub fn assignments(&self) -> Assignment {
        self.lock().state.assignments.clone()
    }

    pub fn tasks(&self, annotator_id: &str) -> Result<Vec<TaskSummary>, ServiceError> {
        let inner = self.lock();
        inner.state.eligible(annotator_id)?;
        let mut out = Vec::new();
        for (id, pair) in &inner.state.assignments {
            if pair.iter().any(|a| a == annotator_id) {
                let inst = self.instance(id)?;
                out.push(TaskSummary {
                    instance_id: id.clone(),
                    pmid: inst.pmid.clone(),
                    aspect: inst.aspect,
                    rated: inner
                        .state
                        .ratings
                        .contains_key(&(id.clone(), annotator_id.to_string())),
                });
            }
        }
        Ok(out)
    }

    pub fn instance_detail(&self, annotator_id: &str, instance: &str) -> Result<InstanceDetail, ServiceError> {
        let inner = self.lock();
        inner.state.eligible(annotator_id)?;
        let inst = self.instance(instance)?;
        if !inner.state.is_assigned(instance, annotator_id) && !inner.state.may_revise(instance, annotator_id) {
            return Err(ServiceError::Forbidden(format!(
                "{instance} is not assigned to {annotator_id}"
            )));
        }
        Ok(InstanceDetail {
            instance_id: instance.to_string(),
            pmid: inst.pmid.clone(),
            aspect: inst.aspect,
            aspect_name: inst.aspect.name(),
            aspect_description: inst.aspect.description(),
            sentences: self.sentences(inst).to_vec(),
            draft: inst.reference.clone(),
            own_rating: inner
                .state
                .ratings
                .get(&(instance.to_string(), annotator_id.to_string()))
                .map(|r| r.scores),
        })
    }

    /// Phase-I rating. A later submission by the same annotator replaces the
    /// earlier one; both stay in the event log.
    pub fn submit_rating(
        &self,
        annotator_id: &str,
        instance: &str,
        scores: Scores,
    ) -> Result<RatingRecord, ServiceError> {
        scores.validate()?;
        let mut inner = self.lock();
        inner.state.eligible(annotator_id)?;
        self.instance(instance)?;
        if !inner.state.is_assigned(instance, annotator_id) {
            return Err(ServiceError::Forbidden(format!(
                "{instance} is not assigned to {annotator_id}"
            )));
        }
        let record = RatingRecord {
            instance_id: instance.to_string(),
            annotator_id: annotator_id.to_string(),
            scores,
            timestamp: (self.clock)(),
        };
        inner.commit(Event::Rated(record.clone()))?;
        Ok(record)
    }

    pub fn ratings(&self) -> Vec<RatingRecord> {
        self.lock().state.rating_list()
    }

    pub fn revision_selection(&self) -> RevisionSelection {
        select_for_revision(&self.ratings())
    }

    pub fn policy(&self) -> RevisionPolicy {
        self.lock().state.policy
    }

    pub fn set_policy(&self, policy: RevisionPolicy) -> Result<(), ServiceError> {
        self.lock().commit(Event::PolicySet { policy })
    }

    pub fn assign_reviser(&self, instance: &str, annotator_id: &str) -> Result<(), ServiceError> {
        self.instance(instance)?;
        let mut inner = self.lock();
        inner.state.eligible(annotator_id)?;
        inner.commit(Event::ReviserAssigned {
            instance_id: instance.to_string(),
            annotator_id: annotator_id.to_string(),
        })
    }

    /// Selected instances this annotator may revise under the current policy.
    pub fn revision_queue(&self, annotator_id: &str) -> Result<Vec<RevisionItem>, ServiceError> {
        let inner = self.lock();
        inner.state.eligible(annotator_id)?;
        let selection = select_for_revision(&inner.state.rating_list());
        let mut out = Vec::new();
        for id in selection.selected {
            if !inner.state.may_revise(&id, annotator_id) {
                continue;
            }
            out.push(RevisionItem {
                draft: self.instance(&id)?.reference.clone(),
                ratings: inner
                    .state
                    .ratings
                    .range((id.clone(), String::new())..)
                    .take_while(|((i, _), _)| *i == id)
                    .map(|(_, r)| r.scores)
                    .collect(),
                revision: inner.state.revisions.get(&id).cloned(),
                instance_id: id,
            });
        }
        Ok(out)
    }

    pub fn submit_revision(
        &self,
        annotator_id: &str,
        instance: &str,
        revised: TraceableSummary,
        rationale: &str,
    ) -> Result<RevisionRecord, ServiceError> {
        let inst = self.instance(instance)?;
        let n = self.sentences(inst).len();
        if let Some(c) = revised.out_of_range(n) {
            return Err(ServiceError::InvalidRevision(format!(
                "citation {c} out of range for {n} sentences"
            )));
        }
        if revised.summary().is_some_and(|s| s.trim().is_empty()) {
            return Err(ServiceError::InvalidRevision("empty summary text".into()));
        }
        let mut inner = self.lock();
        inner.state.eligible(annotator_id)?;
        if !inner.state.may_revise(instance, annotator_id) {
            return Err(ServiceError::Forbidden(format!(
                "{annotator_id} may not revise {instance} under the {:?} policy",
                inner.state.policy
            )));
        }
        if !select_for_revision(&inner.state.rating_list())
            .selected
            .contains(instance)
        {
            return Err(ServiceError::Conflict(format!(
                "{instance} is not selected for revision"
            )));
        }
        let record = RevisionRecord {
            instance_id: instance.to_string(),
            annotator_id: annotator_id.to_string(),
            revised,
            rationale: rationale.to_string(),
            timestamp: (self.clock)(),
        };
        inner.commit(Event::Revised(record.clone()))?;
        Ok(record)
    }

    pub fn revisions(&self) -> Vec<RevisionRecord> {
        self.lock().state.revisions.values().cloned().collect()
    }

    /// Selected instances with no revision yet.
    pub fn pending_revisions(&self) -> Vec<String> {
        self.lock().state.pending()
    }

    /// The dataset with every revised reference replaced. Pending revisions are
    /// an error unless `force` is set.
    pub fn export_revised_dataset(&self, force: bool) -> Result<Dataset, ServiceError> {
        let inner = self.lock();
        let pending = inner.state.pending();
        if !pending.is_empty() && !force {
            return Err(ServiceError::PendingRevisions(pending));
        }
        let instances = self
            .dataset
            .instances()
            .iter()
            .map(|inst| {
                let mut inst = inst.clone();
                if let Some(r) = inner.state.revisions.get(&inst.id()) {
                    inst.reference = r.revised.clone();
                }
                inst
            })
            .collect();
        Ok(self.dataset.with_instances(instances)?)
    }

    pub fn load_judgment_tasks(&self, tasks: Vec<JudgmentTask>) -> Result<usize, ServiceError> {
        for t in &tasks {
            let inst = self.instance(&t.instance_id)?;
            let n = self.sentences(inst).len();
            if let Some(c) = t
                .generated_citations
                .iter()
                .chain(&t.reference_citations)
                .find(|&&c| c >= n)
            {
                return Err(ServiceError::Invalid(format!(
                    "{}: citation {c} out of range for {n} sentences",
                    t.instance_id
                )));
            }
        }
        let mut inner = self.lock();
        let count = tasks.len();
        for t in tasks {
            inner.commit(Event::JudgmentTaskLoaded(t))?;
        }
        Ok(count)
    }

    fn may_judge(state: &State, instance: &str, annotator_id: &str) -> bool {
        state.is_assigned(instance, annotator_id)
            || state.revisers.get(instance).is_some_and(|s| s.contains(annotator_id))
    }

    pub fn judgment_task(&self, annotator_id: &str, instance: &str) -> Result<JudgmentTask, ServiceError> {
        let inner = self.lock();
        inner.state.eligible(annotator_id)?;
        if !Self::may_judge(&inner.state, instance, annotator_id) {
            return Err(ServiceError::Forbidden(format!(
                "{instance} is not assigned to {annotator_id}"
            )));
        }
        inner
            .state
            .tasks
            .get(instance)
            .cloned()
            .ok_or_else(|| ServiceError::UnknownInstance(format!("no judgment task for {instance}")))
    }

    /// Stores one annotator's entailment verdicts for an instance. An empty
    /// list is accepted and marks the instance incomplete.
    pub fn record_human_judgments(
        &self,
        annotator_id: &str,
        instance: &str,
        verdicts: Vec<HumanVerdict>,
    ) -> Result<HumanJudgmentRecord, ServiceError> {
        let inst = self.instance(instance)?;
        let mut inner = self.lock();
        inner.state.eligible(annotator_id)?;
        if !Self::may_judge(&inner.state, instance, annotator_id) {
            return Err(ServiceError::Forbidden(format!(
                "{instance} is not assigned to {annotator_id}"
            )));
        }
        let task = inner
            .state
            .tasks
            .get(instance)
            .ok_or_else(|| ServiceError::UnknownInstance(format!("no judgment task for {instance}")))?;
        let (judgments, complete) = resolve_verdicts(task, self.sentences(inst), &verdicts)?;
        let record = HumanJudgmentRecord {
            instance_id: instance.to_string(),
            annotator_id: annotator_id.to_string(),
            verdicts,
            judgments,
            complete,
            timestamp: (self.clock)(),
        };
        inner.commit(Event::Judged(record.clone()))?;
        Ok(record)
    }

    pub fn human_judgment_records(&self) -> Vec<HumanJudgmentRecord> {
        self.lock().state.judgments.values().cloned().collect()
    }

    /// All recorded judgments, in the record schema the metrics consume.
    pub fn human_judgments(&self) -> Vec<Judgment> {
        self.human_judgment_records()
            .into_iter()
            .flat_map(|r| r.judgments)
            .collect()
    }

    /// A judge answering from the recorded human verdicts.
    pub fn human_judge(&self) -> TableJudge {
        judge_from(&self.human_judgments())
    }

    /// Decomposer returning the subclaims of the loaded judgment tasks, so a
    /// human re-evaluation sees the same subclaims as the automatic one.
    pub fn task_decomposer(&self) -> TableDecomposer {
        let inner = self.lock();
        let mut d = TableDecomposer::default();
        for t in inner.state.tasks.values() {
            if let Some(s) = &t.reference_summary {
                d.insert(s.clone(), t.reference_subclaims.clone());
            }
            if let Some(s) = &t.generated_summary {
                d.insert(s.clone(), t.generated_subclaims.clone());
            }
        }
        d
    }

    pub fn judgment_tasks(&self) -> Vec<JudgmentTask> {
        self.lock().state.tasks.values().cloned().collect()
    }

    /// Every stored event touching `instance`, oldest first.
    pub fn audit_log(&self, instance: &str) -> Result<Vec<Event>, ServiceError> {
        let mut inner = self.lock();
        Ok(inner
            .store
            .load()?
            .into_iter()
            .filter(|e| e.instance_id() == Some(instance))
            .collect())
    }
}

/// A table judge named `human` built from stored judgments. Later entries win.
pub fn judge_from(judgments: &[Judgment]) -> TableJudge {
    let mut judge = TableJudge::new(HUMAN_JUDGE);
    for j in judgments {
        judge.insert(j.premise.clone(), j.hypothesis.clone(), j.verdict);
    }
    judge
}

/// Judgment tasks for every evaluated instance of a run.
pub fn judgment_tasks(
    dataset: &Dataset,
    runs: &[citesum::pipelines::PipelineRun],
    report: &citesum::metrics::EvaluationReport,
) -> Result<Vec<JudgmentTask>, ServiceError> {
    let by_key: HashMap<(&str, AspectCode), &citesum::pipelines::PipelineRun> =
        runs.iter().map(|r| ((r.pmid.as_str(), r.aspect), r)).collect();
    let mut out = Vec::with_capacity(report.instances.len());
    for ev in &report.instances {
        let id = instance_id(&ev.pmid, ev.aspect);
        let inst = dataset
            .instance(&ev.pmid, ev.aspect)
            .ok_or_else(|| ServiceError::UnknownInstance(id.clone()))?;
        let run = by_key
            .get(&(ev.pmid.as_str(), ev.aspect))
            .ok_or_else(|| ServiceError::Invalid(format!("no run output for {id}")))?;
        let output = if run.failed() {
            TraceableSummary::Negative
        } else {
            run.output.clone()
        };
        let cites = |s: &TraceableSummary| s.citations().map(|c| c.iter().copied().collect()).unwrap_or_default();
        out.push(JudgmentTask {
            instance_id: id,
            reference_summary: inst.reference.summary().map(str::to_string),
            generated_summary: output.summary().map(str::to_string),
            reference_subclaims: ev
                .report
                .reference_subclaims
                .iter()
                .map(|v| v.subclaim.clone())
                .collect(),
            generated_subclaims: ev
                .report
                .generated_subclaims
                .iter()
                .map(|v| v.subclaim.clone())
                .collect(),
            reference_citations: cites(&inst.reference),
            generated_citations: cites(&output),
        });
    }
    Ok(out)
}
