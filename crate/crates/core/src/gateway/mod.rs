//! Uniform access to generation, claim-decomposition, relevance and
//! entailment backends.
//!
//! Every backend implements [`Backend::generate`]. Backends that expose a
//! native endpoint for entailment, relevance scoring or decomposition (a
//! local NLI server, the deterministic mock) override the corresponding
//! method; otherwise the [`Gateway`] falls back to prompting the generator.
//!
//! The gateway owns the cross-cutting machinery: retries with capped
//! exponential backoff, per-backend token-bucket rate limits and in-flight
//! caps, the judgment cache and the cost ledger. It is `Send + Sync` and is
//! meant to be shared by reference across worker threads.

mod cache;
mod config;
mod http;
mod ledger;
mod limit;
mod mock;
pub mod parse;
pub mod prompt;
mod retry;
mod roles;

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use cache::{CacheEntry, JudgmentCache};
pub use config::{BackendKind, BackendSpec, GatewayConfig};
pub use http::{ChatCompletionBackend, LocalHttpBackend};
pub use ledger::{CostLedger, LedgerEntry, LedgerTotals, Price};
pub use limit::{InFlightLimiter, TokenBucket};
pub use mock::{content_words, prompt_hash, MockBackend, MockTable};
pub use parse::{parse_generation, parse_subclaims, parse_verdict, ParseError, ParseFlag, ParsedGeneration};
pub use prompt::{DemoBank, Demonstration};
pub use retry::{NoSleep, RetryPolicy, Sleeper, ThreadSleeper};
pub use roles::{
    clean_summary, BackendRef, ClaimDecomposer, EntailmentJudge, Generator, RelevanceTracker, Summarizer,
    TableDecomposer, TableJudge,
};

/// A single generation request.
#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRequest {
    pub prompt: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
}

/// Generated text plus token usage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
}

/// A binary entailment verdict from one judge.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Judgment {
    pub premise: String,
    pub hypothesis: String,
    pub verdict: bool,
    pub judge: String,
}

/// Failure of a single backend call, classified for the retry loop.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CallError {
    /// Worth retrying: timeouts, connection resets, 429 and 5xx.
    #[error("transient: {0}")]
    Transient(String),
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("{0}")]
    Fatal(String),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GatewayError {
    #[error("unknown backend `{0}`")]
    UnknownBackend(String),
    #[error("backend `{backend}`: gave up after {attempts} attempts: {last}")]
    RetriesExhausted {
        backend: String,
        attempts: u32,
        last: String,
    },
    #[error("backend `{backend}`: authentication failed: {message}")]
    Auth { backend: String, message: String },
    #[error("backend `{backend}`: deadline exceeded after {attempts} attempts")]
    DeadlineExceeded { backend: String, attempts: u32 },
    #[error("backend `{backend}`: {message}")]
    Backend { backend: String, message: String },
    #[error("backend `{backend}`: unusable output: {message}")]
    Protocol { backend: String, message: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("configuration: {0}")]
    Config(String),
}

/// A model endpoint.
pub trait Backend: Send + Sync {
    fn generate(&self, request: &CompletionRequest) -> Result<Completion, CallError>;

    /// Native entailment endpoint. `None` means "prompt the generator".
    fn entail(&self, _premise: &str, _hypothesis: &str) -> Option<Result<bool, CallError>> {
        None
    }

    /// Native relevance endpoint returning a score in `[0, 1]`.
    fn score(&self, _query: &str, _sentence: &str) -> Option<Result<f64, CallError>> {
        None
    }

    /// Native claim decomposition endpoint.
    fn decompose(&self, _summary: &str) -> Option<Result<Vec<String>, CallError>> {
        None
    }
}

/// Subclaims of one summary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decomposition {
    pub subclaims: Vec<String>,
    /// The backend returned nothing usable; the whole summary stands in as one subclaim.
    pub fallback_whole_summary: bool,
}

struct Slot {
    spec: BackendSpec,
    backend: Arc<dyn Backend>,
    bucket: Option<TokenBucket>,
    in_flight: Option<InFlightLimiter>,
}

/// Shared entry point to all configured backends.
pub struct Gateway {
    slots: HashMap<String, Slot>,
    retry: RetryPolicy,
    sleeper: Arc<dyn Sleeper>,
    ledger: CostLedger,
    cache: JudgmentCache,
}

impl Gateway {
    pub fn new(retry: RetryPolicy) -> Self {
        Gateway {
            slots: HashMap::new(),
            retry,
            sleeper: Arc::new(ThreadSleeper),
            ledger: CostLedger::default(),
            cache: JudgmentCache::default(),
        }
    }

    /// Builds every backend declared in `config`.
    pub fn from_config(config: &GatewayConfig) -> Result<Self, GatewayError> {
        let mut gw = Gateway::new(config.retry.clone());
        for spec in &config.backends {
            let backend = config::build_backend(spec)?;
            gw.register(spec.clone(), backend)?;
        }
        Ok(gw)
    }

    /// A gateway with a single deterministic mock backend named `mock`.
    pub fn with_default_mock() -> Self {
        let mut gw = Gateway::new(RetryPolicy::default());
        gw.register(
            BackendSpec::mock("mock"),
            Arc::new(MockBackend::new(MockTable::default())),
        )
        .expect("valid mock spec");
        gw
    }

    pub fn with_sleeper(mut self, sleeper: Arc<dyn Sleeper>) -> Self {
        self.sleeper = sleeper;
        self
    }

    pub fn with_cache(mut self, cache: JudgmentCache) -> Self {
        self.cache = cache;
        self
    }

    pub fn register(&mut self, spec: BackendSpec, backend: Arc<dyn Backend>) -> Result<(), GatewayError> {
        spec.validate()?;
        let slot = Slot {
            bucket: spec.requests_per_minute.map(TokenBucket::per_minute),
            in_flight: spec.max_in_flight.map(InFlightLimiter::new),
            spec,
            backend,
        };
        self.slots.insert(slot.spec.name.clone(), slot);
        Ok(())
    }

    pub fn spec(&self, name: &str) -> Option<&BackendSpec> {
        self.slots.get(name).map(|s| &s.spec)
    }

    pub fn backend_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.slots.keys().cloned().collect();
        names.sort();
        names
    }

    pub fn ledger(&self) -> &CostLedger {
        &self.ledger
    }

    pub fn cache(&self) -> &JudgmentCache {
        &self.cache
    }

    fn slot(&self, name: &str) -> Result<&Slot, GatewayError> {
        self.slots
            .get(name)
            .ok_or_else(|| GatewayError::UnknownBackend(name.to_string()))
    }

    /// Generates text at the backend's configured temperature.
    pub fn complete(&self, backend: &str, prompt: &str) -> Result<String, GatewayError> {
        let slot = self.slot(backend)?;
        let request = CompletionRequest {
            prompt: prompt.to_string(),
            temperature: slot.spec.temperature,
            max_output_tokens: slot.spec.max_output_tokens,
        };
        Ok(self.complete_request(backend, &request)?.text)
    }

    pub fn complete_request(&self, backend: &str, request: &CompletionRequest) -> Result<Completion, GatewayError> {
        let slot = self.slot(backend)?;
        let completion = self.call(slot, |b| b.generate(request))?;
        self.ledger.record(
            backend,
            &slot.spec.price,
            completion.input_tokens,
            completion.output_tokens,
        );
        Ok(completion)
    }

    /// Entailment verdict `judge(premise, hypothesis)`, cached per run.
    pub fn judge_entailment(&self, judge: &str, premise: &str, hypothesis: &str) -> Result<Judgment, GatewayError> {
        if premise.trim().is_empty() || hypothesis.trim().is_empty() {
            return Err(GatewayError::InvalidRequest(
                "premise and hypothesis must be non-empty".into(),
            ));
        }
        let slot = self.slot(judge)?;
        let verdict = self.cache.get_or_try_insert(judge, premise, hypothesis, || {
            match self.call_opt(slot, |b| b.entail(premise, hypothesis)) {
                Some(result) => {
                    let v = result?;
                    self.ledger.record(
                        judge,
                        &slot.spec.price,
                        approx_tokens(premise) + approx_tokens(hypothesis),
                        1,
                    );
                    Ok(v)
                }
                None => {
                    let request = CompletionRequest {
                        prompt: prompt::render_entailment_prompt(premise, hypothesis),
                        temperature: 0.0,
                        max_output_tokens: 1,
                    };
                    let completion = self.complete_request(judge, &request)?;
                    parse::parse_verdict(&completion.text).ok_or_else(|| GatewayError::Protocol {
                        backend: judge.to_string(),
                        message: format!("expected yes/no, got {:?}", completion.text),
                    })
                }
            }
        })?;
        Ok(Judgment {
            premise: premise.to_string(),
            hypothesis: hypothesis.to_string(),
            verdict,
            judge: judge.to_string(),
        })
    }

    /// Splits a summary into atomic subclaims, preserving order.
    pub fn decompose_claims(&self, decomposer: &str, summary: &str) -> Result<Decomposition, GatewayError> {
        if summary.trim().is_empty() {
            return Err(GatewayError::InvalidRequest("cannot decompose an empty summary".into()));
        }
        let slot = self.slot(decomposer)?;
        let claims = match self.call_opt(slot, |b| b.decompose(summary)) {
            Some(result) => {
                let claims = result?;
                self.ledger.record(
                    decomposer,
                    &slot.spec.price,
                    approx_tokens(summary),
                    claims.iter().map(|c| approx_tokens(c)).sum(),
                );
                claims
            }
            None => {
                let request = CompletionRequest {
                    prompt: prompt::render_decomposition_prompt(summary),
                    temperature: 0.0,
                    max_output_tokens: slot.spec.max_output_tokens,
                };
                parse::parse_subclaims(&self.complete_request(decomposer, &request)?.text)
            }
        };
        let claims: Vec<String> = claims
            .into_iter()
            .map(|c| c.trim().to_string())
            .filter(|c| !c.is_empty())
            .collect();
        if claims.is_empty() {
            return Ok(Decomposition {
                subclaims: vec![summary.trim().to_string()],
                fallback_whole_summary: true,
            });
        }
        Ok(Decomposition {
            subclaims: claims,
            fallback_whole_summary: false,
        })
    }

    /// Relevance of `sentence` to `query` in `[0, 1]`.
    pub fn relevance(&self, tracker: &str, query: &str, sentence: &str) -> Result<f64, GatewayError> {
        let slot = self.slot(tracker)?;
        let score = match self.call_opt(slot, |b| b.score(query, sentence)) {
            Some(result) => {
                let s = result?;
                self.ledger.record(
                    tracker,
                    &slot.spec.price,
                    approx_tokens(query) + approx_tokens(sentence),
                    1,
                );
                s
            }
            None => {
                let request = CompletionRequest {
                    prompt: prompt::render_relevance_prompt(query, sentence),
                    temperature: 0.0,
                    max_output_tokens: 1,
                };
                let text = self.complete_request(tracker, &request)?.text;
                match parse::parse_verdict(&text) {
                    Some(true) => 1.0,
                    Some(false) => 0.0,
                    None => {
                        return Err(GatewayError::Protocol {
                            backend: tracker.to_string(),
                            message: format!("expected yes/no, got {text:?}"),
                        })
                    }
                }
            }
        };
        if !(0.0..=1.0).contains(&score) {
            return Err(GatewayError::Protocol {
                backend: tracker.to_string(),
                message: format!("relevance {score} outside [0, 1]"),
            });
        }
        Ok(score)
    }

    fn call<T>(&self, slot: &Slot, f: impl Fn(&dyn Backend) -> Result<T, CallError>) -> Result<T, GatewayError> {
        self.call_opt(slot, |b| Some(f(b)))
            .expect("closure always returns Some")
    }

    /// Runs `f` under the slot's limits and retry policy. `None` from the
    /// first attempt means the capability is not native to this backend.
    fn call_opt<T>(
        &self,
        slot: &Slot,
        f: impl Fn(&dyn Backend) -> Option<Result<T, CallError>>,
    ) -> Option<Result<T, GatewayError>> {
        let name = &slot.spec.name;
        let started = Instant::now();
        let mut attempt = 0u32;
        loop {
            if let Some(bucket) = &slot.bucket {
                bucket.acquire(self.sleeper.as_ref());
            }
            let outcome = {
                let _permit = slot.in_flight.as_ref().map(InFlightLimiter::acquire);
                f(slot.backend.as_ref())
            }?;
            attempt += 1;
            let err = match outcome {
                Ok(v) => return Some(Ok(v)),
                Err(CallError::Auth(message)) => {
                    return Some(Err(GatewayError::Auth {
                        backend: name.clone(),
                        message,
                    }))
                }
                Err(CallError::Fatal(message)) => {
                    return Some(Err(GatewayError::Backend {
                        backend: name.clone(),
                        message,
                    }))
                }
                Err(CallError::Transient(message)) => message,
            };
            if attempt >= self.retry.max_attempts {
                return Some(Err(GatewayError::RetriesExhausted {
                    backend: name.clone(),
                    attempts: attempt,
                    last: err,
                }));
            }
            let delay = self.retry.delay_for(attempt - 1);
            if let Some(deadline) = self.retry.deadline {
                if self.sleeper.elapsed_since(started) + delay > deadline {
                    return Some(Err(GatewayError::DeadlineExceeded {
                        backend: name.clone(),
                        attempts: attempt,
                    }));
                }
            }
            self.sleeper.sleep(delay);
        }
    }
}

/// Whitespace token estimate used when a backend does not report usage.
pub fn approx_tokens(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU32, Ordering};
    use std::sync::Mutex;
    use std::time::Duration;

    struct Flaky {
        failures: u32,
        calls: AtomicU32,
        error: CallError,
    }

    impl Backend for Flaky {
        fn generate(&self, request: &CompletionRequest) -> Result<Completion, CallError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.failures {
                return Err(self.error.clone());
            }
            Ok(Completion {
                text: format!("ok:{}", request.prompt),
                input_tokens: 10,
                output_tokens: 2,
            })
        }
    }

    #[derive(Default)]
    struct Recorder(Mutex<Vec<Duration>>);

    impl Sleeper for Recorder {
        fn sleep(&self, d: Duration) {
            self.0.lock().unwrap().push(d);
        }
    }

    fn gateway_with(backend: Arc<dyn Backend>, retry: RetryPolicy) -> (Gateway, Arc<Recorder>) {
        let rec = Arc::new(Recorder::default());
        let mut gw = Gateway::new(retry).with_sleeper(rec.clone());
        gw.register(BackendSpec::mock("b"), backend).unwrap();
        (gw, rec)
    }

    fn policy(max_attempts: u32) -> RetryPolicy {
        RetryPolicy {
            max_attempts,
            base_delay: Duration::from_millis(100),
            max_delay: Duration::from_millis(250),
            deadline: None,
        }
    }

    #[test]
    fn retries_transient_with_capped_backoff() {
        let b = Arc::new(Flaky {
            failures: 3,
            calls: AtomicU32::new(0),
            error: CallError::Transient("503".into()),
        });
        let (gw, rec) = gateway_with(b.clone(), policy(5));
        assert_eq!(gw.complete("b", "hi").unwrap(), "ok:hi");
        assert_eq!(b.calls.load(Ordering::SeqCst), 4);
        let delays: Vec<u64> = rec.0.lock().unwrap().iter().map(|d| d.as_millis() as u64).collect();
        assert_eq!(delays, vec![100, 200, 250]);
    }

    #[test]
    fn exhausted_retries() {
        let b = Arc::new(Flaky {
            failures: 10,
            calls: AtomicU32::new(0),
            error: CallError::Transient("timeout".into()),
        });
        let (gw, _) = gateway_with(b.clone(), policy(3));
        let err = gw.complete("b", "x").unwrap_err();
        assert!(matches!(err, GatewayError::RetriesExhausted { attempts: 3, .. }));
        assert_eq!(gw.ledger().totals().calls, 0);
    }

    #[test]
    fn auth_failure_is_not_retried() {
        let b = Arc::new(Flaky {
            failures: 10,
            calls: AtomicU32::new(0),
            error: CallError::Auth("401".into()),
        });
        let (gw, _) = gateway_with(b.clone(), policy(5));
        assert!(matches!(gw.complete("b", "x"), Err(GatewayError::Auth { .. })));
        assert_eq!(b.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn deadline_exceeded() {
        let b = Arc::new(Flaky {
            failures: 10,
            calls: AtomicU32::new(0),
            error: CallError::Transient("busy".into()),
        });
        let mut retry = policy(10);
        retry.deadline = Some(Duration::from_millis(50));
        let (gw, _) = gateway_with(b, retry);
        assert!(matches!(
            gw.complete("b", "x"),
            Err(GatewayError::DeadlineExceeded { attempts: 1, .. })
        ));
    }

    #[test]
    fn unknown_backend() {
        let gw = Gateway::with_default_mock();
        assert_eq!(
            gw.complete("nope", "x"),
            Err(GatewayError::UnknownBackend("nope".into()))
        );
    }

    #[test]
    fn judge_identity_and_disjoint_under_mock() {
        let gw = Gateway::with_default_mock();
        let s = "27 participants were assigned to radiation therapy.";
        assert!(gw.judge_entailment("mock", s, s).unwrap().verdict);
        assert!(
            !gw.judge_entailment("mock", "Melanoma recurred in the scalp.", "Tea is brewed hot.")
                .unwrap()
                .verdict
        );
    }

    #[test]
    fn judgment_cache_bills_once() {
        let gw = Gateway::with_default_mock();
        let a = gw.judge_entailment("mock", "p text", "h text").unwrap();
        let b = gw.judge_entailment("mock", "p text", "h text").unwrap();
        assert_eq!(a, b);
        assert_eq!(gw.ledger().totals().calls, 1);
        assert_eq!(gw.cache().len(), 1);
    }

    #[test]
    fn empty_judge_inputs_rejected() {
        let gw = Gateway::with_default_mock();
        assert!(matches!(
            gw.judge_entailment("mock", "", "h"),
            Err(GatewayError::InvalidRequest(_))
        ));
    }

    struct Chatty(&'static str);
    impl Backend for Chatty {
        fn generate(&self, _: &CompletionRequest) -> Result<Completion, CallError> {
            Ok(Completion {
                text: self.0.into(),
                input_tokens: 5,
                output_tokens: 1,
            })
        }
    }

    #[test]
    fn prompted_judge_parses_yes_no() {
        let mut gw = Gateway::new(policy(1));
        gw.register(BackendSpec::mock("yes"), Arc::new(Chatty("Yes."))).unwrap();
        gw.register(BackendSpec::mock("junk"), Arc::new(Chatty("perhaps")))
            .unwrap();
        assert!(gw.judge_entailment("yes", "p", "h").unwrap().verdict);
        assert!(matches!(
            gw.judge_entailment("junk", "p", "h"),
            Err(GatewayError::Protocol { .. })
        ));
    }

    #[test]
    fn prompted_decomposition_and_empty_fallback() {
        let mut gw = Gateway::new(policy(1));
        gw.register(
            BackendSpec::mock("list"),
            Arc::new(Chatty("- A fact.\n- Another fact.")),
        )
        .unwrap();
        gw.register(BackendSpec::mock("empty"), Arc::new(Chatty("  "))).unwrap();
        let d = gw.decompose_claims("list", "A fact and another.").unwrap();
        assert_eq!(d.subclaims, vec!["A fact.", "Another fact."]);
        assert!(!d.fallback_whole_summary);
        let d = gw.decompose_claims("empty", "Single fact.").unwrap();
        assert_eq!(d.subclaims, vec!["Single fact."]);
        assert!(d.fallback_whole_summary);
    }

    #[test]
    fn prompted_relevance_maps_yes_no() {
        let mut gw = Gateway::new(policy(1));
        gw.register(BackendSpec::mock("yes"), Arc::new(Chatty("yes"))).unwrap();
        assert_eq!(gw.relevance("yes", "q", "s").unwrap(), 1.0);
    }
}
