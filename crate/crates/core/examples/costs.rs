//! Retries, the judgment cache and the cost ledger, driven by a scripted flaky backend.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use citesum::gateway::{
    Backend, BackendSpec, CallError, Completion, CompletionRequest, Gateway, NoSleep, Price, RetryPolicy,
};

/// Fails with a rate-limit error every third call.
struct Flaky {
    calls: AtomicUsize,
}

impl Backend for Flaky {
    fn generate(&self, request: &CompletionRequest) -> Result<Completion, CallError> {
        if self.calls.fetch_add(1, Ordering::SeqCst).is_multiple_of(3) {
            return Err(CallError::Transient("429 too many requests".into()));
        }
        let text = if request.prompt.contains("Hypothesis") {
            "yes"
        } else {
            "A short answer."
        };
        Ok(Completion {
            text: text.into(),
            input_tokens: 1200,
            output_tokens: 40,
        })
    }
}

fn main() -> anyhow::Result<()> {
    let mut gw = Gateway::new(RetryPolicy::default()).with_sleeper(Arc::new(NoSleep));
    let mut spec = BackendSpec::mock("hosted");
    spec.price = Price::new("2.50", "10").map_err(anyhow::Error::msg)?;
    gw.register(
        spec,
        Arc::new(Flaky {
            calls: AtomicUsize::new(0),
        }),
    )?;

    for i in 0..5 {
        println!("completion {i}: {}", gw.complete("hosted", &format!("Question {i}?"))?);
    }
    // Repeated judgments hit the cache, so only the first is billed.
    for _ in 0..3 {
        let j = gw.judge_entailment("hosted", "The sky is blue.", "The sky has a color.")?;
        println!("entailed: {}", j.verdict);
    }
    println!("\ncache entries: {}", gw.cache().len());
    println!("{}", gw.ledger().render());
    Ok(())
}
