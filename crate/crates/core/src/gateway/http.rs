//! Blocking HTTP adapters.
//!
//! `ChatCompletionBackend` speaks the OpenAI-compatible
//! `POST {endpoint}/v1/chat/completions` protocol. `LocalHttpBackend` talks to
//! an out-of-process model server exposing:
//!
//! | route        | request                                   | response                   |
//! |--------------|-------------------------------------------|----------------------------|
//! | `/generate`  | `{prompt, temperature, max_tokens}`        | `{text, input_tokens?, output_tokens?}` |
//! | `/entail`    | `{premise, hypothesis}`                   | `{entails}`                |
//! | `/score`     | `{query, sentence}`                       | `{score}`                  |
//! | `/decompose` | `{summary}`                               | `{subclaims}`              |

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;
use ureq::Agent;

use super::{approx_tokens, Backend, CallError, Completion, CompletionRequest};

fn agent(timeout: Duration) -> Agent {
    let config = Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(false)
        .build();
    Agent::new_with_config(config)
}

fn classify_status(status: u16, body: &str) -> CallError {
    let msg = format!("HTTP {status}: {}", body.chars().take(200).collect::<String>());
    match status {
        401 | 403 => CallError::Auth(msg),
        408 | 429 | 500..=599 => CallError::Transient(msg),
        _ => CallError::Fatal(msg),
    }
}

fn classify_transport(err: ureq::Error) -> CallError {
    match err {
        ureq::Error::Timeout(_)
        | ureq::Error::Io(_)
        | ureq::Error::ConnectionFailed
        | ureq::Error::HostNotFound
        | ureq::Error::BodyStalled => CallError::Transient(err.to_string()),
        other => CallError::Fatal(other.to_string()),
    }
}

fn post_json<T: DeserializeOwned>(
    agent: &Agent,
    url: &str,
    bearer: Option<&str>,
    body: &serde_json::Value,
) -> Result<T, CallError> {
    let mut request = agent.post(url).header("content-type", "application/json");
    if let Some(token) = bearer {
        request = request.header("authorization", format!("Bearer {token}"));
    }
    let mut response = request.send_json(body).map_err(classify_transport)?;
    let status = response.status().as_u16();
    let text = response.body_mut().read_to_string().map_err(classify_transport)?;
    if !(200..300).contains(&status) {
        return Err(classify_status(status, &text));
    }
    serde_json::from_str(&text).map_err(|e| CallError::Fatal(format!("malformed response from {url}: {e}")))
}

fn join(endpoint: &str, path: &str) -> String {
    format!("{}{}", endpoint.trim_end_matches('/'), path)
}

pub struct ChatCompletionBackend {
    endpoint: String,
    model: String,
    api_key: Option<String>,
    agent: Agent,
}

impl std::fmt::Debug for ChatCompletionBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ChatCompletionBackend")
            .field("endpoint", &self.endpoint)
            .field("model", &self.model)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .finish()
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
    #[serde(default)]
    usage: Option<ChatUsage>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct ChatUsage {
    prompt_tokens: u64,
    completion_tokens: u64,
}

impl ChatCompletionBackend {
    pub fn new(endpoint: String, model: String, api_key: Option<String>, timeout: Duration) -> Self {
        ChatCompletionBackend {
            endpoint,
            model,
            api_key,
            agent: agent(timeout),
        }
    }
}

impl Backend for ChatCompletionBackend {
    fn generate(&self, request: &CompletionRequest) -> Result<Completion, CallError> {
        let body = json!({
            "model": self.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        });
        let url = join(&self.endpoint, "/v1/chat/completions");
        let response: ChatResponse = post_json(&self.agent, &url, self.api_key.as_deref(), &body)?;
        let text = response
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| CallError::Fatal("response has no choices".into()))?;
        let (input_tokens, output_tokens) = match response.usage {
            Some(u) => (u.prompt_tokens, u.completion_tokens),
            None => (approx_tokens(&request.prompt), approx_tokens(&text)),
        };
        Ok(Completion {
            text,
            input_tokens,
            output_tokens,
        })
    }
}

#[derive(Debug)]
pub struct LocalHttpBackend {
    endpoint: String,
    agent: Agent,
}

#[derive(Serialize, Deserialize)]
struct GenerateResponse {
    text: String,
    #[serde(default)]
    input_tokens: Option<u64>,
    #[serde(default)]
    output_tokens: Option<u64>,
}

#[derive(Deserialize)]
struct EntailResponse {
    entails: bool,
}

#[derive(Deserialize)]
struct ScoreResponse {
    score: f64,
}

#[derive(Deserialize)]
struct DecomposeResponse {
    subclaims: Vec<String>,
}

impl LocalHttpBackend {
    pub fn new(endpoint: String, timeout: Duration) -> Self {
        LocalHttpBackend {
            endpoint,
            agent: agent(timeout),
        }
    }

    fn post<T: DeserializeOwned>(&self, path: &str, body: serde_json::Value) -> Result<T, CallError> {
        post_json(&self.agent, &join(&self.endpoint, path), None, &body)
    }
}

impl Backend for LocalHttpBackend {
    fn generate(&self, request: &CompletionRequest) -> Result<Completion, CallError> {
        let r: GenerateResponse = self.post(
            "/generate",
            json!({
                "prompt": request.prompt,
                "temperature": request.temperature,
                "max_tokens": request.max_output_tokens,
            }),
        )?;
        Ok(Completion {
            input_tokens: r.input_tokens.unwrap_or_else(|| approx_tokens(&request.prompt)),
            output_tokens: r.output_tokens.unwrap_or_else(|| approx_tokens(&r.text)),
            text: r.text,
        })
    }

    fn entail(&self, premise: &str, hypothesis: &str) -> Option<Result<bool, CallError>> {
        Some(
            self.post::<EntailResponse>("/entail", json!({"premise": premise, "hypothesis": hypothesis}))
                .map(|r| r.entails),
        )
    }

    fn score(&self, query: &str, sentence: &str) -> Option<Result<f64, CallError>> {
        Some(
            self.post::<ScoreResponse>("/score", json!({"query": query, "sentence": sentence}))
                .map(|r| r.score),
        )
    }

    fn decompose(&self, summary: &str) -> Option<Result<Vec<String>, CallError>> {
        Some(
            self.post::<DecomposeResponse>("/decompose", json!({"summary": summary}))
                .map(|r| r.subclaims),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_classes() {
        assert!(matches!(classify_status(401, ""), CallError::Auth(_)));
        assert!(matches!(classify_status(403, ""), CallError::Auth(_)));
        assert!(matches!(classify_status(429, ""), CallError::Transient(_)));
        assert!(matches!(classify_status(503, ""), CallError::Transient(_)));
        assert!(matches!(classify_status(400, ""), CallError::Fatal(_)));
    }

    #[test]
    fn unreachable_host_is_transient() {
        let b = LocalHttpBackend::new("http://127.0.0.1:9".into(), Duration::from_secs(2));
        let err = b
            .generate(&CompletionRequest {
                prompt: "x".into(),
                temperature: 0.0,
                max_output_tokens: 1,
            })
            .unwrap_err();
        assert!(matches!(err, CallError::Transient(_)), "{err:?}");
    }

    #[test]
    fn api_key_is_redacted_in_debug() {
        let b = ChatCompletionBackend::new(
            "http://x".into(),
            "m".into(),
            Some("sekrit".into()),
            Duration::from_secs(1),
        );
        assert!(!format!("{b:?}").contains("sekrit"));
    }
}
