use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use citesum::gateway::{
    BackendKind, BackendSpec, ChatCompletionBackend, Gateway, GatewayError, LocalHttpBackend, NoSleep, Price,
    RetryPolicy,
};

#[derive(Debug, Clone)]
struct Seen {
    path: String,
    authorization: Option<String>,
    body: serde_json::Value,
}

/// Answers each connection with the next scripted `(status, body)` and
/// records what it was sent.
fn serve(script: Vec<(u16, &'static str)>) -> (String, Arc<Mutex<Vec<Seen>>>, JoinHandle<()>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&seen);
    let handle = std::thread::spawn(move || {
        for (status, body) in script {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut request_line = String::new();
            reader.read_line(&mut request_line).unwrap();
            let path = request_line.split_whitespace().nth(1).unwrap_or("").to_string();
            let mut length = 0;
            let mut authorization = None;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end();
                if line.is_empty() {
                    break;
                }
                let (name, value) = line.split_once(':').unwrap();
                match name.to_ascii_lowercase().as_str() {
                    "content-length" => length = value.trim().parse().unwrap(),
                    "authorization" => authorization = Some(value.trim().to_string()),
                    _ => {}
                }
            }
            let mut raw = vec![0; length];
            reader.read_exact(&mut raw).unwrap();
            log.lock().unwrap().push(Seen {
                path,
                authorization,
                body: serde_json::from_slice(&raw).unwrap_or(serde_json::Value::Null),
            });
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
    });
    (url, seen, handle)
}

fn spec(name: &str, kind: BackendKind, endpoint: &str) -> BackendSpec {
    BackendSpec {
        kind,
        endpoint: Some(endpoint.to_string()),
        price: Price::new("2", "4").unwrap(),
        ..BackendSpec::mock(name)
    }
}

fn gateway(attempts: u32) -> Gateway {
    Gateway::new(RetryPolicy {
        max_attempts: attempts,
        ..RetryPolicy::default()
    })
    .with_sleeper(Arc::new(NoSleep))
}

const CHAT_OK: &str = r#"{"choices":[{"message":{"content":"Summary: Unknown."}}],"usage":{"prompt_tokens":1000000,"completion_tokens":500000}}"#;

#[test]
fn chat_completion_success_records_usage() {
    let (url, seen, server) = serve(vec![(200, CHAT_OK)]);
    let mut gw = gateway(3);
    let backend = ChatCompletionBackend::new(
        url.clone(),
        "small-model".into(),
        Some("k3y".into()),
        Duration::from_secs(5),
    );
    gw.register(spec("chat", BackendKind::ChatCompletion, &url), Arc::new(backend))
        .unwrap();

    assert_eq!(gw.complete("chat", "Describe it.").unwrap(), "Summary: Unknown.");
    server.join().unwrap();

    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 1);
    assert_eq!(seen[0].path, "/v1/chat/completions");
    assert_eq!(seen[0].authorization.as_deref(), Some("Bearer k3y"));
    assert_eq!(seen[0].body["model"], "small-model");
    assert_eq!(seen[0].body["messages"][0]["content"], "Describe it.");

    let totals = gw.ledger().totals();
    assert_eq!(totals.calls, 1);
    // 1M input tokens at 2/M plus 0.5M output tokens at 4/M.
    assert_eq!(totals.cost.render(2), "4.00");
}

#[test]
fn rate_limited_call_is_retried() {
    let (url, seen, server) = serve(vec![(429, r#"{"error":"slow down"}"#), (503, "{}"), (200, CHAT_OK)]);
    let mut gw = gateway(3);
    let backend = ChatCompletionBackend::new(url.clone(), "m".into(), None, Duration::from_secs(5));
    gw.register(spec("chat", BackendKind::ChatCompletion, &url), Arc::new(backend))
        .unwrap();

    assert_eq!(gw.complete("chat", "p").unwrap(), "Summary: Unknown.");
    server.join().unwrap();
    assert_eq!(seen.lock().unwrap().len(), 3);
    assert!(seen.lock().unwrap()[0].authorization.is_none());
}

#[test]
fn retries_give_up_after_max_attempts() {
    let (url, seen, server) = serve(vec![(429, "{}"), (429, "{}")]);
    let mut gw = gateway(2);
    let backend = ChatCompletionBackend::new(url.clone(), "m".into(), None, Duration::from_secs(5));
    gw.register(spec("chat", BackendKind::ChatCompletion, &url), Arc::new(backend))
        .unwrap();

    let err = gw.complete("chat", "p").unwrap_err();
    server.join().unwrap();
    assert!(
        matches!(err, GatewayError::RetriesExhausted { attempts: 2, .. }),
        "{err:?}"
    );
    assert_eq!(seen.lock().unwrap().len(), 2);
    assert_eq!(gw.ledger().totals().calls, 0);
}

#[test]
fn unauthorized_is_not_retried() {
    let (url, seen, server) = serve(vec![(401, r#"{"error":"bad key"}"#)]);
    let mut gw = gateway(5);
    let backend = ChatCompletionBackend::new(url.clone(), "m".into(), Some("wrong".into()), Duration::from_secs(5));
    gw.register(spec("chat", BackendKind::ChatCompletion, &url), Arc::new(backend))
        .unwrap();

    let err = gw.complete("chat", "p").unwrap_err();
    server.join().unwrap();
    assert!(matches!(err, GatewayError::Auth { .. }), "{err:?}");
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn local_http_native_endpoints() {
    let (url, seen, server) = serve(vec![
        (200, r#"{"entails":true}"#),
        (200, r#"{"score":0.75}"#),
        (200, r#"{"subclaims":["A was given.", "  ", "B improved."]}"#),
    ]);
    let mut gw = gateway(1);
    let backend = LocalHttpBackend::new(url.clone(), Duration::from_secs(5));
    gw.register(spec("local", BackendKind::LocalHttp, &url), Arc::new(backend))
        .unwrap();

    let j = gw
        .judge_entailment("local", "A was given daily.", "A was given.")
        .unwrap();
    assert!(j.verdict);
    // Served from the cache: the script has no fourth response.
    assert!(
        gw.judge_entailment("local", "A was given daily.", "A was given.")
            .unwrap()
            .verdict
    );
    assert_eq!(gw.relevance("local", "dose", "A was given.").unwrap(), 0.75);
    let d = gw.decompose_claims("local", "A was given and B improved.").unwrap();
    assert_eq!(d.subclaims, ["A was given.", "B improved."]);
    assert!(!d.fallback_whole_summary);
    server.join().unwrap();

    let seen = seen.lock().unwrap();
    let paths: Vec<&str> = seen.iter().map(|s| s.path.as_str()).collect();
    assert_eq!(paths, ["/entail", "/score", "/decompose"]);
    assert_eq!(seen[0].body["premise"], "A was given daily.");
    assert_eq!(seen[0].body["hypothesis"], "A was given.");
}

#[test]
fn local_http_bad_score_is_rejected() {
    let (url, _seen, server) = serve(vec![(200, r#"{"score":1.5}"#)]);
    let mut gw = gateway(1);
    gw.register(
        spec("local", BackendKind::LocalHttp, &url),
        Arc::new(LocalHttpBackend::new(url.clone(), Duration::from_secs(5))),
    )
    .unwrap();
    let err = gw.relevance("local", "q", "s").unwrap_err();
    server.join().unwrap();
    assert!(matches!(err, GatewayError::Protocol { .. }), "{err:?}");
}
