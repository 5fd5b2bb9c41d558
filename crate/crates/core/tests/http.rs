use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::thread;
use std::time::Duration;

use epcaw::backend::{Backend, CompletionRequest, HttpBackend, HttpConfig, Purpose};
use epcaw::error::Error;
use epcaw::memory::Agent;

/// Serves the given (status, body) pairs, one per connection, and returns the request bodies.
fn serve(responses: Vec<(u16, String)>) -> (String, thread::JoinHandle<Vec<String>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!(
        "http://{}/v1/chat/completions",
        listener.local_addr().unwrap()
    );
    let handle = thread::spawn(move || {
        let mut bodies = Vec::new();
        for (status, body) in responses {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream);
            let mut length = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
            }
            let mut buf = vec![0; length];
            reader.read_exact(&mut buf).unwrap();
            bodies.push(String::from_utf8(buf).unwrap());
            let reply = format!(
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
            reader.get_mut().write_all(reply.as_bytes()).unwrap();
        }
        bodies
    });
    (url, handle)
}

fn backend(endpoint: String, attempts: u32) -> HttpBackend {
    HttpBackend::new(HttpConfig {
        endpoint,
        model: "test-model".into(),
        api_key_env: "EPCAW_TEST_UNSET_KEY".into(),
        max_attempts: attempts,
        initial_backoff: Duration::from_millis(5),
        max_backoff: Duration::from_millis(20),
        request_timeout: Duration::from_secs(5),
        seed: Some(7),
    })
    .unwrap()
}

fn request() -> CompletionRequest {
    CompletionRequest::new(
        Agent::Planner,
        Purpose::CandidateGeneration,
        1,
        "plan something",
    )
}

const OK: &str = r#"{"choices":[{"message":{"content":"GOAL: x"}}],"usage":{"prompt_tokens":11,"completion_tokens":2}}"#;

#[test]
fn rate_limits_are_retried() {
    let busy = (429, "{}".to_string());
    let (url, server) = serve(vec![busy.clone(), busy.clone(), busy, (200, OK.into())]);
    let r = backend(url, 5).complete(&request()).unwrap();
    assert_eq!(r.text, "GOAL: x");
    assert_eq!((r.prompt_tokens, r.output_tokens), (11, 2));
    let bodies = server.join().unwrap();
    assert_eq!(bodies.len(), 4);
    let body: serde_json::Value = serde_json::from_str(&bodies[0]).unwrap();
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["seed"], 7);
    assert_eq!(body["temperature"], 0.9);
    assert_eq!(body["messages"][0]["content"], "plan something");
}

#[test]
fn exhausted_retries_report_unavailable() {
    let (url, server) = serve(vec![(503, "{}".into()), (503, "{}".into())]);
    let err = backend(url, 2).complete(&request()).unwrap_err();
    assert!(
        matches!(err, Error::BackendUnavailable { attempts: 2, .. }),
        "{err}"
    );
    server.join().unwrap();
}

#[test]
fn client_errors_are_not_retried() {
    let (url, server) = serve(vec![(400, r#"{"error":"bad"}"#.into())]);
    let err = backend(url, 5).complete(&request()).unwrap_err();
    assert!(
        matches!(err, Error::BackendUnavailable { attempts: 1, .. }),
        "{err}"
    );
    server.join().unwrap();
}

#[test]
fn missing_usage_falls_back_to_word_counts() {
    let body = r#"{"choices":[{"message":{"content":"three word reply"}}]}"#;
    let (url, server) = serve(vec![(200, body.into())]);
    let r = backend(url, 1).complete(&request()).unwrap();
    assert_eq!((r.prompt_tokens, r.output_tokens), (2, 3));
    server.join().unwrap();
}
