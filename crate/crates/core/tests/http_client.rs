//! HTTP backend tests against a minimal in-process server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use fliplab_core::inference::{ClientParams, CompletionRequest, HttpConfig, ModelClient};

/// Serve `responses` in order, one per connection, then stop. Returns the
/// endpoint URL and the received request bodies.
fn serve(
    responses: Vec<(u16, String)>,
) -> (String, std::thread::JoinHandle<Vec<String>>, Arc<AtomicUsize>) {
    let listener = TcpListener::bind("127.0.0.1:0").expect("bind");
    let addr = listener.local_addr().unwrap();
    let hits = Arc::new(AtomicUsize::new(0));
    let hits_in_thread = hits.clone();
    let handle = std::thread::spawn(move || {
        let mut bodies = Vec::new();
        for (status, body) in responses {
            let (stream, _) = listener.accept().expect("accept");
            hits_in_thread.fetch_add(1, Ordering::SeqCst);
            bodies.push(handle_connection(stream, status, &body));
        }
        bodies
    });
    (format!("http://{addr}/v1/chat/completions"), handle, hits)
}

fn handle_connection(mut stream: TcpStream, status: u16, body: &str) -> String {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut content_length = 0usize;
    loop {
        let mut line = String::new();
        reader.read_line(&mut line).unwrap();
        let trimmed = line.trim_end();
        if let Some(value) = trimmed
            .to_ascii_lowercase()
            .strip_prefix("content-length:")
            .map(str::trim)
            .map(String::from)
        {
            content_length = value.parse().unwrap_or(0);
        }
        if trimmed.is_empty() {
            break;
        }
    }
    let mut request_body = vec![0u8; content_length];
    reader.read_exact(&mut request_body).unwrap();

    let reason = if status == 200 { "OK" } else { "Error" };
    let response = format!(
        "HTTP/1.1 {status} {reason}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
        body.len()
    );
    stream.write_all(response.as_bytes()).unwrap();
    stream.flush().unwrap();
    String::from_utf8_lossy(&request_body).into_owned()
}

fn chat_body(content: &str) -> String {
    serde_json::json!({"choices": [{"message": {"role": "assistant", "content": content}}]})
        .to_string()
}

fn fast_params() -> ClientParams {
    ClientParams {
        temperature: 0.0,
        max_tokens: 64,
        request_timeout: Duration::from_secs(5),
        retries: 3,
    }
}

#[test]
fn http_backend_round_trips_the_wire_format() {
    let (endpoint, server, _) = serve(vec![(200, chat_body("Paris."))]);
    let client = ModelClient::http(HttpConfig::new(endpoint, "demo-model")).with_params(fast_params());
    let completion = client
        .complete(
            &CompletionRequest {
                id: "q1".to_string(),
                prompt: "What is the capital of France?".to_string(),
            },
            None,
        )
        .unwrap();
    assert_eq!(completion.text, "Paris.");
    assert_eq!(completion.attempt_count, 1);

    let bodies = server.join().unwrap();
    let sent: serde_json::Value = serde_json::from_str(&bodies[0]).unwrap();
    assert_eq!(sent["model"], "demo-model");
    assert_eq!(sent["messages"][0]["role"], "user");
    assert_eq!(sent["messages"][0]["content"], "What is the capital of France?");
    assert_eq!(sent["temperature"], 0.0);
    assert_eq!(sent["max_tokens"], 64);
}

#[test]
fn http_backend_retries_server_errors() {
    let (endpoint, server, hits) = serve(vec![
        (500, "{}".to_string()),
        (503, "{}".to_string()),
        (200, chat_body("recovered")),
    ]);
    let mut config = HttpConfig::new(endpoint, "demo-model");
    config.backoff_start = Duration::from_millis(5);
    let client = ModelClient::http(config).with_params(fast_params());
    let completion = client
        .complete(
            &CompletionRequest {
                id: "q1".to_string(),
                prompt: "hello".to_string(),
            },
            None,
        )
        .unwrap();
    assert_eq!(completion.text, "recovered");
    assert_eq!(completion.attempt_count, 3);
    server.join().unwrap();
    assert_eq!(hits.load(Ordering::SeqCst), 3);
}

#[test]
fn http_backend_fails_fast_on_client_errors() {
    let (endpoint, server, hits) = serve(vec![(401, "{\"error\": \"bad key\"}".to_string())]);
    let mut config = HttpConfig::new(endpoint, "demo-model");
    config.backoff_start = Duration::from_millis(5);
    let client = ModelClient::http(config).with_params(fast_params());
    let err = client
        .complete(
            &CompletionRequest {
                id: "q1".to_string(),
                prompt: "hello".to_string(),
            },
            None,
        )
        .unwrap_err();
    assert!(err.to_string().contains("q1"), "error must carry the request id: {err}");
    server.join().unwrap();
    assert_eq!(hits.load(Ordering::SeqCst), 1, "4xx must not be retried");
}

#[test]
fn http_backend_exhausts_retries_with_request_id() {
    let (endpoint, server, hits) = serve(vec![
        (500, "{}".to_string()),
        (500, "{}".to_string()),
        (500, "{}".to_string()),
    ]);
    let mut config = HttpConfig::new(endpoint, "demo-model");
    config.backoff_start = Duration::from_millis(2);
    let client = ModelClient::http(config).with_params(fast_params());
    let err = client
        .complete(
            &CompletionRequest {
                id: "poisoned".to_string(),
                prompt: "hello".to_string(),
            },
            None,
        )
        .unwrap_err();
    assert!(err.to_string().contains("poisoned"));
    server.join().unwrap();
    assert_eq!(hits.load(Ordering::SeqCst), 3);
}

#[test]
fn credential_env_var_is_read_and_sent() {
    let (endpoint, server, _) = serve(vec![(200, chat_body("ok"))]);
    let mut config = HttpConfig::new(endpoint, "demo-model");
    config.credential_env = Some("FLIPLAB_TEST_CREDENTIAL".to_string());
    std::env::set_var("FLIPLAB_TEST_CREDENTIAL", "secret-token");
    let client = ModelClient::http(config).with_params(fast_params());
    client
        .complete(
            &CompletionRequest {
                id: "q1".to_string(),
                prompt: "hello".to_string(),
            },
            None,
        )
        .unwrap();
    server.join().unwrap();

    let missing = HttpConfig {
        endpoint: "http://127.0.0.1:9".to_string(),
        model: "demo".to_string(),
        credential_env: Some("FLIPLAB_TEST_CREDENTIAL_MISSING".to_string()),
        backoff_start: Duration::from_millis(1),
    };
    let client = ModelClient::http(missing).with_params(fast_params());
    let err = client
        .complete(
            &CompletionRequest {
                id: "q2".to_string(),
                prompt: "hello".to_string(),
            },
            None,
        )
        .unwrap_err();
    assert!(err.to_string().contains("FLIPLAB_TEST_CREDENTIAL_MISSING"));
}

#[test]
fn transcript_logs_requests_and_responses() {
    let dir = tempfile::tempdir().unwrap();
    let transcript_path = dir.path().join("run.transcript.jsonl");
    let client = ModelClient::scripted(vec!["alpha".to_string(), "beta".to_string()])
        .with_transcript(&transcript_path)
        .unwrap();
    for (id, prompt) in [("a", "first prompt"), ("b", "second prompt")] {
        client
            .complete(
                &CompletionRequest {
                    id: id.to_string(),
                    prompt: prompt.to_string(),
                },
                None,
            )
            .unwrap();
    }
    let text = std::fs::read_to_string(&transcript_path).unwrap();
    let lines: Vec<serde_json::Value> = text
        .lines()
        .map(|line| serde_json::from_str(line).unwrap())
        .collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["request_id"], "a");
    assert_eq!(lines[0]["response"], "alpha");
    assert_eq!(lines[1]["prompt"], "second prompt");
}
