//! Model clients: a chat-completion-style HTTP backend plus deterministic
//! local mocks, with bounded-concurrency batching and retries.
//!
//! Every evaluation and the counterfactual protocol go through
//! [`ModelClient`], so a scripted or oracle backend can stand in for a real
//! model anywhere. Mocks are deterministic; the gold and flip oracles answer
//! from a gold-answer lookup keyed by request id.

use std::collections::{HashMap, VecDeque};
use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{flip, FlipKind};

/// Decoding and transport parameters attached to a client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientParams {
    pub temperature: f64,
    pub max_tokens: u32,
    pub request_timeout: Duration,
    pub retries: u32,
}

impl Default for ClientParams {
    fn default() -> Self {
        // Temperature 0 for evaluation calls; decoding parameters are
        // surfaced in every report header because the choice is ours,
        // not a reported one.
        ClientParams {
            temperature: 0.0,
            max_tokens: 512,
            request_timeout: Duration::from_secs(30),
            retries: 3,
        }
    }
}

/// Remote endpoint configuration for the HTTP backend. The credential is
/// read from the named environment variable at request time and never
/// persisted.
#[derive(Debug, Clone)]
pub struct HttpConfig {
    pub endpoint: String,
    pub model: String,
    pub credential_env: Option<String>,
    pub backoff_start: Duration,
}

impl HttpConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        HttpConfig {
            endpoint: endpoint.into(),
            model: model.into(),
            credential_env: None,
            backoff_start: Duration::from_secs(1),
        }
    }
}

/// Where completions come from.
pub enum Backend {
    /// Chat-completion-style HTTP endpoint.
    Http(HttpConfig),
    /// Returns the prompt's final question verbatim.
    Echo,
    /// Returns the gold answer for the request id.
    GoldOracle,
    /// Returns the flipped gold answer for the request id.
    FlipOracle(FlipKind),
    /// Pops pre-queued responses in order.
    Scripted(Mutex<VecDeque<String>>),
}

/// One prompt to complete, identified so oracles and transcripts can key on
/// it.
#[derive(Debug, Clone)]
pub struct CompletionRequest {
    pub id: String,
    pub prompt: String,
}

/// A successful model response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Completion {
    pub request_id: String,
    pub text: String,
    #[serde(skip)]
    pub latency: Duration,
    pub attempt_count: u32,
}

/// Gold answers keyed by request id, consumed by the oracle backends.
pub type GoldLookup = HashMap<String, String>;

/// A shareable model client. Per-request state is isolated; the scripted
/// queue is the only interior mutability.
pub struct ModelClient {
    pub backend: Backend,
    pub params: ClientParams,
    transcript: Option<Mutex<TranscriptWriter>>,
}

impl ModelClient {
    fn new(backend: Backend) -> Self {
        ModelClient {
            backend,
            params: ClientParams::default(),
            transcript: None,
        }
    }

    pub fn http(config: HttpConfig) -> Self {
        Self::new(Backend::Http(config))
    }

    pub fn echo() -> Self {
        Self::new(Backend::Echo)
    }

    pub fn gold_oracle() -> Self {
        Self::new(Backend::GoldOracle)
    }

    pub fn flip_oracle(kind: FlipKind) -> Self {
        Self::new(Backend::FlipOracle(kind))
    }

    pub fn scripted(responses: Vec<String>) -> Self {
        Self::new(Backend::Scripted(Mutex::new(responses.into())))
    }

    pub fn with_params(mut self, params: ClientParams) -> Self {
        self.params = params;
        self
    }

    /// Log every request/response pair to a line-delimited transcript file.
    pub fn with_transcript(mut self, path: impl Into<PathBuf>) -> Result<Self> {
        self.transcript = Some(Mutex::new(TranscriptWriter::create(path.into())?));
        Ok(self)
    }

    pub fn transcript_path(&self) -> Option<PathBuf> {
        self.transcript
            .as_ref()
            .map(|t| t.lock().expect("transcript lock").path.clone())
    }

    /// Short descriptor for report headers.
    pub fn label(&self) -> String {
        match &self.backend {
            Backend::Http(config) => format!("http({})", config.model),
            Backend::Echo => "echo".to_string(),
            Backend::GoldOracle => "gold-oracle".to_string(),
            Backend::FlipOracle(kind) => format!("flip-oracle({kind})"),
            Backend::Scripted(_) => "scripted".to_string(),
        }
    }

    /// Complete one prompt. Oracle backends require `gold` to contain the
    /// request id.
    pub fn complete(
        &self,
        request: &CompletionRequest,
        gold: Option<&GoldLookup>,
    ) -> Result<Completion> {
        if request.prompt.is_empty() {
            return Err(Error::InvalidInput(format!(
                "request {}: empty prompt",
                request.id
            )));
        }
        let started = Instant::now();
        let (text, attempts) = match &self.backend {
            Backend::Echo => (final_question(&request.prompt).to_string(), 1),
            Backend::GoldOracle => (self.lookup_gold(request, gold)?.to_string(), 1),
            Backend::FlipOracle(kind) => (flip(*kind, self.lookup_gold(request, gold)?), 1),
            Backend::Scripted(queue) => {
                let mut queue = queue.lock().expect("scripted queue lock");
                let text = queue.pop_front().ok_or_else(|| {
                    Error::Config(format!(
                        "scripted client queue empty at request {}",
                        request.id
                    ))
                })?;
                (text, 1)
            }
            Backend::Http(config) => self.complete_http(config, request)?,
        };
        let completion = Completion {
            request_id: request.id.clone(),
            text,
            latency: started.elapsed(),
            attempt_count: attempts,
        };
        self.log_transcript(request, Ok(&completion));
        Ok(completion)
    }

    fn lookup_gold<'a>(
        &self,
        request: &CompletionRequest,
        gold: Option<&'a GoldLookup>,
    ) -> Result<&'a str> {
        gold.and_then(|lookup| lookup.get(&request.id))
            .map(String::as_str)
            .ok_or_else(|| {
                Error::Config(format!(
                    "oracle backend needs a gold answer for request {}",
                    request.id
                ))
            })
    }

    fn complete_http(
        &self,
        config: &HttpConfig,
        request: &CompletionRequest,
    ) -> Result<(String, u32)> {
        let body = serde_json::json!({
            "model": config.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": self.params.temperature,
            "max_tokens": self.params.max_tokens,
        })
        .to_string();

        let credential = match &config.credential_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                Error::Config(format!("credential environment variable {var} not set"))
            })?),
            None => None,
        };

        let attempts_allowed = self.params.retries.max(1);
        let mut backoff = config.backoff_start;
        let mut last_error = String::new();
        for attempt in 1..=attempts_allowed {
            match self.http_attempt(config, credential.as_deref(), &body) {
                Ok(text) => return Ok((text, attempt)),
                Err(HttpAttemptError::Fatal(message)) => {
                    self.log_transcript(request, Err(&message));
                    return Err(Error::Request {
                        request_id: request.id.clone(),
                        message,
                    });
                }
                Err(HttpAttemptError::Retryable(message)) => {
                    last_error = message;
                    if attempt < attempts_allowed {
                        std::thread::sleep(backoff);
                        backoff *= 2;
                    }
                }
            }
        }
        self.log_transcript(request, Err(&last_error));
        Err(Error::Request {
            request_id: request.id.clone(),
            message: format!("{attempts_allowed} attempts exhausted: {last_error}"),
        })
    }

    fn http_attempt(
        &self,
        config: &HttpConfig,
        credential: Option<&str>,
        body: &str,
    ) -> std::result::Result<String, HttpAttemptError> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(self.params.request_timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let mut builder = agent
            .post(&config.endpoint)
            .header("content-type", "application/json");
        if let Some(token) = credential {
            builder = builder.header("authorization", &format!("Bearer {token}"));
        }
        let mut response = builder
            .send(body.as_bytes())
            .map_err(|e| HttpAttemptError::Retryable(format!("transport: {e}")))?;

        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| HttpAttemptError::Retryable(format!("body read: {e}")))?;
        if status >= 500 {
            return Err(HttpAttemptError::Retryable(format!("status {status}")));
        }
        if status >= 400 {
            return Err(HttpAttemptError::Fatal(format!("status {status}: {text}")));
        }
        parse_chat_completion(&text).map_err(HttpAttemptError::Fatal)
    }

    fn log_transcript(
        &self,
        request: &CompletionRequest,
        outcome: std::result::Result<&Completion, &str>,
    ) {
        if let Some(transcript) = &self.transcript {
            let mut writer = transcript.lock().expect("transcript lock");
            writer.log(request, outcome);
        }
    }
}

enum HttpAttemptError {
    Retryable(String),
    Fatal(String),
}

fn parse_chat_completion(body: &str) -> std::result::Result<String, String> {
    let value: serde_json::Value =
        serde_json::from_str(body).map_err(|e| format!("response not json: {e}"))?;
    value["choices"][0]["message"]["content"]
        .as_str()
        .map(str::to_string)
        .ok_or_else(|| "response missing choices[0].message.content".to_string())
}

/// The last "Question: ..." line of a rendered probe, or the whole prompt
/// when there is none.
fn final_question(prompt: &str) -> &str {
    prompt
        .lines()
        .rev()
        .find_map(|line| line.strip_prefix("Question: "))
        .unwrap_or(prompt)
}

struct TranscriptWriter {
    path: PathBuf,
    file: fs::File,
}

impl TranscriptWriter {
    fn create(path: PathBuf) -> Result<Self> {
        let file = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        Ok(TranscriptWriter { path, file })
    }

    fn log(&mut self, request: &CompletionRequest, outcome: std::result::Result<&Completion, &str>) {
        let entry = match outcome {
            Ok(completion) => serde_json::json!({
                "request_id": request.id,
                "prompt": request.prompt,
                "response": completion.text,
                "attempts": completion.attempt_count,
                "latency_ms": completion.latency.as_millis() as u64,
            }),
            Err(message) => serde_json::json!({
                "request_id": request.id,
                "prompt": request.prompt,
                "error": message,
            }),
        };
        // Transcripts are best-effort auditing; a failed write never fails
        // the request that produced it.
        let _ = writeln!(self.file, "{entry}");
    }
}

/// Run `f(0..n)` on up to `max_in_flight` worker threads, returning results
/// in index order.
pub(crate) fn bounded_map<R, F>(n: usize, max_in_flight: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync,
{
    assert!(max_in_flight >= 1, "max_in_flight must be at least 1");
    if n == 0 {
        return Vec::new();
    }
    let workers = max_in_flight.min(n);
    if workers == 1 {
        return (0..n).map(f).collect();
    }

    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<R>>> = (0..n).map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let result = f(i);
                *slots[i].lock().expect("result slot lock") = Some(result);
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| {
            slot.into_inner()
                .expect("result slot lock")
                .expect("every slot filled")
        })
        .collect()
}

/// Complete a batch of requests with at most `max_in_flight` outstanding at
/// once. Results come back in input order; individual failures are reported
/// per item without aborting the batch.
pub fn batch_complete(
    client: &ModelClient,
    requests: &[CompletionRequest],
    gold: Option<&GoldLookup>,
    max_in_flight: usize,
) -> Result<Vec<Result<Completion>>> {
    if max_in_flight == 0 {
        return Err(Error::Config("max_in_flight must be at least 1".to_string()));
    }
    Ok(bounded_map(requests.len(), max_in_flight, |i| {
        client.complete(&requests[i], gold)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn request(id: &str, prompt: &str) -> CompletionRequest {
        CompletionRequest {
            id: id.to_string(),
            prompt: prompt.to_string(),
        }
    }

    #[test]
    fn flip_oracle_char_reverses_gold() {
        let client = ModelClient::flip_oracle(FlipKind::Char);
        let gold: GoldLookup = [("q1".to_string(), "Paris.".to_string())].into();
        let completion = client.complete(&request("q1", "whatever"), Some(&gold)).unwrap();
        assert_eq!(completion.text, ".siraP");
    }

    #[test]
    fn gold_oracle_returns_gold() {
        let client = ModelClient::gold_oracle();
        let gold: GoldLookup = [("q1".to_string(), "Paris.".to_string())].into();
        let completion = client.complete(&request("q1", "whatever"), Some(&gold)).unwrap();
        assert_eq!(completion.text, "Paris.");
    }

    #[test]
    fn gold_oracle_without_lookup_is_config_error() {
        let client = ModelClient::gold_oracle();
        assert!(matches!(
            client.complete(&request("q1", "whatever"), None),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn scripted_pops_in_order_and_exhausts() {
        let client = ModelClient::scripted(vec!["a".to_string(), "b".to_string()]);
        assert_eq!(client.complete(&request("1", "p"), None).unwrap().text, "a");
        assert_eq!(client.complete(&request("2", "p"), None).unwrap().text, "b");
        assert!(matches!(
            client.complete(&request("3", "p"), None),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn echo_returns_final_question() {
        let client = ModelClient::echo();
        let prompt = "Question: first?\nAnswer: x\nQuestion: second?\nAnswer:";
        assert_eq!(
            client.complete(&request("1", prompt), None).unwrap().text,
            "second?"
        );
        assert_eq!(
            client.complete(&request("2", "bare question"), None).unwrap().text,
            "bare question"
        );
    }

    #[test]
    fn empty_prompt_rejected() {
        let client = ModelClient::echo();
        assert!(client.complete(&request("1", ""), None).is_err());
    }

    #[test]
    fn batch_results_in_input_order() {
        let client = ModelClient::gold_oracle();
        let gold: GoldLookup = (0..10)
            .map(|i| (format!("q{i}"), format!("answer {i}")))
            .collect();
        let requests: Vec<CompletionRequest> =
            (0..10).map(|i| request(&format!("q{i}"), "p")).collect();
        let results = batch_complete(&client, &requests, Some(&gold), 3).unwrap();
        assert_eq!(results.len(), 10);
        for (i, result) in results.iter().enumerate() {
            assert_eq!(result.as_ref().unwrap().text, format!("answer {i}"));
        }
    }

    #[test]
    fn batch_isolates_poisoned_items() {
        let client = ModelClient::gold_oracle();
        // q5 missing from the lookup
        let gold: GoldLookup = (0..10)
            .filter(|&i| i != 5)
            .map(|i| (format!("q{i}"), format!("answer {i}")))
            .collect();
        let requests: Vec<CompletionRequest> =
            (0..10).map(|i| request(&format!("q{i}"), "p")).collect();
        let results = batch_complete(&client, &requests, Some(&gold), 4).unwrap();
        let failures: Vec<usize> = results
            .iter()
            .enumerate()
            .filter(|(_, r)| r.is_err())
            .map(|(i, _)| i)
            .collect();
        assert_eq!(failures, vec![5]);
    }

    #[test]
    fn bounded_map_never_exceeds_limit() {
        use std::sync::atomic::AtomicIsize;
        let active = AtomicIsize::new(0);
        let peak = AtomicIsize::new(0);
        let limit = 3;
        bounded_map(50, limit, |i| {
            let now = active.fetch_add(1, Ordering::SeqCst) + 1;
            peak.fetch_max(now, Ordering::SeqCst);
            std::thread::sleep(Duration::from_millis(1 + (i as u64 % 3)));
            active.fetch_sub(1, Ordering::SeqCst);
            i
        });
        assert!(peak.load(Ordering::SeqCst) <= limit as isize);
    }

    #[test]
    fn bounded_map_keeps_input_order_under_random_delays() {
        use rand::{Rng, SeedableRng};
        let delays: Vec<u64> = {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
            (0..40).map(|_| rng.random_range(0..4)).collect()
        };
        let results = bounded_map(delays.len(), 8, |i| {
            std::thread::sleep(Duration::from_millis(delays[i]));
            i
        });
        let expected: Vec<usize> = (0..delays.len()).collect();
        assert_eq!(results, expected);
    }

    #[test]
    fn parse_chat_completion_extracts_content() {
        let body = r#"{"choices":[{"message":{"role":"assistant","content":"hello"}}]}"#;
        assert_eq!(parse_chat_completion(body).unwrap(), "hello");
        assert!(parse_chat_completion("{}").is_err());
        assert!(parse_chat_completion("not json").is_err());
    }
}
