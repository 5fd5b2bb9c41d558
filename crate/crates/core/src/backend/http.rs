use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use tracing::warn;

use super::{count_tokens, Backend, CompletionRequest, CompletionResponse};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HttpConfig {
    /// Full chat-completions URL, e.g. `http://localhost:8000/v1/chat/completions`.
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the API key. Unset or empty means no auth header.
    pub api_key_env: String,
    pub max_attempts: u32,
    pub initial_backoff: Duration,
    pub max_backoff: Duration,
    pub request_timeout: Duration,
    /// Forwarded as the request `seed` when set; servers may ignore it.
    #[serde(default)]
    pub seed: Option<u64>,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://localhost:8000/v1/chat/completions".into(),
            model: "default".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            max_attempts: 5,
            initial_backoff: Duration::from_millis(500),
            max_backoff: Duration::from_secs(8),
            request_timeout: Duration::from_secs(300),
            seed: None,
        }
    }
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    temperature: f64,
    max_tokens: u32,
    stream: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Deserialize)]
struct ResponseMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct Usage {
    prompt_tokens: u64,
    completion_tokens: u64,
}

enum Attempt {
    Done(CompletionResponse),
    Transient(String),
    Fatal(String),
}

/// Blocking OpenAI-compatible chat-completions client with bounded exponential backoff.
pub struct HttpBackend {
    config: HttpConfig,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<Self> {
        if config.max_attempts == 0 {
            return Err(Error::Config("max_attempts must be at least 1".into()));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(config.request_timeout)
            .build()
            .map_err(|e| Error::Config(format!("http client: {e}")))?;
        let api_key = std::env::var(&config.api_key_env)
            .ok()
            .filter(|k| !k.is_empty());
        Ok(Self {
            config,
            api_key,
            client,
        })
    }

    fn attempt(&self, request: &CompletionRequest, started: Instant) -> Attempt {
        let body = ChatRequest {
            model: &self.config.model,
            messages: [ChatMessage {
                role: "user",
                content: &request.prompt,
            }],
            temperature: request.temperature,
            max_tokens: request.max_output,
            stream: false,
            seed: self.config.seed,
        };
        let mut builder = self.client.post(&self.config.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        let resp = match builder.send() {
            Ok(r) => r,
            Err(e) if e.is_builder() => return Attempt::Fatal(e.to_string()),
            Err(e) => return Attempt::Transient(e.to_string()),
        };
        let status = resp.status();
        if status.as_u16() == 429 || status.is_server_error() {
            return Attempt::Transient(format!("status {status}"));
        }
        if !status.is_success() {
            let text = resp.text().unwrap_or_default();
            return Attempt::Fatal(format!("status {status}: {text}"));
        }
        let parsed: ChatResponse = match resp.json() {
            Ok(p) => p,
            Err(e) => return Attempt::Transient(format!("malformed body: {e}")),
        };
        let Some(choice) = parsed.choices.into_iter().next() else {
            return Attempt::Transient("response has no choices".into());
        };
        let text = choice.message.content.unwrap_or_default();
        let (prompt_tokens, output_tokens) = match parsed.usage {
            Some(u) => (u.prompt_tokens, u.completion_tokens),
            None => (
                count_tokens(&request.prompt) as u64,
                count_tokens(&text) as u64,
            ),
        };
        Attempt::Done(CompletionResponse {
            text,
            prompt_tokens,
            output_tokens,
            latency: started.elapsed(),
        })
    }
}

impl Backend for HttpBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse> {
        let started = Instant::now();
        let mut backoff = self.config.initial_backoff;
        let mut last = String::new();
        for attempt in 1..=self.config.max_attempts {
            match self.attempt(request, started) {
                Attempt::Done(resp) => return Ok(resp),
                Attempt::Fatal(message) => {
                    return Err(Error::BackendUnavailable {
                        attempts: attempt,
                        message,
                    });
                }
                Attempt::Transient(message) => {
                    warn!(attempt, key = %request.key(), %message, "transient completion failure");
                    last = message;
                }
            }
            if attempt < self.config.max_attempts {
                std::thread::sleep(backoff);
                backoff = (backoff * 2).min(self.config.max_backoff);
            }
        }
        Err(Error::BackendUnavailable {
            attempts: self.config.max_attempts,
            message: last,
        })
    }
}
