//! Chat-completions client for multimodal geolocation queries.
//!
//! One request per query: a single user message carrying the prompt text
//! and the query image as a base64 data URL, with the decoding parameters
//! (temperature, top_p, max_tokens) applied verbatim. Requests go to
//! `{base_url}/chat/completions`; an API key from the `GEORAG_API_KEY`
//! environment variable rides along as a bearer token when present.
//!
//! Transports are pluggable behind the [`Transport`] trait. The live
//! transport speaks HTTP; the mocks in [`mock`] replay scripted outcomes,
//! capture requests for determinism checks, or echo coordinates straight
//! out of the prompt, which lets every pipeline test run offline and
//! byte-reproducibly.
//!
//! Timeouts and 5xx responses are retried with exponential backoff up to
//! `max_retries` extra attempts; 4xx responses never retry.

use std::time::{Duration, Instant};

use base64::Engine as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompt::PromptBundle;

pub const DEFAULT_TEMPERATURE: f64 = 0.1;
pub const DEFAULT_TOP_P: f64 = 0.1;
pub const DEFAULT_MAX_TOKENS: u32 = 512;
pub const DEFAULT_REQUEST_TIMEOUT_S: u64 = 120;
pub const DEFAULT_MAX_RETRIES: u32 = 3;
pub const DEFAULT_RETRY_BACKOFF_S: f64 = 2.0;

/// Environment variable consulted for the bearer token.
pub const API_KEY_ENV: &str = "GEORAG_API_KEY";

/// Pre-flight cap on raw image bytes before base64 expansion.
pub const MAX_IMAGE_BYTES: usize = 20 * 1024 * 1024;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("image is {got} bytes, limit is {limit}")]
    OversizedImage { got: usize, limit: usize },
    #[error("request rejected with status {status}: {message}")]
    Request { status: u16, message: String },
    #[error("transport failed after {attempts} attempts: {last}")]
    Transport {
        attempts: u32,
        /// Status of the last failed attempt; `None` when the failure
        /// never produced an HTTP response (timeout, connect error).
        last_status: Option<u16>,
        last: String,
    },
    #[error("malformed endpoint response: {0}")]
    InvalidResponse(String),
}

/// Endpoint address and decoding hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub base_url: String,
    pub model_name: String,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    pub request_timeout_s: u64,
    pub max_retries: u32,
    /// First retry delay in seconds; doubles on each further retry.
    pub retry_backoff_s: f64,
}

impl ModelConfig {
    pub fn new(base_url: impl Into<String>, model_name: impl Into<String>) -> ModelConfig {
        ModelConfig {
            base_url: base_url.into(),
            model_name: model_name.into(),
            temperature: DEFAULT_TEMPERATURE,
            top_p: DEFAULT_TOP_P,
            max_tokens: DEFAULT_MAX_TOKENS,
            request_timeout_s: DEFAULT_REQUEST_TIMEOUT_S,
            max_retries: DEFAULT_MAX_RETRIES,
            retry_backoff_s: DEFAULT_RETRY_BACKOFF_S,
        }
    }

    pub fn validate(&self) -> Result<(), ClientError> {
        if self.base_url.is_empty() {
            return Err(ClientError::InvalidConfig("base_url is empty".into()));
        }
        if self.model_name.is_empty() {
            return Err(ClientError::InvalidConfig("model_name is empty".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(ClientError::InvalidConfig(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(ClientError::InvalidConfig(format!(
                "top_p {} outside (0, 1]",
                self.top_p
            )));
        }
        if self.max_tokens == 0 {
            return Err(ClientError::InvalidConfig("max_tokens must be >= 1".into()));
        }
        if self.request_timeout_s == 0 {
            return Err(ClientError::InvalidConfig(
                "request_timeout_s must be >= 1".into(),
            ));
        }
        if !(self.retry_backoff_s >= 0.0 && self.retry_backoff_s.is_finite()) {
            return Err(ClientError::InvalidConfig(format!(
                "retry_backoff_s {} must be finite and non-negative",
                self.retry_backoff_s
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransportKind {
    Live,
    Mock,
}

/// One HTTP request, fully serialized.
#[derive(Debug, Clone, PartialEq)]
pub struct WireRequest {
    pub url: String,
    pub bearer_token: Option<String>,
    pub body: Vec<u8>,
}

#[derive(Debug, Clone)]
pub struct WireResponse {
    pub status: u16,
    pub body: Vec<u8>,
}

#[derive(Debug, Clone)]
pub enum TransportFailure {
    Timeout,
    Connect(String),
}

impl std::fmt::Display for TransportFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TransportFailure::Timeout => write!(f, "request timed out"),
            TransportFailure::Connect(detail) => write!(f, "connection failed: {detail}"),
        }
    }
}

/// Delivery mechanism for wire requests. Implementations must be shareable
/// across threads; the evaluation harness fans calls out concurrently.
pub trait Transport: Send + Sync {
    fn send(&self, request: &WireRequest) -> Result<WireResponse, TransportFailure>;
    fn kind(&self) -> TransportKind;
}

/// Lets callers hand a client one handle to a transport and keep another,
/// e.g. to inspect a capturing mock after the client takes ownership.
impl<T: Transport + ?Sized> Transport for std::sync::Arc<T> {
    fn send(&self, request: &WireRequest) -> Result<WireResponse, TransportFailure> {
        (**self).send(request)
    }

    fn kind(&self) -> TransportKind {
        (**self).kind()
    }
}

/// Live HTTP transport.
pub struct HttpTransport {
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn new(timeout_s: u64) -> Result<HttpTransport, ClientError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(timeout_s))
            .build()
            .map_err(|e| ClientError::InvalidConfig(format!("http client: {e}")))?;
        Ok(HttpTransport { client })
    }
}

impl Transport for HttpTransport {
    fn send(&self, request: &WireRequest) -> Result<WireResponse, TransportFailure> {
        let mut builder = self
            .client
            .post(&request.url)
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(request.body.clone());
        if let Some(token) = &request.bearer_token {
            builder = builder.bearer_auth(token);
        }
        let classify = |e: reqwest::Error| {
            if e.is_timeout() {
                TransportFailure::Timeout
            } else {
                TransportFailure::Connect(e.to_string())
            }
        };
        let response = builder.send().map_err(classify)?;
        let status = response.status().as_u16();
        let body = response.bytes().map_err(classify)?.to_vec();
        Ok(WireResponse { status, body })
    }

    fn kind(&self) -> TransportKind {
        TransportKind::Live
    }
}

/// Assistant reply plus delivery metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResponse {
    pub raw_text: String,
    pub latency_ms: u64,
    /// Total attempts spent, successful one included; never exceeds
    /// `max_retries + 1`.
    pub attempt_count: u32,
    pub transport: TransportKind,
}

/// Outcome of a [`Client::healthcheck`] probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthReport {
    /// Model name echoed by the endpoint, when it reports one.
    pub model: Option<String>,
    pub latency_ms: u64,
    pub attempt_count: u32,
    pub transport: TransportKind,
}

pub struct Client {
    config: ModelConfig,
    transport: Box<dyn Transport>,
    api_key: Option<String>,
}

impl Client {
    /// Client over live HTTP, with the API key picked up from
    /// [`API_KEY_ENV`] when set.
    pub fn new(config: ModelConfig) -> Result<Client, ClientError> {
        let transport = HttpTransport::new(config.request_timeout_s)?;
        Client::with_transport(config, Box::new(transport))
    }

    /// Client over a caller-supplied transport (mocks in tests, the CLI's
    /// scripted modes). Also reads [`API_KEY_ENV`].
    pub fn with_transport(
        config: ModelConfig,
        transport: Box<dyn Transport>,
    ) -> Result<Client, ClientError> {
        config.validate()?;
        Ok(Client {
            config,
            transport,
            api_key: std::env::var(API_KEY_ENV).ok(),
        })
    }

    /// Overrides the environment-derived API key (tests, explicit config).
    pub fn with_api_key(mut self, api_key: Option<String>) -> Client {
        self.api_key = api_key;
        self
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn transport_kind(&self) -> TransportKind {
        self.transport.kind()
    }

    /// Sends one chat completion for the bundle and returns the assistant
    /// text. Identical bundle and config produce identical request bytes.
    pub fn complete(&self, bundle: &PromptBundle) -> Result<ModelResponse, ClientError> {
        if bundle.image.bytes.len() > MAX_IMAGE_BYTES {
            return Err(ClientError::OversizedImage {
                got: bundle.image.bytes.len(),
                limit: MAX_IMAGE_BYTES,
            });
        }
        let data_url = format!(
            "data:{};base64,{}",
            bundle.image.media_type,
            base64::engine::general_purpose::STANDARD.encode(&bundle.image.bytes)
        );
        let body = ChatBody {
            model: &self.config.model_name,
            messages: [Message {
                role: "user",
                content: vec![
                    ContentPart::Text { text: &bundle.text },
                    ContentPart::ImageUrl {
                        image_url: ImageUrl { url: data_url },
                    },
                ],
            }],
            temperature: self.config.temperature,
            top_p: self.config.top_p,
            max_tokens: self.config.max_tokens,
        };
        let request = self.wire_request(&body);
        let (response, attempt_count, latency_ms) = self.send_with_retries(&request)?;
        let (raw_text, _model) = parse_chat_response(&response.body)?;
        Ok(ModelResponse {
            raw_text,
            latency_ms,
            attempt_count,
            transport: self.transport.kind(),
        })
    }

    /// Minimal text-only round trip confirming the endpoint answers and
    /// echoing the model name it reports.
    pub fn healthcheck(&self) -> Result<HealthReport, ClientError> {
        let body = ChatBody {
            model: &self.config.model_name,
            messages: [Message {
                role: "user",
                content: vec![ContentPart::Text { text: "ping" }],
            }],
            temperature: self.config.temperature,
            top_p: self.config.top_p,
            max_tokens: 1,
        };
        let request = self.wire_request(&body);
        let (response, attempt_count, latency_ms) = self.send_with_retries(&request)?;
        let (_text, model) = parse_chat_response(&response.body)?;
        Ok(HealthReport {
            model,
            latency_ms,
            attempt_count,
            transport: self.transport.kind(),
        })
    }

    fn wire_request(&self, body: &ChatBody<'_>) -> WireRequest {
        WireRequest {
            url: format!(
                "{}/chat/completions",
                self.config.base_url.trim_end_matches('/')
            ),
            bearer_token: self.api_key.clone(),
            body: serde_json::to_vec(body).expect("chat body serializes"),
        }
    }

    fn send_with_retries(
        &self,
        request: &WireRequest,
    ) -> Result<(WireResponse, u32, u64), ClientError> {
        let start = Instant::now();
        let max_attempts = self.config.max_retries + 1;
        let mut attempt = 0u32;
        loop {
            attempt += 1;
            let (last_status, last) = match self.transport.send(request) {
                Ok(response) if (200..300).contains(&response.status) => {
                    let latency_ms = start.elapsed().as_millis() as u64;
                    return Ok((response, attempt, latency_ms));
                }
                Ok(response) if (500..600).contains(&response.status) => {
                    (Some(response.status), format!("status {}", response.status))
                }
                Ok(response) => {
                    // 4xx and anything else unexpected: the request itself
                    // is at fault, retrying cannot help.
                    return Err(ClientError::Request {
                        status: response.status,
                        message: body_snippet(&response.body),
                    });
                }
                Err(failure) => (None, failure.to_string()),
            };
            if attempt >= max_attempts {
                return Err(ClientError::Transport {
                    attempts: attempt,
                    last_status,
                    last,
                });
            }
            let backoff_s = self.config.retry_backoff_s * 2f64.powi(attempt as i32 - 1);
            std::thread::sleep(Duration::from_secs_f64(backoff_s));
        }
    }
}

#[derive(Serialize)]
struct ChatBody<'a> {
    model: &'a str,
    messages: [Message<'a>; 1],
    temperature: f64,
    top_p: f64,
    max_tokens: u32,
}

#[derive(Serialize)]
struct Message<'a> {
    role: &'static str,
    content: Vec<ContentPart<'a>>,
}

#[derive(Serialize)]
#[serde(tag = "type")]
enum ContentPart<'a> {
    #[serde(rename = "text")]
    Text { text: &'a str },
    #[serde(rename = "image_url")]
    ImageUrl { image_url: ImageUrl },
}

#[derive(Serialize)]
struct ImageUrl {
    url: String,
}

/// Pulls `(assistant_text, model_echo)` out of a chat-completions body.
/// Accepts both plain-string content and content-part arrays.
fn parse_chat_response(body: &[u8]) -> Result<(String, Option<String>), ClientError> {
    #[derive(Deserialize)]
    struct ChatResponse {
        model: Option<String>,
        choices: Vec<Choice>,
    }
    #[derive(Deserialize)]
    struct Choice {
        message: ChoiceMessage,
    }
    #[derive(Deserialize)]
    struct ChoiceMessage {
        content: serde_json::Value,
    }

    let parsed: ChatResponse = serde_json::from_slice(body)
        .map_err(|e| ClientError::InvalidResponse(format!("{e}; body: {}", body_snippet(body))))?;
    let first = parsed
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| ClientError::InvalidResponse("no choices in response".into()))?;
    let text = match first.message.content {
        serde_json::Value::String(text) => text,
        serde_json::Value::Array(parts) => {
            let mut text = String::new();
            for part in parts {
                if part.get("type").and_then(|t| t.as_str()) == Some("text") {
                    if let Some(fragment) = part.get("text").and_then(|t| t.as_str()) {
                        text.push_str(fragment);
                    }
                }
            }
            text
        }
        other => {
            return Err(ClientError::InvalidResponse(format!(
                "unsupported content shape: {other}"
            )))
        }
    };
    Ok((text, parsed.model))
}

fn body_snippet(body: &[u8]) -> String {
    let text = String::from_utf8_lossy(body);
    let mut snippet: String = text.chars().take(300).collect();
    if snippet.len() < text.len() {
        snippet.push_str("...");
    }
    snippet
}

pub mod mock {
    //! Deterministic in-process transports for offline testing.

    use std::sync::Mutex;
    use std::time::Duration;

    use super::{Transport, TransportFailure, TransportKind, WireRequest, WireResponse};
    use crate::coordparse;
    use crate::prompt::render_coord_line;

    /// What one scripted request does.
    #[derive(Debug, Clone)]
    pub enum ScriptedOutcome {
        Reply { status: u16, body: String },
        Timeout,
    }

    /// Script table row: the nth request gets the nth entry; requests past
    /// the end repeat the last entry.
    #[derive(Debug, Clone)]
    pub struct ScriptEntry {
        pub delay_ms: u64,
        pub outcome: ScriptedOutcome,
    }

    impl ScriptEntry {
        /// 200 reply whose assistant message is `text`, attributed to
        /// `model`.
        pub fn assistant_text_for_model(text: &str, model: &str) -> ScriptEntry {
            ScriptEntry {
                delay_ms: 0,
                outcome: ScriptedOutcome::Reply {
                    status: 200,
                    body: chat_completion_body(model, text),
                },
            }
        }

        /// 200 reply attributed to a generic mock model.
        pub fn assistant_text(text: &str) -> ScriptEntry {
            ScriptEntry::assistant_text_for_model(text, "mock-model")
        }

        /// Raw status reply, e.g. `status(500, "overloaded")`.
        pub fn status(status: u16, body: &str) -> ScriptEntry {
            ScriptEntry {
                delay_ms: 0,
                outcome: ScriptedOutcome::Reply {
                    status,
                    body: body.to_string(),
                },
            }
        }

        pub fn timeout() -> ScriptEntry {
            ScriptEntry {
                delay_ms: 0,
                outcome: ScriptedOutcome::Timeout,
            }
        }

        pub fn with_delay_ms(mut self, delay_ms: u64) -> ScriptEntry {
            self.delay_ms = delay_ms;
            self
        }
    }

    /// Well-formed chat-completions response JSON for mock replies.
    pub fn chat_completion_body(model: &str, text: &str) -> String {
        serde_json::json!({
            "model": model,
            "choices": [{ "message": { "role": "assistant", "content": text } }]
        })
        .to_string()
    }

    /// Replays a fixed script of outcomes, one per request in arrival
    /// order. Optionally rejects requests whose body names a different
    /// model, mimicking a server that serves exactly one model.
    pub struct ScriptedTransport {
        entries: Vec<ScriptEntry>,
        expected_model: Option<String>,
        cursor: Mutex<usize>,
    }

    impl ScriptedTransport {
        pub fn new(entries: Vec<ScriptEntry>) -> ScriptedTransport {
            assert!(!entries.is_empty(), "script needs at least one entry");
            ScriptedTransport {
                entries,
                expected_model: None,
                cursor: Mutex::new(0),
            }
        }

        pub fn expecting_model(model: &str, entries: Vec<ScriptEntry>) -> ScriptedTransport {
            let mut transport = ScriptedTransport::new(entries);
            transport.expected_model = Some(model.to_string());
            transport
        }

        /// How many requests the script has answered so far.
        pub fn requests_served(&self) -> usize {
            *self.cursor.lock().unwrap()
        }
    }

    impl Transport for ScriptedTransport {
        fn send(&self, request: &WireRequest) -> Result<WireResponse, TransportFailure> {
            let entry = {
                let mut cursor = self.cursor.lock().unwrap();
                let entry = self.entries[(*cursor).min(self.entries.len() - 1)].clone();
                *cursor += 1;
                entry
            };
            if entry.delay_ms > 0 {
                std::thread::sleep(Duration::from_millis(entry.delay_ms));
            }
            if let Some(expected) = &self.expected_model {
                let requested = requested_model(&request.body);
                if requested.as_deref() != Some(expected.as_str()) {
                    let name = requested.unwrap_or_else(|| "<unset>".into());
                    return Ok(WireResponse {
                        status: 404,
                        body: format!("model {name:?} is not served here").into_bytes(),
                    });
                }
            }
            match entry.outcome {
                ScriptedOutcome::Reply { status, body } => Ok(WireResponse {
                    status,
                    body: body.into_bytes(),
                }),
                ScriptedOutcome::Timeout => Err(TransportFailure::Timeout),
            }
        }

        fn kind(&self) -> TransportKind {
            TransportKind::Mock
        }
    }

    fn requested_model(body: &[u8]) -> Option<String> {
        serde_json::from_slice::<serde_json::Value>(body)
            .ok()?
            .get("model")?
            .as_str()
            .map(str::to_string)
    }

    /// Records every request verbatim and answers each with the same
    /// assistant text; used to verify request-payload determinism.
    pub struct CapturingTransport {
        reply_text: String,
        requests: Mutex<Vec<WireRequest>>,
    }

    impl CapturingTransport {
        pub fn new(reply_text: &str) -> CapturingTransport {
            CapturingTransport {
                reply_text: reply_text.to_string(),
                requests: Mutex::new(Vec::new()),
            }
        }

        pub fn requests(&self) -> Vec<WireRequest> {
            self.requests.lock().unwrap().clone()
        }
    }

    impl Transport for CapturingTransport {
        fn send(&self, request: &WireRequest) -> Result<WireResponse, TransportFailure> {
            self.requests.lock().unwrap().push(request.clone());
            Ok(WireResponse {
                status: 200,
                body: chat_completion_body("mock-model", &self.reply_text).into_bytes(),
            })
        }

        fn kind(&self) -> TransportKind {
            TransportKind::Mock
        }
    }

    /// Answers every request with the first coordinate pair found in the
    /// request's prompt text. With contrastive prompts that is the nearest
    /// retrieved neighbor, which makes end-to-end results predictable from
    /// the gallery alone. The reply depends only on the request payload,
    /// so concurrent arrival order cannot affect it.
    pub struct EchoFirstCoordinateTransport;

    impl Transport for EchoFirstCoordinateTransport {
        fn send(&self, request: &WireRequest) -> Result<WireResponse, TransportFailure> {
            let model =
                requested_model(&request.body).unwrap_or_else(|| "mock-model".to_string());
            let text = prompt_text(&request.body).unwrap_or_default();
            let reply = match coordparse::scan_coordinates(&text).into_iter().next() {
                Some((_span, coord)) => render_coord_line(coord),
                None => "no reference coordinates available".to_string(),
            };
            Ok(WireResponse {
                status: 200,
                body: chat_completion_body(&model, &reply).into_bytes(),
            })
        }

        fn kind(&self) -> TransportKind {
            TransportKind::Mock
        }
    }

    fn prompt_text(body: &[u8]) -> Option<String> {
        let value: serde_json::Value = serde_json::from_slice(body).ok()?;
        let content = value.get("messages")?.get(0)?.get("content")?;
        match content {
            serde_json::Value::String(text) => Some(text.clone()),
            serde_json::Value::Array(parts) => parts.iter().find_map(|part| {
                if part.get("type")?.as_str()? == "text" {
                    Some(part.get("text")?.as_str()?.to_string())
                } else {
                    None
                }
            }),
            _ => None,
        }
    }
}
