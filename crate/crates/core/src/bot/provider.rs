//! Chat-completion providers.
//!
//! [`ChatProvider`] is the seam between the room engine and any model
//! vendor. Remote vendors speak their own chat-completions dialect; the
//! [`ScriptedProvider`] replays a plain-text sidecar file so sessions can be
//! run deterministically without network access.

use std::fmt;
use std::time::Duration;

use async_trait::async_trait;
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    #[serde(rename = "openai")]
    OpenAi,
    Anthropic,
    Gemini,
    #[serde(rename = "huggingface")]
    HuggingFace,
    Scripted,
}

impl ProviderKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ProviderKind::OpenAi => "openai",
            ProviderKind::Anthropic => "anthropic",
            ProviderKind::Gemini => "gemini",
            ProviderKind::HuggingFace => "huggingface",
            ProviderKind::Scripted => "scripted",
        }
    }

    pub fn parse(raw: &str) -> Option<Self> {
        match raw.to_ascii_lowercase().as_str() {
            "openai" => Some(ProviderKind::OpenAi),
            "anthropic" => Some(ProviderKind::Anthropic),
            "gemini" => Some(ProviderKind::Gemini),
            "huggingface" => Some(ProviderKind::HuggingFace),
            "scripted" => Some(ProviderKind::Scripted),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Purpose {
    Reply,
    Suggestions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub purpose: Purpose,
    pub messages: Vec<ChatMessage>,
    pub temperature: f32,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProviderError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("provider responded with status {status}")]
    Status { status: u16 },
    #[error("unexpected response shape: {0}")]
    Decode(String),
    #[error("no API key stored for provider {0}")]
    MissingKey(&'static str),
    #[error("script has no more replies")]
    ScriptExhausted,
    #[error("script has no suggestion block")]
    NoSuggestionBlock,
    #[error("cannot load script: {0}")]
    Script(String),
}

#[async_trait]
pub trait ChatProvider: Send + Sync {
    async fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError>;
}

/// Deterministic provider backed by a sidecar script.
///
/// ```text
/// # comments and blank lines are ignored
/// It's going well, thanks!
/// What have you done this weekend so far?
/// [suggestions]
/// Hi! I'm doing alright, thank you for asking. How about you?
/// Hey! I'm managing, thank you for checking in. Hope you're doing well.
/// Hello! I'm getting by, thanks. How's everything on your end?
/// ```
///
/// Lines before `[suggestions]` (an optional `[replies]` header may open the
/// file) are bot replies, consumed in order. Lines after it form the
/// candidate block returned for every suggestion request. `\n` inside a line
/// stands for a newline.
#[derive(Debug)]
pub struct ScriptedProvider {
    replies: Vec<String>,
    suggestions: Option<Vec<String>>,
    cursor: Mutex<usize>,
}

impl ScriptedProvider {
    pub fn parse(script: &str) -> Self {
        let mut replies = Vec::new();
        let mut suggestions: Option<Vec<String>> = None;
        for line in script.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            match line {
                "[replies]" => continue,
                "[suggestions]" => {
                    suggestions.get_or_insert_with(Vec::new);
                    continue;
                }
                _ => {}
            }
            let text = line.replace("\\n", "\n");
            match suggestions.as_mut() {
                Some(block) => block.push(text),
                None => replies.push(text),
            }
        }
        Self {
            replies,
            suggestions,
            cursor: Mutex::new(0),
        }
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self, ProviderError> {
        std::fs::read_to_string(path)
            .map(|s| Self::parse(&s))
            .map_err(|e| ProviderError::Script(format!("{}: {e}", path.display())))
    }

    pub fn replies(&self) -> &[String] {
        &self.replies
    }

    pub fn remaining(&self) -> usize {
        self.replies.len() - *self.cursor.lock()
    }
}

#[async_trait]
impl ChatProvider for ScriptedProvider {
    async fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError> {
        match request.purpose {
            Purpose::Reply => {
                let mut cursor = self.cursor.lock();
                let reply = self
                    .replies
                    .get(*cursor)
                    .cloned()
                    .ok_or(ProviderError::ScriptExhausted)?;
                *cursor += 1;
                Ok(reply)
            }
            Purpose::Suggestions => self
                .suggestions
                .as_ref()
                .map(|block| {
                    block
                        .iter()
                        .enumerate()
                        .map(|(i, s)| format!("{}. {s}", i + 1))
                        .collect::<Vec<_>>()
                        .join("\n")
                })
                .ok_or(ProviderError::NoSuggestionBlock),
        }
    }
}

/// An API key held only in memory. Never printed.
#[derive(Clone)]
pub struct ApiKey(String);

impl ApiKey {
    pub fn new(key: impl Into<String>) -> Self {
        Self(key.into())
    }

    pub fn expose(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for ApiKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ApiKey(<redacted>)")
    }
}

/// A vendor endpoint speaking one of the supported chat-completions dialects.
#[derive(Debug, Clone)]
pub struct RemoteProvider {
    kind: ProviderKind,
    base_url: String,
    api_key: ApiKey,
    http: reqwest::Client,
}

impl RemoteProvider {
    pub fn new(kind: ProviderKind, api_key: ApiKey) -> Self {
        let base_url = match kind {
            ProviderKind::OpenAi => "https://api.openai.com/v1",
            ProviderKind::Anthropic => "https://api.anthropic.com/v1",
            ProviderKind::Gemini => "https://generativelanguage.googleapis.com/v1beta",
            ProviderKind::HuggingFace | ProviderKind::Scripted => "https://router.huggingface.co/v1",
        };
        Self::with_base_url(kind, base_url, api_key)
    }

    pub fn with_base_url(kind: ProviderKind, base_url: &str, api_key: ApiKey) -> Self {
        let http = reqwest::Client::builder()
            .timeout(Duration::from_secs(60))
            .build()
            .unwrap_or_default();
        Self {
            kind,
            base_url: base_url.trim_end_matches('/').to_owned(),
            api_key,
            http,
        }
    }

    pub fn endpoint(&self, model: &str) -> String {
        match self.kind {
            ProviderKind::Anthropic => format!("{}/messages", self.base_url),
            ProviderKind::Gemini => format!("{}/models/{model}:generateContent", self.base_url),
            _ => format!("{}/chat/completions", self.base_url),
        }
    }

    pub fn request_body(&self, request: &ChatRequest) -> Value {
        match self.kind {
            ProviderKind::Anthropic => {
                let system: Vec<&str> = request
                    .messages
                    .iter()
                    .filter(|m| m.role == Role::System)
                    .map(|m| m.content.as_str())
                    .collect();
                let turns: Vec<Value> = request
                    .messages
                    .iter()
                    .filter(|m| m.role != Role::System)
                    .map(|m| json!({ "role": m.role, "content": m.content }))
                    .collect();
                json!({
                    "model": request.model,
                    "system": system.join("\n\n"),
                    "messages": turns,
                    "max_tokens": 512,
                    "temperature": request.temperature,
                })
            }
            ProviderKind::Gemini => {
                let system: Vec<Value> = request
                    .messages
                    .iter()
                    .filter(|m| m.role == Role::System)
                    .map(|m| json!({ "text": m.content }))
                    .collect();
                let contents: Vec<Value> = request
                    .messages
                    .iter()
                    .filter(|m| m.role != Role::System)
                    .map(|m| {
                        let role = if m.role == Role::Assistant { "model" } else { "user" };
                        json!({ "role": role, "parts": [{ "text": m.content }] })
                    })
                    .collect();
                json!({
                    "systemInstruction": { "parts": system },
                    "contents": contents,
                    "generationConfig": { "temperature": request.temperature },
                })
            }
            _ => json!({
                "model": request.model,
                "messages": request.messages,
                "temperature": request.temperature,
            }),
        }
    }

    pub fn extract_text(&self, body: &Value) -> Result<String, ProviderError> {
        let text = match self.kind {
            ProviderKind::Anthropic => body["content"]
                .as_array()
                .map(|blocks| {
                    blocks
                        .iter()
                        .filter_map(|b| b["text"].as_str())
                        .collect::<Vec<_>>()
                        .join("")
                }),
            ProviderKind::Gemini => body["candidates"][0]["content"]["parts"]
                .as_array()
                .map(|parts| {
                    parts
                        .iter()
                        .filter_map(|p| p["text"].as_str())
                        .collect::<Vec<_>>()
                        .join("")
                }),
            _ => body["choices"][0]["message"]["content"]
                .as_str()
                .map(str::to_owned),
        };
        text.ok_or_else(|| ProviderError::Decode("no message text in response".into()))
    }
}

#[async_trait]
impl ChatProvider for RemoteProvider {
    async fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError> {
        let builder = self.http.post(self.endpoint(&request.model));
        let builder = match self.kind {
            ProviderKind::Anthropic => builder
                .header("x-api-key", self.api_key.expose())
                .header("anthropic-version", "2023-06-01"),
            ProviderKind::Gemini => builder.header("x-goog-api-key", self.api_key.expose()),
            _ => builder.bearer_auth(self.api_key.expose()),
        };
        let response = builder
            .json(&self.request_body(request))
            .send()
            .await
            .map_err(|e| ProviderError::Transport(e.without_url().to_string()))?;
        let status = response.status();
        if !status.is_success() {
            return Err(ProviderError::Status {
                status: status.as_u16(),
            });
        }
        let body: Value = response
            .json()
            .await
            .map_err(|e| ProviderError::Decode(e.without_url().to_string()))?;
        self.extract_text(&body)
    }
}
