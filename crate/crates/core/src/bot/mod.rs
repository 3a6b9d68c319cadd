//! AI participation: bot reply timing and context, and private reply
//! suggestions for human slots.
//!
//! Nothing here performs I/O on its own. The room engine decides *when* a
//! bot or suggestion request is due and emits a job; a driver hands the job
//! to a [`ChatProvider`] via [`run_reply_job`] / [`run_suggestion_job`] and
//! feeds the result back into the room.

mod context;
pub mod provider;

use std::path::PathBuf;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use context::{
    build_bot_context, build_suggestion_request, parse_candidates, suggestion_window,
    SUGGESTION_INSTRUCTION,
};
pub use provider::{
    ApiKey, ChatMessage, ChatProvider, ChatRequest, ProviderError, ProviderKind, Purpose, RemoteProvider,
    Role, ScriptedProvider,
};

/// Number of reply candidates offered per suggestion round.
pub const SUGGESTION_COUNT: usize = 3;
/// Maximum number of recent messages a suggestion round conditions on.
pub const SUGGESTION_CONTEXT_WINDOW: usize = 20;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BotError {
    #[error("delay range is inverted: min {min_ms} ms > max {max_ms} ms")]
    InvertedDelayRange { min_ms: u64, max_ms: u64 },
    #[error("scripted provider requires a script source")]
    MissingScript,
    #[error("remote provider requires a model name")]
    MissingModel,
    #[error("suggestion {field} is fixed at {expected}, got {got}")]
    FixedSuggestionParameter {
        field: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("suggestion trigger every-N requires N >= 1")]
    ZeroSuggestionInterval,
    #[error("no conversational messages to condition suggestions on")]
    EmptyContext,
    #[error("provider returned {got} usable candidates, expected {SUGGESTION_COUNT}")]
    MalformedProviderOutput { got: usize },
    #[error("provider returned an empty reply")]
    EmptyReply,
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

/// When, relative to the triggering message, a bot reply may be delivered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "DelayLawRepr", into = "DelayLawRepr")]
pub enum DelayLaw {
    Fixed { ms: u64 },
    UniformRange { min_ms: u64, max_ms: u64 },
}

impl DelayLaw {
    pub fn fixed(ms: u64) -> Self {
        DelayLaw::Fixed { ms }
    }

    pub fn uniform(min_ms: u64, max_ms: u64) -> Result<Self, BotError> {
        if min_ms > max_ms {
            return Err(BotError::InvertedDelayRange { min_ms, max_ms });
        }
        Ok(DelayLaw::UniformRange { min_ms, max_ms })
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum DelayLawRepr {
    Fixed { fixed_ms: u64 },
    Range { min_ms: u64, max_ms: u64 },
}

impl TryFrom<DelayLawRepr> for DelayLaw {
    type Error = BotError;
    fn try_from(repr: DelayLawRepr) -> Result<Self, Self::Error> {
        match repr {
            DelayLawRepr::Fixed { fixed_ms } => Ok(DelayLaw::fixed(fixed_ms)),
            DelayLawRepr::Range { min_ms, max_ms } => DelayLaw::uniform(min_ms, max_ms),
        }
    }
}

impl From<DelayLaw> for DelayLawRepr {
    fn from(law: DelayLaw) -> Self {
        match law {
            DelayLaw::Fixed { ms } => DelayLawRepr::Fixed { fixed_ms: ms },
            DelayLaw::UniformRange { min_ms, max_ms } => DelayLawRepr::Range { min_ms, max_ms },
        }
    }
}

/// Draws a reply delay in milliseconds. Ranges are inclusive at both ends.
pub fn draw_delay<R: Rng + ?Sized>(law: DelayLaw, rng: &mut R) -> u64 {
    match law {
        DelayLaw::Fixed { ms } => ms,
        DelayLaw::UniformRange { min_ms, max_ms } => rng.gen_range(min_ms..=max_ms),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptSource {
    Inline(String),
    File(PathBuf),
}

/// Which model answers a request: vendor, model name, and for scripted
/// runs the sidecar script.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelBackend {
    pub provider: ProviderKind,
    #[serde(default)]
    pub model: String,
    #[serde(default)]
    pub script: Option<ScriptSource>,
}

impl ModelBackend {
    pub fn scripted(script: &str) -> Self {
        Self {
            provider: ProviderKind::Scripted,
            model: "scripted".into(),
            script: Some(ScriptSource::Inline(script.to_owned())),
        }
    }

    pub fn validate(&self) -> Result<(), BotError> {
        match self.provider {
            ProviderKind::Scripted if self.script.is_none() => Err(BotError::MissingScript),
            ProviderKind::Scripted => Ok(()),
            _ if self.model.trim().is_empty() => Err(BotError::MissingModel),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BotConfig {
    #[serde(flatten)]
    pub backend: ModelBackend,
    pub system_prompt: String,
    pub delay: DelayLaw,
}

impl BotConfig {
    pub fn validate(&self) -> Result<(), BotError> {
        self.backend.validate()
    }

    /// Convenience constructor for a deterministic scripted bot.
    pub fn scripted(system_prompt: impl Into<String>, delay: DelayLaw, script: &str) -> Self {
        Self {
            backend: ModelBackend::scripted(script),
            system_prompt: system_prompt.into(),
            delay,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuggestionTrigger {
    EveryMessage,
    EveryN(u32),
    Manual,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuggestionsConfig {
    pub enabled: bool,
    pub trigger: SuggestionTrigger,
    pub backend: ModelBackend,
    #[serde(default = "default_candidate_count")]
    pub candidate_count: usize,
    #[serde(default = "default_context_window")]
    pub context_window: usize,
}

fn default_candidate_count() -> usize {
    SUGGESTION_COUNT
}

fn default_context_window() -> usize {
    SUGGESTION_CONTEXT_WINDOW
}

impl SuggestionsConfig {
    pub fn new(trigger: SuggestionTrigger, backend: ModelBackend) -> Self {
        Self {
            enabled: true,
            trigger,
            backend,
            candidate_count: SUGGESTION_COUNT,
            context_window: SUGGESTION_CONTEXT_WINDOW,
        }
    }

    pub fn validate(&self) -> Result<(), BotError> {
        if self.candidate_count != SUGGESTION_COUNT {
            return Err(BotError::FixedSuggestionParameter {
                field: "candidate_count",
                expected: SUGGESTION_COUNT,
                got: self.candidate_count,
            });
        }
        if self.context_window != SUGGESTION_CONTEXT_WINDOW {
            return Err(BotError::FixedSuggestionParameter {
                field: "context_window",
                expected: SUGGESTION_CONTEXT_WINDOW,
                got: self.context_window,
            });
        }
        if self.trigger == SuggestionTrigger::EveryN(0) {
            return Err(BotError::ZeroSuggestionInterval);
        }
        self.backend.validate()
    }
}

/// Whether the `received`-th counterpart message seen by a target slot should
/// trigger a push of fresh suggestions.
pub fn suggestion_due(config: &SuggestionsConfig, received: u64) -> bool {
    if !config.enabled || received == 0 {
        return false;
    }
    match config.trigger {
        SuggestionTrigger::EveryMessage => true,
        SuggestionTrigger::EveryN(n) => n > 0 && received % u64::from(n) == 0,
        SuggestionTrigger::Manual => false,
    }
}

/// Runs one bot turn against a provider. An empty reply is retried once.
pub async fn run_reply_job(
    provider: &dyn ChatProvider,
    request: &ChatRequest,
) -> Result<String, BotError> {
    for _ in 0..2 {
        let text = provider.complete(request).await?;
        let text = text.trim();
        if !text.is_empty() {
            return Ok(text.to_owned());
        }
    }
    Err(BotError::EmptyReply)
}

/// Runs one suggestion round. Output that does not parse into exactly three
/// candidates is retried once before giving up.
pub async fn run_suggestion_job(
    provider: &dyn ChatProvider,
    request: &ChatRequest,
) -> Result<[String; SUGGESTION_COUNT], BotError> {
    let mut last = BotError::MalformedProviderOutput { got: 0 };
    for _ in 0..2 {
        let raw = provider.complete(request).await?;
        match parse_candidates(&raw) {
            Ok(candidates) => return Ok(candidates),
            Err(err) => last = err,
        }
    }
    Err(last)
}
