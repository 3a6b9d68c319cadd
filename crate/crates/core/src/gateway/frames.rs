//! Wire frames. Each frame is one JSON object on one line:
//! `{"type": ..., "seq": ..., "ts_ms": ..., "payload": {...}}`.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::bot::SUGGESTION_COUNT;
use crate::clock::EpochMs;
use crate::engine::{
    JoinView, MonitorView, PresentationView, RoomEvent, RosterEntry, SessionState, TimerView, MAX_MESSAGE_BYTES,
};
use crate::ids::{QuestionId, SlotIndex, SurveyId};
use crate::message::Message;
use crate::survey::AnswerValue;
use crate::telemetry::InputKind;

/// Upper bound on one inbound frame, before any parsing.
pub const MAX_FRAME_BYTES: usize = 32 * 1024;
pub const PROTOCOL_VERSION: u32 = 1;
pub const HEARTBEAT_INTERVAL_MS: u64 = 20_000;
/// Missed heartbeats after which a channel is closed.
pub const HEARTBEAT_MISSES: u32 = 2;

pub const FRAME_TYPES: [&str; 16] = [
    "hello",
    "snapshot",
    "ready",
    "chat",
    "typing",
    "input_event",
    "suggestions",
    "suggestion_request",
    "survey_present",
    "survey_state",
    "survey_response",
    "inject",
    "survey_push",
    "timer",
    "state",
    "error",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seq: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ts_ms: Option<EpochMs>,
    #[serde(default)]
    pub payload: Value,
}

impl Envelope {
    pub fn encode(&self) -> String {
        serde_json::to_string(self).expect("frames always serialize")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelRole {
    Participant,
    Monitor,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FrameError {
    #[error("malformed frame: {0}")]
    MalformedFrame(String),
    #[error("unknown frame type {0:?}")]
    UnknownType(String),
}

impl FrameError {
    pub fn code(&self) -> &'static str {
        match self {
            FrameError::MalformedFrame(_) => "malformed_frame",
            FrameError::UnknownType(_) => "unknown_type",
        }
    }
}

// ---- inbound --------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct HelloIn {
    #[serde(default)]
    pub client_offset_ms: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct ChatIn {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct InputEventIn {
    pub kind: InputKind,
    pub client_offset_ms: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct SurveyStateIn {
    pub presentation_id: u64,
    pub question_id: QuestionId,
    pub value: AnswerValue,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerIn {
    pub question_id: QuestionId,
    pub value: AnswerValue,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct SurveyResponseIn {
    pub presentation_id: u64,
    #[serde(default)]
    pub answers: Vec<AnswerIn>,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct InjectIn {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct SurveyPushIn {
    pub survey_id: SurveyId,
}

/// A client frame that passed parsing and role checks. Identity comes from
/// the channel, never from the payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Inbound {
    Hello(HelloIn),
    Ready,
    Chat(ChatIn),
    InputEvent(InputEventIn),
    SuggestionRequest,
    SurveyState(SurveyStateIn),
    SurveyResponse(SurveyResponseIn),
    Inject(InjectIn),
    SurveyPush(SurveyPushIn),
}

#[derive(Deserialize)]
struct RawFrame {
    #[serde(rename = "type")]
    kind: String,
    #[serde(default)]
    payload: Value,
}

fn payload<T: DeserializeOwned>(v: Value) -> Result<T, FrameError> {
    let v = if v.is_null() { Value::Object(Default::default()) } else { v };
    serde_json::from_value(v).map_err(|e| FrameError::MalformedFrame(e.to_string()))
}

fn check_text(text: &str) -> Result<(), FrameError> {
    if text.len() > MAX_MESSAGE_BYTES {
        return Err(FrameError::MalformedFrame(format!("text exceeds {MAX_MESSAGE_BYTES} bytes")));
    }
    Ok(())
}

/// Parses one client frame for a channel of the given role.
pub fn parse_inbound(line: &str, role: ChannelRole) -> Result<Inbound, FrameError> {
    if line.len() > MAX_FRAME_BYTES {
        return Err(FrameError::MalformedFrame(format!("frame exceeds {MAX_FRAME_BYTES} bytes")));
    }
    let raw: RawFrame = serde_json::from_str(line).map_err(|e| FrameError::MalformedFrame(e.to_string()))?;
    if !FRAME_TYPES.contains(&raw.kind.as_str()) {
        return Err(FrameError::UnknownType(raw.kind));
    }
    use ChannelRole::*;
    let frame = match (raw.kind.as_str(), role) {
        ("hello", _) => Inbound::Hello(payload(raw.payload)?),
        ("ready", Participant) => Inbound::Ready,
        ("chat", Participant) => {
            let chat: ChatIn = payload(raw.payload)?;
            check_text(&chat.text)?;
            Inbound::Chat(chat)
        }
        ("input_event", Participant) => Inbound::InputEvent(payload(raw.payload)?),
        ("suggestion_request", Participant) => Inbound::SuggestionRequest,
        ("survey_state", Participant) => {
            let s: SurveyStateIn = payload(raw.payload)?;
            if let AnswerValue::Text(t) = &s.value {
                check_text(t)?;
            }
            Inbound::SurveyState(s)
        }
        ("survey_response", Participant) => Inbound::SurveyResponse(payload(raw.payload)?),
        ("inject", Monitor) => {
            let inject: InjectIn = payload(raw.payload)?;
            check_text(&inject.text)?;
            Inbound::Inject(inject)
        }
        ("survey_push", Monitor) => Inbound::SurveyPush(payload(raw.payload)?),
        (kind, _) => {
            return Err(FrameError::MalformedFrame(format!("{kind} frames are not accepted on this channel")))
        }
    };
    Ok(frame)
}

// ---- outbound -------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HelloOut {
    pub protocol: u32,
    pub server_ts_ms: EpochMs,
    pub heartbeat_interval_ms: u64,
}

/// Payload of `state` frames: a lifecycle change, a roster change, or both.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateOut {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session: Option<SessionState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub roster: Option<Vec<RosterEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notice: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypingOut {
    pub slot_index: SlotIndex,
    pub display_name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuggestionsOut {
    pub slot_index: SlotIndex,
    pub candidates: [String; SUGGESTION_COUNT],
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputEventOut {
    pub slot_index: SlotIndex,
    pub kind: InputKind,
    pub at_ms: EpochMs,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorOut {
    pub code: String,
    pub message: String,
}

fn frame<T: Serialize>(kind: &str, seq: Option<u64>, ts_ms: EpochMs, body: &T) -> Envelope {
    Envelope {
        kind: kind.to_owned(),
        seq,
        ts_ms: Some(ts_ms),
        payload: serde_json::to_value(body).expect("payloads always serialize"),
    }
}

pub fn hello_frame(now: EpochMs) -> Envelope {
    frame(
        "hello",
        None,
        now,
        &HelloOut {
            protocol: PROTOCOL_VERSION,
            server_ts_ms: now,
            heartbeat_interval_ms: HEARTBEAT_INTERVAL_MS,
        },
    )
}

pub fn snapshot_frame(view: &JoinView, now: EpochMs) -> Envelope {
    frame("snapshot", view.transcript.last().map(|m| m.seq), now, view)
}

pub fn monitor_snapshot_frame(view: &MonitorView, now: EpochMs) -> Envelope {
    frame("snapshot", view.transcript.last().map(|m| m.seq), now, view)
}

pub fn error_frame(code: &str, message: impl Into<String>, now: EpochMs) -> Envelope {
    frame(
        "error",
        None,
        now,
        &ErrorOut {
            code: code.to_owned(),
            message: message.into(),
        },
    )
}

pub fn chat_frame(m: &Message) -> Envelope {
    frame("chat", Some(m.seq), m.timestamp_ms, m)
}

pub fn timer_frame(t: &TimerView, now: EpochMs) -> Envelope {
    frame("timer", None, now, t)
}

pub fn survey_present_frame(p: &PresentationView) -> Envelope {
    frame("survey_present", None, p.presented_at_ms, p)
}

/// Encodes one room event. The same frame goes to every recipient;
/// audiences are decided by the hub.
pub fn event_frame(event: &RoomEvent, now: EpochMs) -> Envelope {
    match event {
        RoomEvent::Joined { display_name, roster, .. } => frame(
            "state",
            None,
            now,
            &StateOut {
                session: None,
                roster: Some(roster.clone()),
                notice: Some(format!("{display_name} joined the chat")),
            },
        ),
        RoomEvent::Left { display_name, roster, .. } => frame(
            "state",
            None,
            now,
            &StateOut {
                session: None,
                roster: Some(roster.clone()),
                notice: Some(format!("{display_name} left the chat")),
            },
        ),
        RoomEvent::State(s) => frame(
            "state",
            None,
            now,
            &StateOut {
                session: Some(s.clone()),
                roster: None,
                notice: None,
            },
        ),
        RoomEvent::Timer(t) => timer_frame(t, now),
        RoomEvent::Message(m) => chat_frame(m),
        RoomEvent::Typing { slot, display_name } => frame(
            "typing",
            None,
            now,
            &TypingOut {
                slot_index: *slot,
                display_name: display_name.clone(),
            },
        ),
        RoomEvent::Suggestions { slot, candidates } => frame(
            "suggestions",
            None,
            now,
            &SuggestionsOut {
                slot_index: *slot,
                candidates: candidates.clone(),
            },
        ),
        RoomEvent::SurveyPresented(p) => survey_present_frame(p),
        RoomEvent::Telemetry { slot, kind, at_ms } => frame(
            "input_event",
            None,
            now,
            &InputEventOut {
                slot_index: *slot,
                kind: *kind,
                at_ms: *at_ms,
            },
        ),
        RoomEvent::MonitorLog { text } => error_frame("monitor_log", text.clone(), now),
    }
}
