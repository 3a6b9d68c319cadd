use serde::{Deserialize, Serialize};

use crate::bot::{ChatRequest, ModelBackend, SUGGESTION_COUNT};
use crate::clock::EpochMs;
use crate::ids::{QuestionId, RoomCode, RoomId, SlotIndex, SurveyId};
use crate::message::Message;
use crate::survey::{OpenPresentation, Question};
use crate::telemetry::InputKind;

use super::session::{RoomState, SessionState};

/// Who receives a room event. Monitors receive every event regardless.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Audience {
    /// All participant channels in the room.
    Everyone,
    /// One slot's participant channels.
    Slot(SlotIndex),
    /// All participant channels except one slot's.
    AllBut(SlotIndex),
    /// Monitor channels only.
    Monitors,
}

impl Audience {
    pub fn includes_slot(self, slot: SlotIndex) -> bool {
        match self {
            Audience::Everyone => true,
            Audience::Slot(s) => s == slot,
            Audience::AllBut(s) => s != slot,
            Audience::Monitors => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RosterEntry {
    pub slot_index: SlotIndex,
    pub display_name: String,
    pub connected: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimerView {
    pub started_at_ms: EpochMs,
    pub duration_ms: i64,
    pub ends_at_ms: EpochMs,
    pub visible: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PresentationView {
    pub presentation_id: u64,
    pub survey_id: SurveyId,
    pub title: String,
    pub questions: Vec<Question>,
    pub presented_at_ms: EpochMs,
    pub deadline_ms: EpochMs,
    pub answer_window_s: u32,
    pub slot_index: SlotIndex,
}

impl From<&OpenPresentation> for PresentationView {
    fn from(p: &OpenPresentation) -> Self {
        Self {
            presentation_id: p.id,
            survey_id: p.survey.id,
            title: p.survey.title.clone(),
            questions: p.survey.questions.clone(),
            presented_at_ms: p.presented_at_ms,
            deadline_ms: p.deadline_ms,
            answer_window_s: p.survey.answer_window_s,
            slot_index: p.slot,
        }
    }
}

/// What a joining participant (or reconnecting one) is shown.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JoinView {
    pub room_code: RoomCode,
    pub slot_index: SlotIndex,
    pub display_name: String,
    /// This slot's own pre-chat instructions, never another slot's.
    pub instructions_text: Option<String>,
    pub roster: Vec<RosterEntry>,
    pub state: RoomState,
    pub require_ready: bool,
    pub timer: Option<TimerView>,
    pub transcript: Vec<Message>,
    pub open_survey: Option<PresentationView>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonitorView {
    pub room_id: RoomId,
    pub room_code: RoomCode,
    pub condition_label: Option<String>,
    pub session: SessionState,
    pub roster: Vec<RosterEntry>,
    pub timer: Option<TimerView>,
    pub transcript: Vec<Message>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RoomEvent {
    Joined { slot: SlotIndex, display_name: String, roster: Vec<RosterEntry> },
    Left { slot: SlotIndex, display_name: String, roster: Vec<RosterEntry> },
    State(SessionState),
    Timer(TimerView),
    Message(Message),
    Typing { slot: SlotIndex, display_name: String },
    Suggestions { slot: SlotIndex, candidates: [String; SUGGESTION_COUNT] },
    SurveyPresented(PresentationView),
    Telemetry { slot: SlotIndex, kind: InputKind, at_ms: EpochMs },
    MonitorLog { text: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outbound {
    pub audience: Audience,
    pub event: RoomEvent,
}

/// Slow work the engine needs done outside its ordered step.
#[derive(Debug, Clone, PartialEq)]
pub enum Job {
    BotReply {
        room_id: RoomId,
        slot: SlotIndex,
        generation: u64,
        backend: ModelBackend,
        request: ChatRequest,
        due_at_ms: EpochMs,
    },
    Suggestions {
        room_id: RoomId,
        slot: SlotIndex,
        generation: u64,
        backend: ModelBackend,
        request: ChatRequest,
    },
}

impl Job {
    pub fn room_id(&self) -> RoomId {
        match self {
            Job::BotReply { room_id, .. } | Job::Suggestions { room_id, .. } => *room_id,
        }
    }

    pub fn slot(&self) -> SlotIndex {
        match self {
            Job::BotReply { slot, .. } | Job::Suggestions { slot, .. } => *slot,
        }
    }
}

/// One completed bot turn, kept for auditing delivery timing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BotDelivery {
    pub slot: SlotIndex,
    pub trigger_seq: u64,
    pub trigger_ms: EpochMs,
    pub delay_ms: u64,
    pub delivered_seq: u64,
    pub delivered_ms: EpochMs,
}

/// A widget answer as submitted by the client.
pub type Answer = (QuestionId, crate::survey::AnswerValue);
