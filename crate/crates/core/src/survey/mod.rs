//! In-session surveys.
//!
//! A [`SurveyDefinition`] bundles questions with a trigger rule. Once armed
//! in a room, [`TriggerTracker`] decides when it fires and [`SurveyDesk`]
//! presents it to each target slot, runs the answer window, and turns every
//! presentation into exactly one [`SurveyResponse`] per question, either
//! submitted by the participant or auto-submitted from the last widget state
//! the server saw.

mod desk;
mod trigger;

use std::collections::{BTreeMap, BTreeSet};

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::EpochMs;
use crate::ids::{AccountId, QuestionId, RoomId, SlotIndex, StudyId, SurveyId};

pub use desk::{OpenPresentation, SurveyDesk};
pub use trigger::{evaluate_triggers, Firing, TriggerEvent, TriggerTracker};

pub const DEFAULT_ANSWER_WINDOW_S: u32 = 10;
pub const THERMOMETER_MIN: i64 = 0;
pub const THERMOMETER_MAX: i64 = 100;
pub const THERMOMETER_DEFAULT: i64 = 50;
pub const MAX_OPEN_TEXT_BYTES: usize = 8 * 1024;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SurveyError {
    #[error("not authorized for this study")]
    NotAuthorized,
    #[error("a survey needs at least one question")]
    NoQuestions,
    #[error("unknown question {0}")]
    UnknownQuestion(QuestionId),
    #[error("invalid trigger parameters: {0}")]
    BadTriggerParams(&'static str),
    #[error("invalid question: {0}")]
    InvalidQuestion(&'static str),
    #[error("unknown survey {0}")]
    UnknownSurvey(SurveyId),
    #[error("value out of range for question {0}")]
    OutOfRange(QuestionId),
    #[error("presentation is closed")]
    PresentationClosed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QuestionKind {
    Likert {
        min: i64,
        max: i64,
        low_label: String,
        high_label: String,
    },
    Thermometer {
        low_label: String,
        high_label: String,
    },
    OpenText,
}

impl QuestionKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            QuestionKind::Likert { .. } => "likert",
            QuestionKind::Thermometer { .. } => "thermometer",
            QuestionKind::OpenText => "open_text",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub id: QuestionId,
    pub kind: QuestionKind,
    pub prompt: String,
}

impl Question {
    pub fn validate(&self) -> Result<(), SurveyError> {
        if let QuestionKind::Likert { min, max, .. } = self.kind {
            if min >= max {
                return Err(SurveyError::InvalidQuestion("likert min must be below max"));
            }
        }
        if self.prompt.trim().is_empty() {
            return Err(SurveyError::InvalidQuestion("empty prompt"));
        }
        Ok(())
    }

    /// Checks that `value` is an admissible answer. Empty is always allowed;
    /// it is the sentinel for a question left untouched.
    pub fn check_value(&self, value: &AnswerValue) -> Result<(), SurveyError> {
        let ok = match (&self.kind, value) {
            (_, AnswerValue::Empty) => true,
            (QuestionKind::Likert { min, max, .. }, AnswerValue::Int(v)) => (*min..=*max).contains(v),
            (QuestionKind::Thermometer { .. }, AnswerValue::Int(v)) => {
                (THERMOMETER_MIN..=THERMOMETER_MAX).contains(v)
            }
            (QuestionKind::OpenText, AnswerValue::Text(t)) => t.len() <= MAX_OPEN_TEXT_BYTES,
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(SurveyError::OutOfRange(self.id))
        }
    }

    /// Value recorded when the answer window closes on an untouched widget.
    pub fn untouched_value(&self) -> AnswerValue {
        match self.kind {
            QuestionKind::Thermometer { .. } => AnswerValue::Int(THERMOMETER_DEFAULT),
            QuestionKind::Likert { .. } => AnswerValue::Empty,
            QuestionKind::OpenText => AnswerValue::Text(String::new()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AnswerValue {
    Int(i64),
    Text(String),
    Empty,
}

impl AnswerValue {
    pub fn to_field(&self) -> String {
        match self {
            AnswerValue::Int(v) => v.to_string(),
            AnswerValue::Text(t) => t.clone(),
            AnswerValue::Empty => String::new(),
        }
    }
}

impl Default for AnswerValue {
    fn default() -> Self {
        AnswerValue::Empty
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurveyTrigger {
    Manual,
    AfterSeconds(u32),
    AfterMessages(u32),
    Recurring(u32),
    PostChat,
}

impl SurveyTrigger {
    pub fn as_str(&self) -> &'static str {
        match self {
            SurveyTrigger::Manual => "manual",
            SurveyTrigger::AfterSeconds(_) => "after_seconds",
            SurveyTrigger::AfterMessages(_) => "after_messages",
            SurveyTrigger::Recurring(_) => "recurring",
            SurveyTrigger::PostChat => "post_chat",
        }
    }

    pub fn validate(&self) -> Result<(), SurveyError> {
        match self {
            SurveyTrigger::AfterSeconds(0) => Err(SurveyError::BadTriggerParams("after_seconds must be positive")),
            SurveyTrigger::AfterMessages(0) => Err(SurveyError::BadTriggerParams("after_messages must be positive")),
            SurveyTrigger::Recurring(0) => Err(SurveyError::BadTriggerParams("recurring interval must be at least 1 s")),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Targets {
    All,
    Slots(BTreeSet<SlotIndex>),
}

impl Targets {
    pub fn includes(&self, slot: SlotIndex) -> bool {
        match self {
            Targets::All => true,
            Targets::Slots(set) => set.contains(&slot),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurveyScope {
    Room(RoomId),
    Study(StudyId),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyDefinition {
    pub id: SurveyId,
    pub study_id: StudyId,
    pub title: String,
    /// Question snapshots taken from the library when the survey was defined.
    pub questions: Vec<Question>,
    pub trigger: SurveyTrigger,
    pub answer_window_s: u32,
    pub targets: Targets,
    pub scope: SurveyScope,
}

impl SurveyDefinition {
    pub fn validate(&self) -> Result<(), SurveyError> {
        if self.questions.is_empty() {
            return Err(SurveyError::NoQuestions);
        }
        if self.answer_window_s == 0 {
            return Err(SurveyError::BadTriggerParams("answer window must be at least 1 s"));
        }
        self.trigger.validate()?;
        self.questions.iter().try_for_each(Question::validate)
    }

    pub fn question_ids(&self) -> Vec<QuestionId> {
        self.questions.iter().map(|q| q.id).collect()
    }

    pub fn question(&self, id: QuestionId) -> Option<&Question> {
        self.questions.iter().find(|q| q.id == id)
    }

    pub fn applies_to_room(&self, room: RoomId, study: StudyId) -> bool {
        match self.scope {
            SurveyScope::Room(r) => r == room,
            SurveyScope::Study(s) => s == study,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyResponse {
    pub survey_id: SurveyId,
    pub question_id: QuestionId,
    pub room_id: RoomId,
    pub slot_index: SlotIndex,
    pub value: AnswerValue,
    pub auto_submitted: bool,
    pub presented_at_ms: EpochMs,
    pub submitted_at_ms: EpochMs,
    /// Sequence number of the last room message before presentation, 0 if none.
    pub preceding_message_seq: u64,
    pub firing_index: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionLibraryEntry {
    pub owner_account_id: AccountId,
    pub question: Question,
    pub saved_at: EpochMs,
}

/// Saved questions, keyed by id. Each account sees its own entries plus any
/// explicitly shared through studies it can access.
#[derive(Debug, Default)]
pub struct QuestionLibrary {
    entries: RwLock<BTreeMap<QuestionId, QuestionLibraryEntry>>,
}

impl QuestionLibrary {
    pub fn save(&self, entry: QuestionLibraryEntry) -> Result<QuestionId, SurveyError> {
        entry.question.validate()?;
        let id = entry.question.id;
        self.entries.write().insert(id, entry);
        Ok(id)
    }

    pub fn get(&self, id: QuestionId) -> Option<QuestionLibraryEntry> {
        self.entries.read().get(&id).cloned()
    }

    pub fn owned_by(&self, account: AccountId) -> Vec<QuestionLibraryEntry> {
        self.entries
            .read()
            .values()
            .filter(|e| e.owner_account_id == account)
            .cloned()
            .collect()
    }

    pub fn all(&self) -> Vec<QuestionLibraryEntry> {
        self.entries.read().values().cloned().collect()
    }

    pub fn restore(&self, entries: Vec<QuestionLibraryEntry>) {
        let mut map = self.entries.write();
        for e in entries {
            map.insert(e.question.id, e);
        }
    }
}
