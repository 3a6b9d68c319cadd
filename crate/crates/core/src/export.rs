//! Chat and Survey CSV export.
//!
//! Output is RFC 4180 with CRLF record separators. Text fields are always
//! quoted; numbers and booleans are bare; absent optional values are empty.
//! Column order is fixed by [`CHAT_COLUMNS`] and [`SURVEY_COLUMNS`].

use std::collections::BTreeMap;

use crate::clock::iso_utc;
use crate::engine::SessionState;
use crate::ids::{StudyId, SurveyId};
use crate::message::Message;
use crate::registry::Room;
use crate::survey::{AnswerValue, SurveyDefinition, SurveyResponse};
use crate::telemetry::MessageMetrics;

pub const CHAT_COLUMNS: [&str; 21] = [
    "study_id",
    "room_id",
    "room_code",
    "condition_label",
    "session_start_iso",
    "session_end_iso",
    "duration_s",
    "message_seq",
    "timestamp_ms",
    "slot_index",
    "display_name",
    "is_bot",
    "injected",
    "text",
    "first_keystroke_latency_ms",
    "reply_send_latency_ms",
    "typing_duration_ms",
    "keystroke_count",
    "edit_count",
    "paste_count",
    "click_count",
];

pub const SURVEY_COLUMNS: [&str; 17] = [
    "study_id",
    "room_id",
    "room_code",
    "condition_label",
    "survey_id",
    "survey_title",
    "question_id",
    "question_kind",
    "trigger_kind",
    "firing_index",
    "slot_index",
    "display_name",
    "value",
    "auto_submitted",
    "presented_at_ms",
    "submitted_at_ms",
    "preceding_message_seq",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportKind {
    Chat,
    Survey,
}

impl ExportKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "chat" => Some(Self::Chat),
            "survey" | "surveys" => Some(Self::Survey),
            _ => None,
        }
    }

    pub fn file_name(self) -> &'static str {
        match self {
            Self::Chat => "chat.csv",
            Self::Survey => "surveys.csv",
        }
    }
}

/// Everything one room contributes to an export, captured at request time.
#[derive(Debug, Clone)]
pub struct RoomExport {
    pub study_id: StudyId,
    pub room: Room,
    pub session: SessionState,
    pub transcript: Vec<Message>,
    pub metrics: BTreeMap<u64, MessageMetrics>,
    pub responses: Vec<SurveyResponse>,
    pub surveys: BTreeMap<SurveyId, SurveyDefinition>,
}

enum Field<'a> {
    Text(&'a str),
    Owned(String),
    Bare(String),
    Empty,
}

impl<'a> Field<'a> {
    fn opt_text(v: Option<&'a str>) -> Self {
        v.map_or(Field::Empty, Field::Text)
    }

    fn opt_num<T: ToString>(v: Option<T>) -> Self {
        v.map_or(Field::Empty, |n| Field::Bare(n.to_string()))
    }

    fn num<T: ToString>(v: T) -> Self {
        Field::Bare(v.to_string())
    }
}

fn write_quoted(out: &mut String, s: &str) {
    out.push('"');
    for c in s.chars() {
        if c == '"' {
            out.push('"');
        }
        out.push(c);
    }
    out.push('"');
}

fn write_record(out: &mut String, fields: &[Field<'_>]) {
    for (i, f) in fields.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        match f {
            Field::Text(s) => write_quoted(out, s),
            Field::Owned(s) => write_quoted(out, s),
            Field::Bare(s) => out.push_str(s),
            Field::Empty => {}
        }
    }
    out.push_str("\r\n");
}

fn header(out: &mut String, columns: &[&str]) {
    out.push_str(&columns.join(","));
    out.push_str("\r\n");
}

fn sorted(rooms: &[RoomExport]) -> Vec<&RoomExport> {
    let mut v: Vec<&RoomExport> = rooms.iter().collect();
    v.sort_by_key(|r| r.room.id);
    v
}

/// One row per message, ordered by room id then sequence number.
pub fn chat_csv(rooms: &[RoomExport]) -> Vec<u8> {
    let mut out = String::new();
    header(&mut out, &CHAT_COLUMNS);
    for r in sorted(rooms) {
        let start = r.session.started_at_ms.map(iso_utc);
        let end = r.session.ended_at_ms.map(iso_utc);
        let mut messages: Vec<&Message> = r.transcript.iter().collect();
        messages.sort_by_key(|m| m.seq);
        for m in messages {
            let metrics = r.metrics.get(&m.seq);
            write_record(
                &mut out,
                &[
                    Field::Owned(r.study_id.to_string()),
                    Field::Owned(r.room.id.to_string()),
                    Field::Text(r.room.code.as_str()),
                    Field::opt_text(r.room.condition_label.as_deref()),
                    Field::opt_text(start.as_deref()),
                    Field::opt_text(end.as_deref()),
                    Field::num(r.room.config.duration_s),
                    Field::num(m.seq),
                    Field::num(m.timestamp_ms),
                    Field::num(m.slot_index),
                    Field::Text(&m.display_name),
                    Field::num(m.is_bot),
                    Field::num(m.injected),
                    Field::Text(&m.text),
                    Field::opt_num(metrics.and_then(|x| x.first_keystroke_latency_ms)),
                    Field::opt_num(metrics.and_then(|x| x.reply_send_latency_ms)),
                    Field::opt_num(metrics.map(|x| x.typing_duration_ms)),
                    Field::opt_num(metrics.map(|x| x.keystroke_count)),
                    Field::opt_num(metrics.map(|x| x.edit_count)),
                    Field::opt_num(metrics.map(|x| x.paste_count)),
                    Field::opt_num(metrics.map(|x| x.click_count)),
                ],
            );
        }
    }
    out.into_bytes()
}

/// One row per stored survey answer, ordered by room id then storage order.
pub fn survey_csv(rooms: &[RoomExport]) -> Vec<u8> {
    let mut out = String::new();
    header(&mut out, &SURVEY_COLUMNS);
    for r in sorted(rooms) {
        for resp in &r.responses {
            let survey = r.surveys.get(&resp.survey_id);
            let question = survey.and_then(|s| s.question(resp.question_id));
            let display_name = r.room.slot(resp.slot_index).map(|s| s.display_name.as_str());
            let value = match &resp.value {
                AnswerValue::Int(n) => Field::num(n),
                AnswerValue::Text(t) => Field::Text(t),
                AnswerValue::Empty => Field::Empty,
            };
            write_record(
                &mut out,
                &[
                    Field::Owned(r.study_id.to_string()),
                    Field::Owned(r.room.id.to_string()),
                    Field::Text(r.room.code.as_str()),
                    Field::opt_text(r.room.condition_label.as_deref()),
                    Field::Owned(resp.survey_id.to_string()),
                    Field::opt_text(survey.map(|s| s.title.as_str())),
                    Field::Owned(resp.question_id.to_string()),
                    Field::opt_text(question.map(|q| q.kind.as_str())),
                    Field::opt_text(survey.map(|s| s.trigger.as_str())),
                    Field::num(resp.firing_index),
                    Field::num(resp.slot_index),
                    Field::opt_text(display_name),
                    value,
                    Field::num(resp.auto_submitted),
                    Field::num(resp.presented_at_ms),
                    Field::num(resp.submitted_at_ms),
                    Field::num(resp.preceding_message_seq),
                ],
            );
        }
    }
    out.into_bytes()
}

pub fn export(kind: ExportKind, rooms: &[RoomExport]) -> Vec<u8> {
    match kind {
        ExportKind::Chat => chat_csv(rooms),
        ExportKind::Survey => survey_csv(rooms),
    }
}
