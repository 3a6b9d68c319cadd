use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use crate::clock::EpochMs;
use crate::ids::{QuestionId, RoomId, SlotIndex};

use super::{AnswerValue, SurveyDefinition, SurveyError, SurveyResponse};

/// A survey currently on screen for one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct OpenPresentation {
    pub id: u64,
    pub survey: Arc<SurveyDefinition>,
    pub slot: SlotIndex,
    pub firing_index: u32,
    pub presented_at_ms: EpochMs,
    pub preceding_message_seq: u64,
    pub deadline_ms: EpochMs,
    last_known: BTreeMap<QuestionId, AnswerValue>,
}

impl OpenPresentation {
    pub fn last_known(&self, question: QuestionId) -> Option<&AnswerValue> {
        self.last_known.get(&question)
    }

    fn close(self, answers: BTreeMap<QuestionId, AnswerValue>, room_id: RoomId, now: EpochMs, auto: bool) -> Vec<SurveyResponse> {
        self.survey
            .questions
            .iter()
            .map(|q| SurveyResponse {
                survey_id: self.survey.id,
                question_id: q.id,
                room_id,
                slot_index: self.slot,
                value: answers
                    .get(&q.id)
                    .or_else(|| self.last_known.get(&q.id))
                    .cloned()
                    .unwrap_or_else(|| q.untouched_value()),
                auto_submitted: auto,
                presented_at_ms: self.presented_at_ms,
                submitted_at_ms: now,
                preceding_message_seq: self.preceding_message_seq,
                firing_index: self.firing_index,
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
struct Queued {
    survey: Arc<SurveyDefinition>,
    firing_index: u32,
}

/// Per-room presentation bookkeeping: at most one open presentation per
/// slot, later ones queue behind it.
#[derive(Debug, Clone)]
pub struct SurveyDesk {
    room_id: RoomId,
    open: BTreeMap<SlotIndex, OpenPresentation>,
    queued: BTreeMap<SlotIndex, VecDeque<Queued>>,
    responses: Vec<SurveyResponse>,
    next_id: u64,
}

impl SurveyDesk {
    pub fn new(room_id: RoomId) -> Self {
        Self {
            room_id,
            open: BTreeMap::new(),
            queued: BTreeMap::new(),
            responses: Vec::new(),
            next_id: 1,
        }
    }

    /// Presents `survey` to `slot`, or queues it if the slot already has one
    /// open. Returns the presentation if it opened immediately.
    pub fn present(
        &mut self,
        survey: Arc<SurveyDefinition>,
        firing_index: u32,
        slot: SlotIndex,
        now: EpochMs,
        message_count: u64,
    ) -> Option<OpenPresentation> {
        if self.open.contains_key(&slot) {
            self.queued
                .entry(slot)
                .or_default()
                .push_back(Queued { survey, firing_index });
            return None;
        }
        Some(self.open_now(Queued { survey, firing_index }, slot, now, message_count))
    }

    fn open_now(&mut self, q: Queued, slot: SlotIndex, now: EpochMs, message_count: u64) -> OpenPresentation {
        let id = self.next_id;
        self.next_id += 1;
        let deadline_ms = now + i64::from(q.survey.answer_window_s) * 1000;
        let p = OpenPresentation {
            id,
            survey: q.survey,
            slot,
            firing_index: q.firing_index,
            presented_at_ms: now,
            preceding_message_seq: message_count,
            deadline_ms,
            last_known: BTreeMap::new(),
        };
        self.open.insert(slot, p.clone());
        p
    }

    fn open_mut(&mut self, slot: SlotIndex, presentation_id: u64) -> Result<&mut OpenPresentation, SurveyError> {
        self.open
            .get_mut(&slot)
            .filter(|p| p.id == presentation_id)
            .ok_or(SurveyError::PresentationClosed)
    }

    /// Records the client's current widget state; this is what gets
    /// auto-submitted if the window runs out.
    pub fn update_widget(
        &mut self,
        slot: SlotIndex,
        presentation_id: u64,
        question_id: QuestionId,
        value: AnswerValue,
    ) -> Result<(), SurveyError> {
        let p = self.open_mut(slot, presentation_id)?;
        let question = p
            .survey
            .question(question_id)
            .ok_or(SurveyError::UnknownQuestion(question_id))?;
        question.check_value(&value)?;
        p.last_known.insert(question_id, value);
        Ok(())
    }

    /// Participant submit. Unanswered questions fall back to their last known
    /// widget state. Returns the stored rows and the next queued
    /// presentation for this slot, if one opened.
    pub fn record_response(
        &mut self,
        slot: SlotIndex,
        presentation_id: u64,
        answers: &[(QuestionId, AnswerValue)],
        now: EpochMs,
        message_count: u64,
    ) -> Result<(Vec<SurveyResponse>, Option<OpenPresentation>), SurveyError> {
        let p = self.open_mut(slot, presentation_id)?;
        if now > p.deadline_ms {
            return Err(SurveyError::PresentationClosed);
        }
        let mut accepted = BTreeMap::new();
        for (qid, value) in answers {
            let question = p.survey.question(*qid).ok_or(SurveyError::UnknownQuestion(*qid))?;
            question.check_value(value)?;
            accepted.insert(*qid, value.clone());
        }
        let p = self.open.remove(&slot).expect("checked above");
        let rows = p.close(accepted, self.room_id, now, false);
        self.responses.extend(rows.iter().cloned());
        let next = self.open_next(slot, now, message_count);
        Ok((rows, next))
    }

    fn open_next(&mut self, slot: SlotIndex, now: EpochMs, message_count: u64) -> Option<OpenPresentation> {
        let next = self.queued.get_mut(&slot)?.pop_front()?;
        Some(self.open_now(next, slot, now, message_count))
    }

    /// Auto-submits every presentation whose window has run out by `now`.
    pub fn expire(&mut self, now: EpochMs, message_count: u64) -> (Vec<SurveyResponse>, Vec<OpenPresentation>) {
        let due: Vec<SlotIndex> = self
            .open
            .iter()
            .filter(|(_, p)| p.deadline_ms <= now)
            .map(|(slot, _)| *slot)
            .collect();
        let mut rows = Vec::new();
        let mut opened = Vec::new();
        for slot in due {
            let p = self.open.remove(&slot).expect("collected above");
            rows.extend(p.close(BTreeMap::new(), self.room_id, now, true));
            if let Some(next) = self.open_next(slot, now, message_count) {
                opened.push(next);
            }
        }
        self.responses.extend(rows.iter().cloned());
        (rows, opened)
    }

    pub fn next_deadline(&self) -> Option<EpochMs> {
        self.open.values().map(|p| p.deadline_ms).min()
    }

    pub fn open_for(&self, slot: SlotIndex) -> Option<&OpenPresentation> {
        self.open.get(&slot)
    }

    pub fn responses(&self) -> &[SurveyResponse] {
        &self.responses
    }

    pub fn restore_responses(&mut self, responses: Vec<SurveyResponse>) {
        self.responses = responses;
    }

    /// Presentations still awaiting a response, open or queued.
    pub fn outstanding(&self) -> usize {
        self.open.len() + self.queued.values().map(VecDeque::len).sum::<usize>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::{StudyId, SurveyId};
    use crate::survey::{Question, QuestionKind, SurveyScope, SurveyTrigger, Targets};
    use uuid::Uuid;

    const T0: EpochMs = 1_700_000_000_000;

    fn qid(n: u128) -> QuestionId {
        QuestionId(Uuid::from_u128(n))
    }

    fn survey(kinds: Vec<QuestionKind>) -> Arc<SurveyDefinition> {
        Arc::new(SurveyDefinition {
            id: SurveyId(Uuid::from_u128(77)),
            study_id: StudyId(Uuid::nil()),
            title: "Feeling thermometer".into(),
            questions: kinds
                .into_iter()
                .enumerate()
                .map(|(i, kind)| Question {
                    id: qid(i as u128 + 1),
                    kind,
                    prompt: "How warm do you feel toward this person right now?".into(),
                })
                .collect(),
            trigger: SurveyTrigger::Manual,
            answer_window_s: 10,
            targets: Targets::All,
            scope: SurveyScope::Study(StudyId(Uuid::nil())),
        })
    }

    fn thermo() -> QuestionKind {
        QuestionKind::Thermometer {
            low_label: "Cold".into(),
            high_label: "Warm".into(),
        }
    }

    fn likert() -> QuestionKind {
        QuestionKind::Likert {
            min: 1,
            max: 7,
            low_label: "Not at all".into(),
            high_label: "Extremely".into(),
        }
    }

    fn desk() -> SurveyDesk {
        SurveyDesk::new(RoomId(Uuid::nil()))
    }

    #[test]
    fn linkage_records_preceding_sequence() {
        let mut d = desk();
        let p = d.present(survey(vec![thermo()]), 1, 1, T0, 3).unwrap();
        assert_eq!(p.preceding_message_seq, 3);
        let p = d.present(survey(vec![thermo()]), 1, 2, T0, 0).unwrap();
        assert_eq!(p.preceding_message_seq, 0);
        assert_eq!(d.outstanding(), 2);
    }

    #[test]
    fn submitted_value_is_stored() {
        let mut d = desk();
        let p = d.present(survey(vec![likert()]), 1, 1, T0, 0).unwrap();
        let (rows, next) = d
            .record_response(1, p.id, &[(qid(1), AnswerValue::Int(5))], T0 + 4_000, 2)
            .unwrap();
        assert!(next.is_none());
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].value, AnswerValue::Int(5));
        assert!(!rows[0].auto_submitted);
        assert_eq!(
            d.record_response(1, p.id, &[], T0 + 5_000, 2),
            Err(SurveyError::PresentationClosed)
        );
    }

    #[test]
    fn out_of_range_leaves_presentation_open() {
        let mut d = desk();
        let p = d.present(survey(vec![likert()]), 1, 1, T0, 0).unwrap();
        assert_eq!(
            d.record_response(1, p.id, &[(qid(1), AnswerValue::Int(9))], T0, 0),
            Err(SurveyError::OutOfRange(qid(1)))
        );
        assert!(d.open_for(1).is_some());
    }

    #[test]
    fn expiry_submits_last_known_value() {
        let mut d = desk();
        let p = d.present(survey(vec![thermo()]), 1, 1, T0, 3).unwrap();
        d.update_widget(1, p.id, qid(1), AnswerValue::Int(40)).unwrap();
        d.update_widget(1, p.id, qid(1), AnswerValue::Int(65)).unwrap();
        let (rows, _) = d.expire(T0 + 9_999, 3);
        assert!(rows.is_empty());
        let (rows, _) = d.expire(T0 + 10_000, 3);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].value, AnswerValue::Int(65));
        assert!(rows[0].auto_submitted);
        assert_eq!(rows[0].submitted_at_ms - rows[0].presented_at_ms, 10_000);
    }

    #[test]
    fn untouched_widgets_use_defaults() {
        let mut d = desk();
        d.present(survey(vec![thermo(), likert(), QuestionKind::OpenText]), 1, 1, T0, 0);
        let (rows, _) = d.expire(T0 + 10_000, 0);
        let values: Vec<_> = rows.iter().map(|r| r.value.clone()).collect();
        assert_eq!(
            values,
            vec![AnswerValue::Int(50), AnswerValue::Empty, AnswerValue::Text(String::new())]
        );
        assert!(rows.iter().all(|r| r.auto_submitted));
    }

    #[test]
    fn queued_presentation_opens_after_the_current_one_closes() {
        let mut d = desk();
        let s = survey(vec![thermo()]);
        let first = d.present(s.clone(), 1, 1, T0, 1).unwrap();
        assert!(d.present(s.clone(), 2, 1, T0 + 1_000, 2).is_none());
        assert_eq!(d.outstanding(), 2);
        let (_, next) = d.record_response(1, first.id, &[], T0 + 2_000, 4).unwrap();
        let next = next.unwrap();
        assert_eq!(next.firing_index, 2);
        assert_eq!(next.presented_at_ms, T0 + 2_000);
        assert_eq!(next.preceding_message_seq, 4);
        assert_eq!(d.next_deadline(), Some(T0 + 12_000));
    }

    #[test]
    fn widget_updates_are_range_checked() {
        let mut d = desk();
        let p = d.present(survey(vec![thermo()]), 1, 1, T0, 0).unwrap();
        assert!(d.update_widget(1, p.id, qid(1), AnswerValue::Int(150)).is_err());
        assert!(d.update_widget(1, p.id, qid(9), AnswerValue::Int(1)).is_err());
        assert!(d.update_widget(1, p.id + 1, qid(1), AnswerValue::Int(1)).is_err());
    }
}
