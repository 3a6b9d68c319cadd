//! Arms one survey per trigger kind and prints when each fires. Every
//! presentation is left unanswered, so the answer window expires and the
//! resting value is stored.

use std::collections::BTreeSet;
use std::sync::Arc;

use colloquy::engine::{RoomEvent, RoomRuntime};
use colloquy::ids::{ParticipantToken, QuestionId, RoomCode, RoomId, StudyId, SurveyId};
use colloquy::registry::{Room, RoomConfig, Slot};
use colloquy::survey::{Question, QuestionKind, SurveyDefinition, SurveyScope, SurveyTrigger, Targets};
use uuid::Uuid;

const T0: i64 = 1_700_000_000_000;

fn survey(n: u128, trigger: SurveyTrigger, slot: u8) -> Arc<SurveyDefinition> {
    Arc::new(SurveyDefinition {
        id: SurveyId(Uuid::from_u128(n)),
        study_id: StudyId(Uuid::from_u128(2)),
        title: trigger.as_str().into(),
        questions: vec![Question {
            id: QuestionId(Uuid::from_u128(100 + n)),
            kind: QuestionKind::Likert {
                min: 1,
                max: 7,
                low_label: "Not at all".into(),
                high_label: "Extremely".into(),
            },
            prompt: "How engaged do you feel?".into(),
        }],
        trigger,
        answer_window_s: 10,
        targets: Targets::Slots(BTreeSet::from([slot])),
        scope: SurveyScope::Study(StudyId(Uuid::from_u128(2))),
    })
}

fn main() {
    let slots = (1..=4)
        .map(|i| Slot::human(i, ParticipantToken::from_untrusted(&format!("token-{i}")).unwrap()))
        .collect();
    let room = Room {
        id: RoomId(Uuid::from_u128(1)),
        study_id: StudyId(Uuid::from_u128(2)),
        code: RoomCode::parse("SURVEY").unwrap(),
        condition_label: None,
        slots,
        config: RoomConfig {
            require_ready: false,
            ..RoomConfig::text(60)
        },
    };
    let mut rt = RoomRuntime::new(room, 1);
    for s in [
        survey(1, SurveyTrigger::AfterSeconds(20), 1),
        survey(2, SurveyTrigger::AfterMessages(3), 2),
        survey(3, SurveyTrigger::Recurring(25), 3),
        survey(4, SurveyTrigger::PostChat, 4),
    ] {
        rt.arm_survey(s, T0);
    }
    for slot in 1..=4 {
        rt.join(slot, T0).unwrap();
    }
    for (i, at) in [5_000, 12_000, 18_000, 33_000].into_iter().enumerate() {
        rt.post_message(1 + (i % 2) as u8, "message", T0 + at).unwrap();
    }
    // Step deadline by deadline, as the server ticker does.
    while let Some(due) = rt.next_deadline() {
        rt.advance_clock(due);
        for out in rt.drain_outbox() {
            if let RoomEvent::SurveyPresented(p) = out.event {
                println!("{:>6} ms  slot {}  {}", p.presented_at_ms - T0, p.slot_index, p.title);
            }
        }
    }
    for r in rt.responses() {
        println!(
            "slot {} firing {} value {:?} auto={} after {} ms",
            r.slot_index,
            r.firing_index,
            r.value,
            r.auto_submitted,
            r.submitted_at_ms - r.presented_at_ms
        );
    }
}
