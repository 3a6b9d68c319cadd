use std::sync::Arc;

use crate::ids::SurveyId;

use super::{SurveyDefinition, SurveyTrigger};

/// Inputs to trigger evaluation. Elapsed time is measured from the Active
/// transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TriggerEvent {
    MessagePosted { seq: u64 },
    ClockTick { elapsed_ms: i64 },
    SessionEnded,
    ManualPush(SurveyId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Firing {
    pub survey_id: SurveyId,
    /// 1-based count of how many times this survey has fired in the room.
    pub firing_index: u32,
}

/// Firing bookkeeping for one survey armed in one room.
#[derive(Debug, Clone)]
pub struct TriggerTracker {
    pub definition: Arc<SurveyDefinition>,
    fired: u32,
}

impl TriggerTracker {
    pub fn new(definition: Arc<SurveyDefinition>) -> Self {
        Self { definition, fired: 0 }
    }

    /// Re-creates a tracker that has already fired `fired` times.
    pub fn resume(definition: Arc<SurveyDefinition>, fired: u32) -> Self {
        Self { definition, fired }
    }

    pub fn fired(&self) -> u32 {
        self.fired
    }

    /// Earliest elapsed time at which a clock-based trigger would next fire.
    pub fn next_due_elapsed_ms(&self) -> Option<i64> {
        match self.definition.trigger {
            SurveyTrigger::AfterSeconds(s) if self.fired == 0 => Some(i64::from(s) * 1000),
            SurveyTrigger::Recurring(i) => Some(i64::from(self.fired + 1) * i64::from(i) * 1000),
            _ => None,
        }
    }

    fn observe(&mut self, event: TriggerEvent, out: &mut Vec<Firing>) {
        let id = self.definition.id;
        let mut fire = |fired: &mut u32| {
            *fired += 1;
            out.push(Firing {
                survey_id: id,
                firing_index: *fired,
            });
        };
        match (self.definition.trigger, event) {
            (SurveyTrigger::AfterMessages(n), TriggerEvent::MessagePosted { seq })
                if self.fired == 0 && seq >= u64::from(n) =>
            {
                fire(&mut self.fired)
            }
            (SurveyTrigger::AfterSeconds(s), TriggerEvent::ClockTick { elapsed_ms })
                if self.fired == 0 && elapsed_ms >= i64::from(s) * 1000 =>
            {
                fire(&mut self.fired)
            }
            (SurveyTrigger::Recurring(i), TriggerEvent::ClockTick { elapsed_ms }) => {
                let interval_ms = i64::from(i) * 1000;
                while i64::from(self.fired + 1) * interval_ms <= elapsed_ms {
                    fire(&mut self.fired);
                }
            }
            (SurveyTrigger::PostChat, TriggerEvent::SessionEnded) if self.fired == 0 => {
                fire(&mut self.fired)
            }
            (SurveyTrigger::Manual, TriggerEvent::ManualPush(target)) if target == id => {
                fire(&mut self.fired)
            }
            _ => {}
        }
    }
}

/// Feeds one event to every armed survey and returns the resulting firings
/// in arming order.
pub fn evaluate_triggers(armed: &mut [TriggerTracker], event: TriggerEvent) -> Vec<Firing> {
    let mut out = Vec::new();
    for tracker in armed.iter_mut() {
        tracker.observe(event, &mut out);
    }
    out
}
