//! Per-room session engine.
//!
//! [`RoomRuntime`] is a sans-IO state machine. Every operation takes the
//! current server time, first catches the room up to that instant (bot
//! deliveries, survey timers, answer windows, the session end, each at its
//! exact scheduled time), then applies itself. Side effects come out as an
//! outbox of [`Outbound`] events and a list of [`Job`]s for provider calls.
//! Callers serialize access per room; nothing here is shared.

mod events;
mod session;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bot::{
    build_bot_context, build_suggestion_request, draw_delay, suggestion_due, BotError, SUGGESTION_COUNT,
};
use crate::clock::EpochMs;
use crate::ids::{QuestionId, SlotIndex, SurveyId, RESEARCHER_SLOT};
use crate::message::Message;
use crate::registry::Room;
use crate::survey::{
    evaluate_triggers, AnswerValue, SurveyDefinition, SurveyDesk, SurveyError, SurveyResponse,
    SurveyTrigger, Targets, TriggerEvent, TriggerTracker,
};
use crate::telemetry::{InputKind, MessageMetrics, TelemetryBook, TimedInput};

pub use events::{
    Answer, Audience, BotDelivery, Job, JoinView, MonitorView, Outbound, PresentationView, RoomEvent, RosterEntry,
    TimerView,
};
pub use session::{RoomState, SessionState};

/// Per-message text cap in bytes.
pub const MAX_MESSAGE_BYTES: usize = 8 * 1024;
/// Minimum spacing between typing indicators from one slot.
pub const TYPING_DEBOUNCE_MS: i64 = 1_500;
pub const DEFAULT_INJECTOR_NAME: &str = "Researcher";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EngineError {
    #[error("unknown slot {0}")]
    UnknownSlot(SlotIndex),
    #[error("slot {0} is a bot slot")]
    BotSlot(SlotIndex),
    #[error("session is over")]
    SessionOver,
    #[error("slot already has a live connection")]
    AlreadyConnected,
    #[error("slot is not connected")]
    NotConnected,
    #[error("room is not in the ready check")]
    NotInReadyCheck,
    #[error("room is not active")]
    NotActive,
    #[error("message is empty")]
    EmptyMessage,
    #[error("message exceeds {MAX_MESSAGE_BYTES} bytes")]
    MessageTooLong,
    #[error("suggestions are not enabled for slot {0}")]
    SuggestionsDisabled(SlotIndex),
    #[error("survey {0} is not armed in this room")]
    UnknownSurvey(SurveyId),
    #[error("survey {0} is not manually triggered")]
    NotManualSurvey(SurveyId),
    #[error(transparent)]
    Bot(#[from] BotError),
    #[error(transparent)]
    Survey(#[from] SurveyError),
}

#[derive(Debug, Clone)]
struct PendingReply {
    generation: u64,
    trigger_seq: u64,
    trigger_ms: EpochMs,
    delay_ms: u64,
    due_ms: EpochMs,
    /// Provider output, once it has come back.
    text: Option<String>,
}

#[derive(Debug, Clone, Default)]
struct BotTurn {
    generation: u64,
    pending: Option<PendingReply>,
}

#[derive(Debug, Clone, Default)]
struct SuggestionCounter {
    received: u64,
    generation: u64,
}

/// Durable part of a room's runtime, enough to rebuild it after restart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomRecord {
    pub room: Room,
    pub session: SessionState,
    pub transcript: Vec<Message>,
    pub responses: Vec<SurveyResponse>,
    pub metrics: Vec<MessageMetrics>,
    pub bot_log: Vec<BotDelivery>,
    pub armed: Vec<(SurveyDefinition, u32)>,
}

#[derive(Debug)]
pub struct RoomRuntime {
    room: Room,
    session: SessionState,
    connected: BTreeSet<SlotIndex>,
    transcript: Vec<Message>,
    rng: ChaCha8Rng,
    bots: BTreeMap<SlotIndex, BotTurn>,
    suggestions: BTreeMap<SlotIndex, SuggestionCounter>,
    armed: Vec<TriggerTracker>,
    desk: SurveyDesk,
    telemetry: TelemetryBook,
    last_typing: BTreeMap<SlotIndex, EpochMs>,
    bot_log: Vec<BotDelivery>,
    injector_name: String,
    /// Latest instant the room has been advanced to.
    cursor: EpochMs,
    outbox: Vec<Outbound>,
    jobs: Vec<Job>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Deadline {
    BotDelivery(SlotIndex),
    SurveyClock,
    SurveyWindow,
    SessionEnd,
}

impl RoomRuntime {
    pub fn new(room: Room, seed: u64) -> Self {
        let session = SessionState::new(room.id);
        let desk = SurveyDesk::new(room.id);
        Self {
            room,
            session,
            connected: BTreeSet::new(),
            transcript: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            bots: BTreeMap::new(),
            suggestions: BTreeMap::new(),
            armed: Vec::new(),
            desk,
            telemetry: TelemetryBook::default(),
            last_typing: BTreeMap::new(),
            bot_log: Vec::new(),
            injector_name: DEFAULT_INJECTOR_NAME.to_owned(),
            cursor: EpochMs::MIN,
            outbox: Vec::new(),
            jobs: Vec::new(),
        }
    }

    pub fn restore(record: RoomRecord, seed: u64) -> Self {
        let mut rt = Self::new(record.room, seed);
        rt.cursor = record
            .transcript
            .last()
            .map(|m| m.timestamp_ms)
            .into_iter()
            .chain(record.session.ended_at_ms)
            .max()
            .unwrap_or(EpochMs::MIN);
        rt.session = record.session;
        rt.transcript = record.transcript;
        rt.desk.restore_responses(record.responses);
        rt.telemetry.restore(record.metrics);
        rt.bot_log = record.bot_log;
        rt.armed = record
            .armed
            .into_iter()
            .map(|(def, fired)| TriggerTracker::resume(Arc::new(def), fired))
            .collect();
        rt
    }

    pub fn record(&self) -> RoomRecord {
        RoomRecord {
            room: self.room.clone(),
            session: self.session.clone(),
            transcript: self.transcript.clone(),
            responses: self.desk.responses().to_vec(),
            metrics: self.telemetry.all_metrics().cloned().collect(),
            bot_log: self.bot_log.clone(),
            armed: self
                .armed
                .iter()
                .map(|t| ((*t.definition).clone(), t.fired()))
                .collect(),
        }
    }

    pub fn set_injector_name(&mut self, name: impl Into<String>) {
        self.injector_name = name.into();
    }

    pub fn room(&self) -> &Room {
        &self.room
    }

    /// Mutable access to the room definition. Callers must only use this
    /// before the session starts.
    pub fn room_mut(&mut self) -> &mut Room {
        &mut self.room
    }

    pub fn session(&self) -> &SessionState {
        &self.session
    }

    pub fn state(&self) -> RoomState {
        self.session.state
    }

    pub fn transcript(&self) -> &[Message] {
        &self.transcript
    }

    pub fn responses(&self) -> &[SurveyResponse] {
        self.desk.responses()
    }

    pub fn metrics(&self, seq: u64) -> Option<&MessageMetrics> {
        self.telemetry.metrics(seq)
    }

    pub fn all_metrics(&self) -> impl Iterator<Item = &MessageMetrics> {
        self.telemetry.all_metrics()
    }

    pub fn bot_log(&self) -> &[BotDelivery] {
        &self.bot_log
    }

    pub fn is_connected(&self, slot: SlotIndex) -> bool {
        self.connected.contains(&slot)
    }

    pub fn open_presentation(&self, slot: SlotIndex) -> Option<PresentationView> {
        self.desk.open_for(slot).map(PresentationView::from)
    }

    pub fn outstanding_presentations(&self) -> usize {
        self.desk.outstanding()
    }

    pub fn armed_surveys(&self) -> impl Iterator<Item = (&SurveyDefinition, u32)> {
        self.armed.iter().map(|t| (&*t.definition, t.fired()))
    }

    pub fn drain_outbox(&mut self) -> Vec<Outbound> {
        std::mem::take(&mut self.outbox)
    }

    pub fn drain_jobs(&mut self) -> Vec<Job> {
        std::mem::take(&mut self.jobs)
    }

    pub fn timer(&self) -> Option<TimerView> {
        let started_at_ms = self.session.started_at_ms?;
        let duration_ms = self.room.config.duration_ms();
        Some(TimerView {
            started_at_ms,
            duration_ms,
            ends_at_ms: started_at_ms + duration_ms,
            visible: self.room.config.show_timer,
        })
    }

    pub fn roster(&self) -> Vec<RosterEntry> {
        self.room
            .slots
            .iter()
            .map(|s| RosterEntry {
                slot_index: s.index,
                display_name: s.display_name.clone(),
                connected: !s.is_human() || self.connected.contains(&s.index),
            })
            .collect()
    }

    pub fn monitor_view(&self) -> MonitorView {
        MonitorView {
            room_id: self.room.id,
            room_code: self.room.code.clone(),
            condition_label: self.room.condition_label.clone(),
            session: self.session.clone(),
            roster: self.roster(),
            timer: self.timer(),
            transcript: self.transcript.clone(),
        }
    }

    fn join_view(&self, slot: SlotIndex) -> JoinView {
        let s = self.room.slot(slot).expect("caller checked slot");
        JoinView {
            room_code: self.room.code.clone(),
            slot_index: slot,
            display_name: s.display_name.clone(),
            instructions_text: s.instructions_text.clone(),
            roster: self.roster(),
            state: self.session.state,
            require_ready: self.room.config.require_ready,
            timer: self.timer(),
            transcript: self.transcript.clone(),
            open_survey: self.open_presentation(slot),
        }
    }

    fn emit(&mut self, audience: Audience, event: RoomEvent) {
        self.outbox.push(Outbound { audience, event });
    }

    fn human_slot(&self, slot: SlotIndex) -> Result<(), EngineError> {
        let s = self.room.slot(slot).ok_or(EngineError::UnknownSlot(slot))?;
        if s.is_human() {
            Ok(())
        } else {
            Err(EngineError::BotSlot(slot))
        }
    }

    fn message_count(&self) -> u64 {
        self.transcript.len() as u64
    }

    // ---- clock ----------------------------------------------------------

    /// Catches the room up to `now`, processing every deadline that falls at
    /// or before it in chronological order.
    pub fn advance_clock(&mut self, now: EpochMs) -> &SessionState {
        self.on_clock(now);
        &self.session
    }

    fn on_clock(&mut self, now: EpochMs) -> EpochMs {
        while let Some((at, what)) = self.earliest_deadline() {
            if at > now {
                break;
            }
            let at = at.max(self.cursor);
            self.cursor = at;
            match what {
                Deadline::BotDelivery(slot) => self.deliver_bot(slot, at),
                Deadline::SurveyClock => self.fire_clock_triggers(at),
                Deadline::SurveyWindow => self.expire_windows(at),
                Deadline::SessionEnd => self.end_session(at),
            }
        }
        self.cursor = self.cursor.max(now);
        self.cursor
    }

    fn session_end_ms(&self) -> Option<EpochMs> {
        match self.session.state {
            RoomState::Active => self.session.started_at_ms.map(|s| s + self.room.config.duration_ms()),
            _ => None,
        }
    }

    fn earliest_deadline(&self) -> Option<(EpochMs, Deadline)> {
        let mut candidates: Vec<(EpochMs, Deadline)> = Vec::new();
        for (slot, turn) in &self.bots {
            if let Some(PendingReply { due_ms, text: Some(_), .. }) = &turn.pending {
                candidates.push((*due_ms, Deadline::BotDelivery(*slot)));
            }
        }
        if let (Some(started), Some(end)) = (self.session.started_at_ms, self.session_end_ms()) {
            if let Some(due) = self.armed.iter().filter_map(|t| t.next_due_elapsed_ms()).min() {
                let at = started + due;
                if at <= end {
                    candidates.push((at, Deadline::SurveyClock));
                }
            }
            candidates.push((end, Deadline::SessionEnd));
        }
        if let Some(at) = self.desk.next_deadline() {
            candidates.push((at, Deadline::SurveyWindow));
        }
        candidates.into_iter().min()
    }

    /// Earliest instant at which the room needs a tick, if any.
    pub fn next_deadline(&self) -> Option<EpochMs> {
        self.earliest_deadline().map(|(at, _)| at.max(self.cursor))
    }

    fn fire_clock_triggers(&mut self, at: EpochMs) {
        let Some(started) = self.session.started_at_ms else { return };
        let firings = evaluate_triggers(&mut self.armed, TriggerEvent::ClockTick { elapsed_ms: at - started });
        self.present_firings(firings, at);
    }

    fn expire_windows(&mut self, at: EpochMs) {
        let (_, opened) = self.desk.expire(at, self.message_count());
        for p in &opened {
            self.emit(Audience::Slot(p.slot), RoomEvent::SurveyPresented(p.into()));
        }
    }

    fn end_session(&mut self, at: EpochMs) {
        if self.session.state != RoomState::Active {
            return;
        }
        self.session.state = RoomState::Ended;
        self.session.ended_at_ms = Some(at);
        for turn in self.bots.values_mut() {
            turn.generation += 1;
            turn.pending = None;
        }
        self.emit(Audience::Everyone, RoomEvent::State(self.session.clone()));
        let firings = evaluate_triggers(&mut self.armed, TriggerEvent::SessionEnded);
        self.present_firings(firings, at);
    }

    /// Ends an Active room at `now` regardless of the remaining time. Rooms
    /// that never started are left as they are.
    pub fn end_now(&mut self, now: EpochMs) -> &SessionState {
        let now = self.on_clock(now);
        self.end_session(now);
        &self.session
    }

    // ---- lifecycle ------------------------------------------------------

    pub fn join(&mut self, slot: SlotIndex, now: EpochMs) -> Result<JoinView, EngineError> {
        let now = self.on_clock(now);
        self.human_slot(slot)?;
        if self.session.state == RoomState::Ended {
            return Err(EngineError::SessionOver);
        }
        if !self.connected.insert(slot) {
            return Err(EngineError::AlreadyConnected);
        }
        let display_name = self.room.slot(slot).expect("checked").display_name.clone();
        let roster = self.roster();
        self.emit(Audience::AllBut(slot), RoomEvent::Joined { slot, display_name, roster });
        if self.session.state == RoomState::Created {
            self.transition(RoomState::Waiting);
        }
        if self.session.state == RoomState::Waiting && self.all_humans_connected() {
            if self.room.config.require_ready {
                self.transition(RoomState::ReadyCheck);
            } else {
                self.activate(now);
            }
        }
        Ok(self.join_view(slot))
    }

    pub fn leave(&mut self, slot: SlotIndex, now: EpochMs) {
        self.on_clock(now);
        if self.connected.remove(&slot) {
            let display_name = self
                .room
                .slot(slot)
                .map(|s| s.display_name.clone())
                .unwrap_or_default();
            let roster = self.roster();
            self.emit(Audience::AllBut(slot), RoomEvent::Left { slot, display_name, roster });
        }
    }

    fn all_humans_connected(&self) -> bool {
        self.room.human_slots().all(|s| self.connected.contains(&s.index))
    }

    fn all_humans_ready(&self) -> bool {
        self.room
            .human_slots()
            .all(|s| self.session.ready_confirmed.contains(&s.index))
    }

    fn transition(&mut self, next: RoomState) {
        debug_assert!(self.session.state.can_become(next, self.room.config.require_ready));
        self.session.state = next;
        self.emit(Audience::Everyone, RoomEvent::State(self.session.clone()));
    }

    fn activate(&mut self, now: EpochMs) {
        self.session.started_at_ms = Some(now);
        self.transition(RoomState::Active);
        if let Some(timer) = self.timer() {
            self.emit(Audience::Everyone, RoomEvent::Timer(timer));
        }
    }

    pub fn confirm_ready(&mut self, slot: SlotIndex, now: EpochMs) -> Result<&SessionState, EngineError> {
        let now = self.on_clock(now);
        self.human_slot(slot)?;
        if self.session.state != RoomState::ReadyCheck {
            return Err(EngineError::NotInReadyCheck);
        }
        if !self.connected.contains(&slot) {
            return Err(EngineError::NotConnected);
        }
        if self.session.ready_confirmed.insert(slot) {
            self.emit(Audience::Monitors, RoomEvent::State(self.session.clone()));
        }
        if self.all_humans_ready() {
            self.activate(now);
        }
        Ok(&self.session)
    }

    // ---- messages -------------------------------------------------------

    fn check_text(text: &str) -> Result<(), EngineError> {
        if text.trim().is_empty() {
            return Err(EngineError::EmptyMessage);
        }
        if text.len() > MAX_MESSAGE_BYTES {
            return Err(EngineError::MessageTooLong);
        }
        Ok(())
    }

    fn append(&mut self, slot: SlotIndex, display_name: String, is_bot: bool, injected: bool, text: String, at: EpochMs) -> Message {
        let message = Message {
            seq: self.message_count() + 1,
            room_id: self.room.id,
            slot_index: slot,
            display_name,
            is_bot,
            injected,
            text,
            timestamp_ms: at,
        };
        self.transcript.push(message.clone());
        self.emit(Audience::Everyone, RoomEvent::Message(message.clone()));
        message
    }

    /// Delivery times of conversational messages `slot` received from others.
    fn counterpart_deliveries(&self, slot: SlotIndex) -> Vec<EpochMs> {
        self.transcript
            .iter()
            .filter(|m| m.is_conversational() && m.slot_index != slot)
            .map(|m| m.timestamp_ms)
            .collect()
    }

    pub fn post_message(&mut self, slot: SlotIndex, text: &str, now: EpochMs) -> Result<Message, EngineError> {
        let now = self.on_clock(now);
        let s = self.room.slot(slot).ok_or(EngineError::UnknownSlot(slot))?;
        if !s.is_human() {
            return Err(EngineError::BotSlot(slot));
        }
        if self.session.state != RoomState::Active {
            return Err(EngineError::NotActive);
        }
        if !self.connected.contains(&slot) {
            return Err(EngineError::NotConnected);
        }
        Self::check_text(text)?;
        let name = s.display_name.clone();
        let message = self.append(slot, name, false, false, text.to_owned(), now);
        let deliveries = self.counterpart_deliveries(slot);
        self.telemetry.finalize(&message, &deliveries);
        self.last_typing.remove(&slot);
        self.after_message(&message, now);
        Ok(message)
    }

    pub fn inject(&mut self, text: &str, now: EpochMs) -> Result<Message, EngineError> {
        let now = self.on_clock(now);
        if self.session.state != RoomState::Active {
            return Err(EngineError::NotActive);
        }
        Self::check_text(text)?;
        let name = self.injector_name.clone();
        let message = self.append(RESEARCHER_SLOT, name, false, true, text.to_owned(), now);
        self.after_message(&message, now);
        Ok(message)
    }

    /// Survey, bot, and suggestion follow-ups for a newly stored message.
    fn after_message(&mut self, message: &Message, at: EpochMs) {
        let firings = evaluate_triggers(&mut self.armed, TriggerEvent::MessagePosted { seq: message.seq });
        self.present_firings(firings, at);
        if message.injected {
            return;
        }
        let bot_slots: Vec<SlotIndex> = self
            .room
            .slots
            .iter()
            .filter(|s| s.bot_config().is_some() && s.index != message.slot_index)
            .map(|s| s.index)
            .collect();
        for bot in bot_slots {
            self.schedule_bot(bot, message);
        }
        let targets: Vec<SlotIndex> = self
            .room
            .slots
            .iter()
            .filter(|s| s.is_human() && s.index != message.slot_index)
            .filter(|s| s.suggestions.as_ref().is_some_and(|c| c.enabled))
            .map(|s| s.index)
            .collect();
        for target in targets {
            let counter = self.suggestions.entry(target).or_default();
            counter.received += 1;
            let received = counter.received;
            let cfg = self.room.slot(target).and_then(|s| s.suggestions.as_ref()).expect("filtered");
            if suggestion_due(cfg, received) {
                if let Err(err) = self.queue_suggestions(target) {
                    self.emit(Audience::Monitors, RoomEvent::MonitorLog { text: format!("suggestions for slot {target}: {err}") });
                }
            }
        }
    }

    // ---- bots -----------------------------------------------------------

    fn schedule_bot(&mut self, bot: SlotIndex, trigger: &Message) {
        let cfg = self.room.slot(bot).and_then(|s| s.bot_config()).expect("bot slot").clone();
        let delay_ms = draw_delay(cfg.delay, &mut self.rng);
        let turn = self.bots.entry(bot).or_default();
        turn.generation += 1;
        let due_ms = trigger.timestamp_ms + delay_ms as i64;
        turn.pending = Some(PendingReply {
            generation: turn.generation,
            trigger_seq: trigger.seq,
            trigger_ms: trigger.timestamp_ms,
            delay_ms,
            due_ms,
            text: None,
        });
        let generation = turn.generation;
        let request = build_bot_context(&self.transcript, bot, &cfg.backend.model, &cfg.system_prompt);
        self.jobs.push(Job::BotReply {
            room_id: self.room.id,
            slot: bot,
            generation,
            backend: cfg.backend,
            request,
            due_at_ms: due_ms,
        });
    }

    /// Feeds a provider result for a bot turn back in. Results for a
    /// superseded or cancelled turn are discarded; otherwise the reply is
    /// delivered at its due time, or immediately if that has already passed.
    pub fn bot_reply_ready(
        &mut self,
        slot: SlotIndex,
        generation: u64,
        result: Result<String, BotError>,
        now: EpochMs,
    ) {
        let now = self.on_clock(now);
        let Some(turn) = self.bots.get_mut(&slot) else { return };
        let current = matches!(&turn.pending, Some(p) if p.generation == generation && p.text.is_none());
        if !current {
            return;
        }
        match result {
            Ok(text) => {
                let pending = turn.pending.as_mut().expect("checked");
                let mut text = text;
                if text.len() > MAX_MESSAGE_BYTES {
                    let mut cut = MAX_MESSAGE_BYTES;
                    while !text.is_char_boundary(cut) {
                        cut -= 1;
                    }
                    text.truncate(cut);
                }
                pending.text = Some(text);
                if pending.due_ms <= now {
                    self.deliver_bot(slot, now);
                }
            }
            Err(err) => {
                turn.pending = None;
                self.emit(Audience::Monitors, RoomEvent::MonitorLog { text: format!("bot slot {slot} skipped a turn: {err}") });
            }
        }
    }

    fn deliver_bot(&mut self, slot: SlotIndex, at: EpochMs) {
        let Some(pending) = self.bots.get_mut(&slot).and_then(|t| t.pending.take()) else { return };
        let Some(text) = pending.text else { return };
        if self.session.state != RoomState::Active {
            return;
        }
        let name = self.room.slot(slot).map(|s| s.display_name.clone()).unwrap_or_default();
        let message = self.append(slot, name, true, false, text, at);
        self.bot_log.push(BotDelivery {
            slot,
            trigger_seq: pending.trigger_seq,
            trigger_ms: pending.trigger_ms,
            delay_ms: pending.delay_ms,
            delivered_seq: message.seq,
            delivered_ms: at,
        });
        self.after_message(&message, at);
    }

    // ---- suggestions ----------------------------------------------------

    fn queue_suggestions(&mut self, target: SlotIndex) -> Result<(), EngineError> {
        let s = self.room.slot(target).ok_or(EngineError::UnknownSlot(target))?;
        let cfg = s
            .suggestions
            .as_ref()
            .filter(|c| c.enabled)
            .ok_or(EngineError::SuggestionsDisabled(target))?;
        let request = build_suggestion_request(&self.transcript, target, &s.display_name, &cfg.backend.model)?;
        let backend = cfg.backend.clone();
        let counter = self.suggestions.entry(target).or_default();
        counter.generation += 1;
        self.jobs.push(Job::Suggestions {
            room_id: self.room.id,
            slot: target,
            generation: counter.generation,
            backend,
            request,
        });
        Ok(())
    }

    /// Pull-based suggestion round requested by the target participant.
    pub fn request_suggestions(&mut self, slot: SlotIndex, now: EpochMs) -> Result<(), EngineError> {
        self.on_clock(now);
        self.human_slot(slot)?;
        if self.session.state != RoomState::Active {
            return Err(EngineError::NotActive);
        }
        self.queue_suggestions(slot)
    }

    pub fn suggestions_ready(
        &mut self,
        slot: SlotIndex,
        generation: u64,
        result: Result<[String; SUGGESTION_COUNT], BotError>,
        now: EpochMs,
    ) {
        self.on_clock(now);
        let current = self.suggestions.get(&slot).is_some_and(|c| c.generation == generation);
        if !current || self.session.state != RoomState::Active {
            return;
        }
        match result {
            Ok(candidates) => self.emit(Audience::Slot(slot), RoomEvent::Suggestions { slot, candidates }),
            Err(err) => self.emit(Audience::Monitors, RoomEvent::MonitorLog { text: format!("suggestions for slot {slot} failed: {err}") }),
        }
    }

    // ---- telemetry ------------------------------------------------------

    /// Buffers one input event. Returns whether it was accepted; events from
    /// bots, disconnected slots, or outside Active are dropped.
    pub fn ingest_input(&mut self, slot: SlotIndex, kind: InputKind, at_ms: EpochMs, now: EpochMs) -> bool {
        let now = self.on_clock(now);
        let accepted = self.session.state == RoomState::Active
            && self.room.slot(slot).is_some_and(|s| s.is_human())
            && self.connected.contains(&slot);
        if !accepted {
            return false;
        }
        let at_ms = at_ms.min(now);
        self.telemetry.ingest(slot, TimedInput { kind, at_ms });
        self.emit(Audience::Monitors, RoomEvent::Telemetry { slot, kind, at_ms });
        if matches!(kind, InputKind::Keystroke | InputKind::Deletion | InputKind::Paste) {
            let last = self.last_typing.get(&slot).copied();
            if last.map_or(true, |t| now - t >= TYPING_DEBOUNCE_MS) {
                self.last_typing.insert(slot, now);
                let display_name = self.room.slot(slot).expect("checked").display_name.clone();
                self.emit(Audience::AllBut(slot), RoomEvent::Typing { slot, display_name });
            }
        }
        true
    }

    pub fn telemetry_buffer(&self, slot: SlotIndex) -> &[TimedInput] {
        self.telemetry.buffer(slot)
    }

    // ---- surveys --------------------------------------------------------

    /// Arms a survey in this room. Ignored once the room has ended or if the
    /// same survey is already armed.
    pub fn arm_survey(&mut self, definition: Arc<SurveyDefinition>, now: EpochMs) -> bool {
        self.on_clock(now);
        if self.session.state == RoomState::Ended || self.armed.iter().any(|t| t.definition.id == definition.id) {
            return false;
        }
        self.armed.push(TriggerTracker::new(definition));
        true
    }

    pub fn push_survey(&mut self, survey_id: SurveyId, now: EpochMs) -> Result<usize, EngineError> {
        let now = self.on_clock(now);
        let tracker = self
            .armed
            .iter()
            .find(|t| t.definition.id == survey_id)
            .ok_or(EngineError::UnknownSurvey(survey_id))?;
        if tracker.definition.trigger != SurveyTrigger::Manual {
            return Err(EngineError::NotManualSurvey(survey_id));
        }
        let firings = evaluate_triggers(&mut self.armed, TriggerEvent::ManualPush(survey_id));
        Ok(self.present_firings(firings, now))
    }

    fn targets(&self, targets: &Targets) -> Vec<SlotIndex> {
        self.room
            .human_slots()
            .map(|s| s.index)
            .filter(|i| targets.includes(*i))
            .collect()
    }

    fn present_firings(&mut self, firings: Vec<crate::survey::Firing>, at: EpochMs) -> usize {
        let mut presented = 0;
        for firing in firings {
            let Some(def) = self
                .armed
                .iter()
                .find(|t| t.definition.id == firing.survey_id)
                .map(|t| Arc::clone(&t.definition))
            else {
                continue;
            };
            for slot in self.targets(&def.targets) {
                presented += 1;
                let count = self.message_count();
                if let Some(p) = self.desk.present(Arc::clone(&def), firing.firing_index, slot, at, count) {
                    self.emit(Audience::Slot(slot), RoomEvent::SurveyPresented((&p).into()));
                }
            }
        }
        presented
    }

    /// Streams the participant's current widget value.
    pub fn survey_state(
        &mut self,
        slot: SlotIndex,
        presentation_id: u64,
        question_id: QuestionId,
        value: AnswerValue,
        now: EpochMs,
    ) -> Result<(), EngineError> {
        self.on_clock(now);
        self.human_slot(slot)?;
        Ok(self.desk.update_widget(slot, presentation_id, question_id, value)?)
    }

    pub fn submit_survey(
        &mut self,
        slot: SlotIndex,
        presentation_id: u64,
        answers: &[Answer],
        now: EpochMs,
    ) -> Result<Vec<SurveyResponse>, EngineError> {
        let now = self.on_clock(now);
        self.human_slot(slot)?;
        let count = self.message_count();
        let (rows, next) = self.desk.record_response(slot, presentation_id, answers, now, count)?;
        if let Some(p) = next {
            self.emit(Audience::Slot(slot), RoomEvent::SurveyPresented((&p).into()));
        }
        Ok(rows)
    }
}
