//! Headless scenario runner. A scenario drives one room through the same
//! channel API the server uses, on a virtual clock, then checks the run
//! against invariants that do not depend on the engine's own bookkeeping.

mod scenario;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;

use serde_json::{json, Value};
use thiserror::Error;

use crate::auth::{AuthConfig, Secrets};
use crate::bot::{BotConfig, DelayLaw, SuggestionsConfig, SUGGESTION_COUNT, SUGGESTION_CONTEXT_WINDOW};
use crate::clock::{EpochMs, VirtualClock};
use crate::engine::{BotDelivery, SessionState};
use crate::export::ExportKind;
use crate::gateway::FrameReceiver;
use crate::ids::{AccountId, QuestionId, RoomId, SlotIndex, SurveyId};
use crate::message::Message;
use crate::platform::{ParticipantChannel, Platform, PlatformConfig, PlatformError, QueuedJobs, SlotSettings, SurveyDraft};
use crate::registry::{ImportRow, RoomConfig, StudyType};
use crate::survey::{Question, SurveyResponse, SurveyScope, SurveyTrigger, Targets};

pub use scenario::{
    parse_events, Action, QuestionSpec, RoomSpec, Scenario, ScenarioEvent, SlotKindSpec, SlotSpec, SuggestionSpec,
    SurveySpec, DEFAULT_START_MS,
};

/// The bundled demo: two humans and a scripted bot, a recurring
/// thermometer, manual suggestions and one researcher injection.
pub const DEMO_SCENARIO: &str = include_str!("../../scenarios/demo.toml");

pub const DEFAULT_SIM_SEED: u64 = 7;

const OPERATOR_EMAIL: &str = "operator@sim.invalid";
const OPERATOR_PASSWORD: &str = "simulation-operator";
const STEP_GUARD: usize = 1_000_000;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("scenario: {0}")]
    ScenarioParse(String),
    #[error("setup: {0}")]
    Setup(#[from] PlatformError),
    #[error("clock did not settle after {0} steps")]
    Runaway(usize),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// A request the platform turned down during the run, as seen on the wire
/// or returned by a researcher call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection {
    pub at_ms: i64,
    pub slot: SlotIndex,
    pub code: String,
    pub message: String,
}

/// Everything a run produced.
#[derive(Debug, Clone)]
pub struct SmokeReport {
    pub name: String,
    pub seed: u64,
    pub room_id: RoomId,
    pub start_ms: EpochMs,
    pub session: SessionState,
    pub transcript: Vec<Message>,
    pub responses: Vec<SurveyResponse>,
    pub bot_log: Vec<BotDelivery>,
    pub chat_csv: Vec<u8>,
    pub surveys_csv: Vec<u8>,
    /// Frames received by each human slot, in arrival order.
    pub wire: BTreeMap<SlotIndex, Vec<Value>>,
    pub monitor_wire: Vec<Value>,
    pub rejections: Vec<Rejection>,
    pub violations: Vec<String>,
}

impl SmokeReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn write_outputs(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(ExportKind::Chat.file_name()), &self.chat_csv)?;
        std::fs::write(dir.join(ExportKind::Survey.file_name()), &self.surveys_csv)
    }

    pub fn frames_of<'a>(&'a self, slot: SlotIndex, kind: &'a str) -> impl Iterator<Item = &'a Value> + 'a {
        self.wire
            .get(&slot)
            .into_iter()
            .flatten()
            .filter(move |f| f["type"] == kind)
    }

    pub fn summary(&self) -> String {
        let elapsed = |t: Option<EpochMs>| t.map(|t| format!("{} ms", t - self.start_ms)).unwrap_or("-".into());
        let mut out = format!(
            "scenario {} (seed {})\nroom {}\nstarted {} ended {}\nmessages {} (bot {}) responses {} rejections {}\n",
            self.name,
            self.seed,
            self.room_id,
            elapsed(self.session.started_at_ms),
            elapsed(self.session.ended_at_ms),
            self.transcript.len(),
            self.transcript.iter().filter(|m| m.is_bot).count(),
            self.responses.len(),
            self.rejections.len(),
        );
        if self.violations.is_empty() {
            out.push_str("invariants: ok\n");
        } else {
            for v in &self.violations {
                out.push_str(&format!("violation: {v}\n"));
            }
        }
        out
    }
}

/// Fixed secrets for simulated runs. Nothing sealed with them leaves the
/// process.
fn sim_secrets() -> Secrets {
    Secrets::parse(&"5a".repeat(32), "simulation").expect("static secrets are valid")
}

struct Connection {
    channel: ParticipantChannel,
    rx: FrameReceiver,
    anchor_ms: EpochMs,
}

struct Runner<'a> {
    scenario: &'a Scenario,
    clock: Arc<VirtualClock>,
    jobs: Arc<QueuedJobs>,
    platform: Platform,
    operator: AccountId,
    room: RoomId,
    surveys: Vec<SurveyId>,
    connections: BTreeMap<SlotIndex, Connection>,
    monitor_rx: FrameReceiver,
    wire: BTreeMap<SlotIndex, Vec<Value>>,
    monitor_wire: Vec<Value>,
    rejections: Vec<Rejection>,
    ended_by_action: bool,
}

/// Runs a scenario to completion. `seed` overrides the scenario's own.
pub fn run(scenario: &Scenario, seed: Option<u64>) -> Result<SmokeReport, SimError> {
    let seed = seed.or(scenario.seed).unwrap_or(DEFAULT_SIM_SEED);
    let mut runner = Runner::setup(scenario, seed)?;
    for event in &scenario.timeline {
        runner.advance_to(scenario.start_ms + event.at_ms)?;
        runner.apply(event);
        runner.settle();
    }
    runner.drain_deadlines()?;
    Ok(runner.finish(seed))
}

/// Loads and runs the scenario file at `path`.
pub fn run_file(path: &Path, seed: Option<u64>) -> Result<SmokeReport, SimError> {
    run(&Scenario::load(path)?, seed)
}

fn question_from(spec: &QuestionSpec) -> Question {
    Question {
        id: QuestionId(uuid::Uuid::nil()),
        kind: spec.kind.clone(),
        prompt: spec.prompt.clone(),
    }
}

impl<'a> Runner<'a> {
    fn setup(scenario: &'a Scenario, seed: u64) -> Result<Self, SimError> {
        let clock = Arc::new(VirtualClock::new(scenario.start_ms));
        let jobs = Arc::new(QueuedJobs::default());
        let config = PlatformConfig {
            seed: Some(seed),
            auth: AuthConfig {
                bcrypt_cost: 4,
                ..AuthConfig::default()
            },
            ..PlatformConfig::default()
        };
        let platform = Platform::new(config, &sim_secrets(), clock.clone(), jobs.clone());
        let operator = platform.register(OPERATOR_EMAIL, OPERATOR_PASSWORD)?;
        let name = scenario.name.clone().unwrap_or_else(|| "scenario".into());
        let study = platform.create_study(operator, &name, StudyType::Experimental)?;
        let rows = [ImportRow {
            condition_label: scenario.room.condition_label.clone(),
            slot_count: scenario.slots.len(),
            duration_s: scenario.room.duration_s,
        }];
        let room = platform.create_rooms_bulk(operator, study.id, &rows)?[0].id;
        let mut config = RoomConfig::text(scenario.room.duration_s);
        config.show_timer = scenario.room.show_timer;
        config.require_ready = scenario.room.require_ready;
        platform.update_room_config(operator, room, config)?;

        let base = scenario.base_dir.as_path();
        // Humans first, so a bot slot never leaves the room without one.
        let mut order: Vec<&SlotSpec> = scenario.slots.iter().collect();
        order.sort_by_key(|s| (s.kind == SlotKindSpec::Bot, s.index));
        for spec in order {
            let mut settings = SlotSettings::default();
            if let Some(name) = &spec.display_name {
                settings.display_name = Some(name.clone());
            }
            if let Some(text) = &spec.instructions {
                settings.instructions_text = Some(Some(text.clone()));
            }
            match spec.kind {
                SlotKindSpec::Bot => {
                    settings.bot = Some(Some(BotConfig {
                        backend: spec.backend(base),
                        system_prompt: spec.system_prompt.clone().unwrap_or_default(),
                        delay: spec.delay.clone().expect("checked at parse"),
                    }));
                }
                SlotKindSpec::Human => {
                    if let Some(s) = &spec.suggestions {
                        settings.suggestions = Some(Some(SuggestionsConfig {
                            enabled: true,
                            trigger: s.trigger,
                            backend: s.backend(base),
                            candidate_count: SUGGESTION_COUNT,
                            context_window: SUGGESTION_CONTEXT_WINDOW,
                        }));
                    }
                }
            }
            platform.configure_slot(operator, room, spec.index, settings)?;
        }

        let mut surveys = Vec::new();
        for s in &scenario.surveys {
            let def = platform.define_survey(
                operator,
                SurveyDraft {
                    title: s.title.clone(),
                    question_ids: Vec::new(),
                    questions: s.questions.iter().map(question_from).collect(),
                    trigger: s.trigger,
                    answer_window_s: s.answer_window_s,
                    targets: match &s.targets {
                        Some(t) => Targets::Slots(t.iter().copied().collect()),
                        None => Targets::All,
                    },
                    scope: SurveyScope::Room(room),
                },
            )?;
            surveys.push(def.id);
        }
        let (_, monitor_rx) = platform.connect_monitor(operator, room)?;
        let mut runner = Self {
            scenario,
            clock,
            jobs,
            platform,
            operator,
            room,
            surveys,
            connections: BTreeMap::new(),
            monitor_rx,
            wire: BTreeMap::new(),
            monitor_wire: Vec::new(),
            rejections: Vec::new(),
            ended_by_action: false,
        };
        runner.settle();
        Ok(runner)
    }

    fn now(&self) -> EpochMs {
        self.platform.now()
    }

    /// Runs queued provider jobs at the current instant and collects frames.
    fn settle(&mut self) {
        loop {
            let jobs = self.jobs.take();
            if jobs.is_empty() {
                break;
            }
            for job in jobs {
                futures::executor::block_on(self.platform.run_job(job));
            }
        }
        self.collect_frames();
    }

    fn collect_frames(&mut self) {
        let now = self.now();
        for (slot, conn) in self.connections.iter_mut() {
            while let Ok(line) = conn.rx.try_recv() {
                let frame: Value = serde_json::from_str(&line).expect("server frames are JSON");
                if frame["type"] == "error" {
                    self.rejections.push(Rejection {
                        at_ms: now - self.scenario.start_ms,
                        slot: *slot,
                        code: frame["payload"]["code"].as_str().unwrap_or_default().to_owned(),
                        message: frame["payload"]["message"].as_str().unwrap_or_default().to_owned(),
                    });
                }
                self.wire.entry(*slot).or_default().push(frame);
            }
        }
        while let Ok(line) = self.monitor_rx.try_recv() {
            self.monitor_wire
                .push(serde_json::from_str(&line).expect("server frames are JSON"));
        }
    }

    /// Moves the clock to `target`, stopping at every deadline on the way.
    fn advance_to(&mut self, target: EpochMs) -> Result<(), SimError> {
        for _ in 0..STEP_GUARD {
            match self.platform.next_deadline() {
                Some(d) if d <= target => {
                    self.clock.set(d.max(self.now()));
                    self.platform.tick();
                    self.settle();
                }
                _ => {
                    if target > self.now() {
                        self.clock.set(target);
                    }
                    self.platform.tick();
                    self.settle();
                    return Ok(());
                }
            }
        }
        Err(SimError::Runaway(STEP_GUARD))
    }

    fn drain_deadlines(&mut self) -> Result<(), SimError> {
        for _ in 0..STEP_GUARD {
            match self.platform.next_deadline() {
                Some(d) => self.advance_to(d)?,
                None => return Ok(()),
            }
        }
        Err(SimError::Runaway(STEP_GUARD))
    }

    fn reject(&mut self, slot: SlotIndex, err: &PlatformError) {
        self.rejections.push(Rejection {
            at_ms: self.now() - self.scenario.start_ms,
            slot,
            code: err.code().to_owned(),
            message: err.to_string(),
        });
    }

    fn send(&mut self, slot: SlotIndex, frame: Value) {
        let Some(conn) = self.connections.get_mut(&slot) else {
            self.rejections.push(Rejection {
                at_ms: self.now() - self.scenario.start_ms,
                slot,
                code: "not_connected".into(),
                message: format!("slot {slot} has no open channel"),
            });
            return;
        };
        self.platform.participant_frame(&mut conn.channel, &frame.to_string());
    }

    fn input(&mut self, slot: SlotIndex, kind: &str) {
        let offset = match self.connections.get(&slot) {
            Some(c) => self.now() - c.anchor_ms,
            None => 0,
        };
        self.send(
            slot,
            json!({"type": "input_event", "payload": {"kind": kind, "client_offset_ms": offset}}),
        );
    }

    /// The open presentation for a slot and its question ids, from the
    /// last survey frame the slot received.
    fn open_survey(&self, slot: SlotIndex) -> Option<(u64, Vec<String>)> {
        let frames = self.wire.get(&slot)?;
        frames.iter().rev().find_map(|f| {
            let p = match f["type"].as_str()? {
                "survey_present" => &f["payload"],
                "snapshot" if !f["payload"]["open_survey"].is_null() => &f["payload"]["open_survey"],
                _ => return None,
            };
            let ids = p["questions"]
                .as_array()?
                .iter()
                .filter_map(|q| q["id"].as_str().map(str::to_owned))
                .collect();
            Some((p["presentation_id"].as_u64()?, ids))
        })
    }

    fn answer(&mut self, slot: SlotIndex, pairs: &[(usize, String)]) -> Option<(u64, Vec<Value>)> {
        let Some((presentation, ids)) = self.open_survey(slot) else {
            self.rejections.push(Rejection {
                at_ms: self.now() - self.scenario.start_ms,
                slot,
                code: "no_survey".into(),
                message: format!("slot {slot} has not been shown a survey"),
            });
            return None;
        };
        let mut answers = Vec::new();
        for (q, raw) in pairs {
            let Some(id) = ids.get(q - 1) else {
                self.rejections.push(Rejection {
                    at_ms: self.now() - self.scenario.start_ms,
                    slot,
                    code: "unknown_question".into(),
                    message: format!("survey has no question {q}"),
                });
                return None;
            };
            answers.push(json!({"question_id": id, "value": answer_value(raw)}));
        }
        Some((presentation, answers))
    }

    fn apply(&mut self, event: &ScenarioEvent) {
        let slot = event.slot;
        match &event.action {
            Action::Join => self.join(slot),
            Action::Leave => {
                if let Some(conn) = self.connections.remove(&slot) {
                    self.platform.disconnect_participant(&conn.channel);
                }
            }
            Action::Ready => self.send(slot, json!({"type": "ready", "payload": {}})),
            Action::Chat(text) => self.send(slot, json!({"type": "chat", "payload": {"text": text}})),
            Action::Keystroke => self.input(slot, "keystroke"),
            Action::Deletion => self.input(slot, "deletion"),
            Action::Paste => self.input(slot, "paste"),
            Action::Click => self.input(slot, "click"),
            Action::Focus => self.input(slot, "composer_focus"),
            Action::RequestSuggestions => self.send(slot, json!({"type": "suggestion_request", "payload": {}})),
            Action::SurveyState(q, v) => {
                if let Some((presentation, answers)) = self.answer(slot, &[(*q, v.clone())]) {
                    let a = &answers[0];
                    self.send(
                        slot,
                        json!({"type": "survey_state", "payload": {
                            "presentation_id": presentation,
                            "question_id": a["question_id"],
                            "value": a["value"],
                        }}),
                    );
                }
            }
            Action::Submit(pairs) => {
                if let Some((presentation, answers)) = self.answer(slot, pairs) {
                    self.send(
                        slot,
                        json!({"type": "survey_response", "payload": {
                            "presentation_id": presentation,
                            "answers": answers,
                        }}),
                    );
                }
            }
            Action::Inject(text) => {
                if let Err(e) = self.platform.inject(self.operator, self.room, text) {
                    self.reject(slot, &e);
                }
            }
            Action::Push(n) => {
                if let Err(e) = self.platform.push_survey(self.operator, self.room, self.surveys[n - 1]) {
                    self.reject(slot, &e);
                }
            }
            Action::End => match self.platform.end_room(self.operator, self.room) {
                Ok(_) => self.ended_by_action = true,
                Err(e) => self.reject(slot, &e),
            },
        }
    }

    fn join(&mut self, slot: SlotIndex) {
        if let Some(old) = self.connections.remove(&slot) {
            self.platform.disconnect_participant(&old.channel);
        }
        let token = self
            .platform
            .inspect(self.room, |rt| rt.room().slot(slot).and_then(|s| s.participant_token.clone()))
            .ok()
            .flatten();
        let Some(token) = token else {
            self.rejections.push(Rejection {
                at_ms: self.now() - self.scenario.start_ms,
                slot,
                code: "no_token".into(),
                message: format!("slot {slot} has no join token"),
            });
            return;
        };
        match self.platform.connect_participant(token.as_str()) {
            Ok((channel, rx)) => {
                let anchor_ms = self.now();
                self.connections.insert(slot, Connection { channel, rx, anchor_ms });
                self.send(slot, json!({"type": "hello", "payload": {"client_offset_ms": 0}}));
            }
            Err(e) => self.reject(slot, &e),
        }
    }

    fn finish(mut self, seed: u64) -> SmokeReport {
        self.collect_frames();
        let (session, transcript, responses, bot_log, outstanding) = self
            .platform
            .inspect(self.room, |rt| {
                (
                    rt.session().clone(),
                    rt.transcript().to_vec(),
                    rt.responses().to_vec(),
                    rt.bot_log().to_vec(),
                    rt.outstanding_presentations(),
                )
            })
            .expect("room exists");
        let chat_csv = self
            .platform
            .export_unchecked(&[self.room], ExportKind::Chat)
            .expect("room exists");
        let surveys_csv = self
            .platform
            .export_unchecked(&[self.room], ExportKind::Survey)
            .expect("room exists");
        let mut report = SmokeReport {
            name: self.scenario.name.clone().unwrap_or_else(|| "scenario".into()),
            seed,
            room_id: self.room,
            start_ms: self.scenario.start_ms,
            session,
            transcript,
            responses,
            bot_log,
            chat_csv,
            surveys_csv,
            wire: std::mem::take(&mut self.wire),
            monitor_wire: std::mem::take(&mut self.monitor_wire),
            rejections: std::mem::take(&mut self.rejections),
            violations: Vec::new(),
        };
        report.violations = check_invariants(self.scenario, &report, outstanding, self.ended_by_action);
        report
    }
}

/// Integers become numeric answers, empty strings are skipped answers,
/// anything else is text.
fn answer_value(raw: &str) -> Value {
    match raw.trim().parse::<i64>() {
        Ok(n) => json!(n),
        Err(_) if raw.is_empty() => Value::Null,
        Err(_) => json!(raw),
    }
}

fn csv_rows(bytes: &[u8]) -> Result<usize, String> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let mut n = 0;
    for r in reader.records() {
        r.map_err(|e| e.to_string())?;
        n += 1;
    }
    Ok(n)
}

/// Response rows each survey should have produced, worked out from the
/// scenario and the session boundaries alone.
fn expected_rows(scenario: &Scenario, report: &SmokeReport) -> Vec<usize> {
    let humans: BTreeSet<SlotIndex> = scenario
        .slots
        .iter()
        .filter(|s| s.kind == SlotKindSpec::Human)
        .map(|s| s.index)
        .collect();
    let active_ms = match (report.session.started_at_ms, report.session.ended_at_ms) {
        (Some(s), Some(e)) => Some(e - s),
        _ => None,
    };
    let pushes_before_end = |n: usize| {
        scenario
            .timeline
            .iter()
            .filter(|e| e.action == Action::Push(n))
            .filter(|e| {
                let at = scenario.start_ms + e.at_ms;
                report.session.started_at_ms.is_some_and(|s| at >= s)
                    && report.session.ended_at_ms.map_or(true, |end| at < end)
            })
            .count()
    };
    scenario
        .surveys
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let firings = match (s.trigger, active_ms) {
                (_, None) => 0,
                (SurveyTrigger::Manual, _) => pushes_before_end(i + 1),
                (SurveyTrigger::AfterSeconds(n), Some(ms)) => usize::from(ms >= i64::from(n) * 1000),
                (SurveyTrigger::AfterMessages(n), Some(_)) => usize::from(report.transcript.len() >= n as usize),
                (SurveyTrigger::Recurring(n), Some(ms)) => (ms / (i64::from(n) * 1000)) as usize,
                (SurveyTrigger::PostChat, Some(_)) => 1,
            };
            let targets = match &s.targets {
                Some(t) => t.iter().filter(|i| humans.contains(i)).count(),
                None => humans.len(),
            };
            firings * targets * s.questions.len()
        })
        .collect()
}

fn check_invariants(
    scenario: &Scenario,
    report: &SmokeReport,
    outstanding: usize,
    ended_by_action: bool,
) -> Vec<String> {
    let mut v = Vec::new();
    let t = &report.transcript;

    for (i, m) in t.iter().enumerate() {
        if m.seq != i as u64 + 1 {
            v.push(format!("transcript seq {} at position {}", m.seq, i + 1));
            break;
        }
    }
    if t.windows(2).any(|w| w[1].timestamp_ms < w[0].timestamp_ms) {
        v.push("transcript timestamps go backwards".into());
    }

    // Every slot that stayed connected sees each message exactly once, in
    // order, across its snapshot and live frames.
    let leavers: BTreeSet<SlotIndex> = scenario
        .timeline
        .iter()
        .filter(|e| e.action == Action::Leave)
        .map(|e| e.slot)
        .collect();
    for (slot, frames) in &report.wire {
        if leavers.contains(slot) {
            continue;
        }
        let mut seen: Vec<u64> = Vec::new();
        for f in frames {
            match f["type"].as_str() {
                Some("snapshot") => {
                    seen.extend(
                        f["payload"]["transcript"]
                            .as_array()
                            .into_iter()
                            .flatten()
                            .filter_map(|m| m["seq"].as_u64()),
                    );
                }
                Some("chat") => seen.extend(f["seq"].as_u64()),
                _ => {}
            }
        }
        let expected: Vec<u64> = (1..=t.len() as u64).collect();
        if seen != expected {
            v.push(format!("slot {slot} saw message seqs {seen:?}, expected 1..={}", t.len()));
        }
    }

    match (report.session.started_at_ms, report.session.ended_at_ms) {
        (Some(s), Some(e)) if !ended_by_action => {
            let want = i64::from(scenario.room.duration_s) * 1000;
            if e - s != want {
                v.push(format!("session lasted {} ms, configured {want} ms", e - s));
            }
        }
        (Some(_), None) => v.push("session never ended".into()),
        _ => {}
    }

    if outstanding != 0 {
        v.push(format!("{outstanding} survey presentations still open"));
    }

    for d in &report.bot_log {
        let law = scenario
            .slots
            .iter()
            .find(|s| s.index == d.slot)
            .and_then(|s| s.delay.clone());
        let in_law = match law {
            Some(DelayLaw::Fixed { ms }) => d.delay_ms == ms,
            Some(DelayLaw::UniformRange { min_ms, max_ms }) => (min_ms..=max_ms).contains(&d.delay_ms),
            None => false,
        };
        if !in_law {
            v.push(format!("bot slot {} drew delay {} ms outside its law", d.slot, d.delay_ms));
        }
        let trigger = t.iter().find(|m| m.seq == d.trigger_seq);
        let delivered = t.iter().find(|m| m.seq == d.delivered_seq);
        match (trigger, delivered) {
            (Some(tr), Some(dl)) => {
                if dl.timestamp_ms - tr.timestamp_ms != d.delay_ms as i64 {
                    v.push(format!(
                        "bot message {} came {} ms after its trigger {}, drawn delay {} ms",
                        dl.seq,
                        dl.timestamp_ms - tr.timestamp_ms,
                        tr.seq,
                        d.delay_ms
                    ));
                }
                if !dl.is_bot || dl.slot_index != d.slot {
                    v.push(format!("message {} is logged as a bot delivery but is not", dl.seq));
                }
            }
            _ => v.push(format!("bot delivery {} refers to missing messages", d.delivered_seq)),
        }
    }
    let bot_messages = t.iter().filter(|m| m.is_bot).count();
    if bot_messages != report.bot_log.len() {
        v.push(format!("{bot_messages} bot messages but {} logged deliveries", report.bot_log.len()));
    }

    let with_suggestions: BTreeSet<SlotIndex> = scenario
        .slots
        .iter()
        .filter(|s| s.suggestions.is_some())
        .map(|s| s.index)
        .collect();
    for (slot, frames) in &report.wire {
        for f in frames.iter().filter(|f| f["type"] == "suggestions") {
            if f["payload"]["slot_index"].as_u64() != Some(u64::from(*slot)) || !with_suggestions.contains(slot) {
                v.push(format!("slot {slot} received suggestions meant for {}", f["payload"]["slot_index"]));
            }
        }
    }

    let windows: BTreeMap<SurveyId, i64> = report
        .monitor_wire
        .iter()
        .chain(report.wire.values().flatten())
        .filter(|f| f["type"] == "survey_present")
        .filter_map(|f| {
            let id = serde_json::from_value(f["payload"]["survey_id"].clone()).ok()?;
            Some((id, f["payload"]["answer_window_s"].as_i64()?))
        })
        .collect();
    for r in &report.responses {
        let window = windows.get(&r.survey_id).copied().unwrap_or(0);
        let took = r.submitted_at_ms - r.presented_at_ms;
        if took < 0 || took > (window + 1) * 1000 {
            v.push(format!(
                "slot {} answered {} ms after presentation, window {window} s",
                r.slot_index, took
            ));
        }
    }

    match csv_rows(&report.chat_csv) {
        Ok(n) if n == t.len() => {}
        Ok(n) => v.push(format!("chat export has {n} rows for {} messages", t.len())),
        Err(e) => v.push(format!("chat export does not parse: {e}")),
    }
    match csv_rows(&report.surveys_csv) {
        Ok(n) if n == report.responses.len() => {}
        Ok(n) => v.push(format!("survey export has {n} rows for {} responses", report.responses.len())),
        Err(e) => v.push(format!("survey export does not parse: {e}")),
    }

    let expected: usize = expected_rows(scenario, report).iter().sum();
    if report.responses.len() != expected {
        v.push(format!("{} survey responses, expected {expected}", report.responses.len()));
    }
    v
}
