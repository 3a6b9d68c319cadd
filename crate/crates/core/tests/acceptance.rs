//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails. Run with `cargo test -p colloquy --test acceptance`.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use colloquy::auth::{AuthConfig, AuthError, AuthService, KeyVault, Secrets};
use colloquy::bot::{
    draw_delay, BotConfig, DelayLaw, ModelBackend, ProviderKind, SuggestionTrigger, SuggestionsConfig,
    SUGGESTION_CONTEXT_WINDOW,
};
use colloquy::clock::{Clock, EpochMs, VirtualClock};
use colloquy::engine::{Job, RoomEvent, RoomRuntime, RoomState};
use colloquy::export::{CHAT_COLUMNS, SURVEY_COLUMNS};
use colloquy::ids::{AccountId, ParticipantToken, QuestionId, RoomCode, RoomId, SlotIndex, StudyId, SurveyId};
use colloquy::message::Message;
use colloquy::platform::{Platform, PlatformConfig, PlatformError, QueuedJobs, SlotSettings};
use colloquy::randomizer::{apply_slot_permutation, shuffle_slot_pairs};
use colloquy::registry::{Room, RoomConfig, Slot, StudyType};
use colloquy::sim::{self, Scenario, SmokeReport};
use colloquy::survey::{AnswerValue, Question, QuestionKind, SurveyDefinition, SurveyScope, SurveyTrigger, Targets};
use colloquy::telemetry::InputKind;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uuid::Uuid;

const T0: EpochMs = 1_700_000_000_000;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("lifecycle model check", lifecycle_model_check),
        ("trigger oracle equivalence", trigger_oracle),
        ("delay law", delay_law),
        ("suggestions contract", suggestions_contract),
        ("auto-submit", auto_submit),
        ("shuffle pairing", shuffle_pairing),
        ("export round-trip", export_round_trip),
        ("telemetry conservation", telemetry_conservation),
        ("security suite", security_suite),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let took = started.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {}: PASS - {name}: {detail} ({took:.2}s)", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL - {name}: {detail} ({took:.2}s)", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

// ---- fixtures -------------------------------------------------------------

fn human(i: SlotIndex) -> Slot {
    Slot::human(i, ParticipantToken::from_untrusted(&format!("token-{i}")).unwrap())
}

fn room_with(slots: Vec<Slot>, duration_s: u32, require_ready: bool) -> Room {
    let mut config = RoomConfig::text(duration_s);
    config.require_ready = require_ready;
    Room {
        id: RoomId(Uuid::from_u128(1)),
        study_id: StudyId(Uuid::from_u128(2)),
        code: RoomCode::parse("LS9UX3").unwrap(),
        condition_label: None,
        slots,
        config,
    }
}

fn thermometer(id: u128) -> Question {
    Question {
        id: QuestionId(Uuid::from_u128(id)),
        kind: QuestionKind::Thermometer {
            low_label: "Cold".into(),
            high_label: "Warm".into(),
        },
        prompt: "How warm do you feel?".into(),
    }
}

fn survey(id: u128, trigger: SurveyTrigger, target: SlotIndex) -> Arc<SurveyDefinition> {
    Arc::new(SurveyDefinition {
        id: SurveyId(Uuid::from_u128(id)),
        study_id: StudyId(Uuid::from_u128(2)),
        title: format!("survey {id}"),
        questions: vec![thermometer(id + 1000)],
        trigger,
        answer_window_s: 10,
        targets: Targets::Slots(BTreeSet::from([target])),
        scope: SurveyScope::Study(StudyId(Uuid::from_u128(2))),
    })
}

fn demo(seed: u64) -> SmokeReport {
    let scenario = Scenario::parse(sim::DEMO_SCENARIO, std::path::Path::new(".")).unwrap();
    sim::run(&scenario, Some(seed)).unwrap()
}

fn csv_rows(bytes: &[u8]) -> (Vec<String>, Vec<Vec<String>>) {
    let mut reader = csv::Reader::from_reader(bytes);
    let header = reader.headers().unwrap().iter().map(str::to_owned).collect();
    let rows = reader
        .records()
        .map(|r| r.unwrap().iter().map(str::to_owned).collect())
        .collect();
    (header, rows)
}

fn col(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap_or_else(|| panic!("missing column {name}"))
}

// ---- 1 ------------------------------------------------------------------

#[derive(Clone, Copy, Debug)]
enum Ev {
    Join(SlotIndex),
    Leave(SlotIndex),
    Ready(SlotIndex),
    Tick,
}

const ALPHABET: [Ev; 7] = [
    Ev::Join(1),
    Ev::Join(2),
    Ev::Leave(1),
    Ev::Leave(2),
    Ev::Ready(1),
    Ev::Ready(2),
    Ev::Tick,
];
const TICK_MS: i64 = 20_000;
const MODEL_DEPTH: usize = 8;
const MODEL_DURATION_S: u32 = 30;

/// Forward edges a ready-gated room may take, plus staying put.
fn legal(from: RoomState, to: RoomState) -> bool {
    use RoomState::*;
    from == to
        || matches!(
            (from, to),
            (Created, Waiting) | (Waiting, ReadyCheck) | (ReadyCheck, Active) | (Active, Ended)
        )
}

struct ModelRun {
    rt: RoomRuntime,
    now: EpochMs,
    confirms: BTreeMap<SlotIndex, EpochMs>,
}

impl ModelRun {
    fn new() -> Self {
        Self {
            rt: RoomRuntime::new(room_with(vec![human(1), human(2)], MODEL_DURATION_S, true), 1),
            now: T0,
            confirms: BTreeMap::new(),
        }
    }

    fn key(&self, depth: usize) -> String {
        format!(
            "{}|{}{}|{}|{:?}|{depth}",
            serde_json::to_string(&self.rt.record()).unwrap(),
            self.rt.is_connected(1),
            self.rt.is_connected(2),
            self.now - T0,
            self.confirms
        )
    }

    /// Applies one event and checks every state change it produced.
    fn step(&mut self, ev: Ev, edges: &mut HashSet<(RoomState, RoomState)>) -> Result<(), String> {
        let before = self.rt.state();
        match ev {
            Ev::Join(s) => {
                let _ = self.rt.join(s, self.now);
            }
            Ev::Leave(s) => self.rt.leave(s, self.now),
            Ev::Ready(s) => {
                let eligible = before == RoomState::ReadyCheck && self.rt.is_connected(s);
                let ok = self.rt.confirm_ready(s, self.now).is_ok();
                ensure!(ok == eligible, "ready from slot {s} accepted={ok}, expected {eligible}");
                if ok {
                    self.confirms.entry(s).or_insert(self.now);
                }
            }
            Ev::Tick => {
                self.now += TICK_MS;
                self.rt.advance_clock(self.now);
            }
        }
        let mut prev = before;
        for out in self.rt.drain_outbox() {
            if let RoomEvent::State(s) = out.event {
                ensure!(legal(prev, s.state), "illegal transition {prev:?} -> {:?}", s.state);
                if s.state == RoomState::Active {
                    ensure!(
                        s.ready_confirmed == BTreeSet::from([1, 2]),
                        "Active with ready set {:?}",
                        s.ready_confirmed
                    );
                }
                edges.insert((prev, s.state));
                prev = s.state;
            }
        }
        let after = self.rt.state();
        ensure!(legal(before, after), "illegal transition {before:?} -> {after:?}");
        ensure!(prev == after, "last state frame {prev:?} but room is {after:?}");
        let session = self.rt.session();
        match after {
            RoomState::Active | RoomState::Ended => {
                ensure!(self.confirms.len() == 2, "{after:?} with confirmations {:?}", self.confirms);
                let started = session.started_at_ms.ok_or("started_at missing")?;
                let last_confirm = *self.confirms.values().max().unwrap();
                ensure!(started >= last_confirm, "started {started} before confirm {last_confirm}");
                if after == RoomState::Ended {
                    let ended = session.ended_at_ms.ok_or("ended_at missing")?;
                    ensure!(
                        ended - started == i64::from(MODEL_DURATION_S) * 1000,
                        "session ran {} ms",
                        ended - started
                    );
                }
            }
            _ => ensure!(session.started_at_ms.is_none(), "started_at set in {after:?}"),
        }
        Ok(())
    }
}

fn replay(path: &[Ev]) -> ModelRun {
    let mut run = ModelRun::new();
    let mut scratch = HashSet::new();
    for &ev in path {
        run.step(ev, &mut scratch).expect("prefix was already checked");
    }
    run
}

fn lifecycle_model_check() -> Outcome {
    let started = Instant::now();
    let mut seen: HashSet<String> = HashSet::new();
    let mut edges: HashSet<(RoomState, RoomState)> = HashSet::new();
    let mut stack: Vec<Vec<Ev>> = vec![Vec::new()];
    let mut expanded = 0usize;
    while let Some(path) = stack.pop() {
        if path.len() == MODEL_DEPTH {
            continue;
        }
        for ev in ALPHABET {
            let mut run = replay(&path);
            run.step(ev, &mut edges).map_err(|e| format!("{e} after {path:?} + {ev:?}"))?;
            let mut next = path.clone();
            next.push(ev);
            if seen.insert(run.key(next.len())) {
                expanded += 1;
                stack.push(next);
            }
        }
    }
    let took = started.elapsed();
    for forward in [
        (RoomState::Created, RoomState::Waiting),
        (RoomState::Waiting, RoomState::ReadyCheck),
        (RoomState::ReadyCheck, RoomState::Active),
        (RoomState::Active, RoomState::Ended),
    ] {
        ensure!(edges.contains(&forward), "edge {forward:?} never exercised");
    }
    ensure!(took < Duration::from_secs(10), "took {took:?}");
    Ok(format!(
        "all {} interleavings of depth {MODEL_DEPTH} covered via {expanded} distinct states, {} edges seen, {:.2}s",
        ALPHABET.len().pow(MODEL_DEPTH as u32),
        edges.len(),
        took.as_secs_f64()
    ))
}

// ---- 2 ------------------------------------------------------------------

#[derive(Debug, Clone)]
enum LogEntry {
    Advance(i64),
    Post(SlotIndex),
    EndNow,
}

struct TriggerCase {
    duration_s: u32,
    after_s: u32,
    after_n: u32,
    every_s: u32,
    log: Vec<LogEntry>,
}

fn random_case(rng: &mut ChaCha8Rng) -> TriggerCase {
    let mut log = Vec::new();
    for _ in 0..rng.gen_range(20..80) {
        let roll: f64 = rng.gen();
        log.push(if roll < 0.45 {
            LogEntry::Advance(rng.gen_range(0..6000))
        } else if roll < 0.98 {
            LogEntry::Post(rng.gen_range(1..=4))
        } else {
            LogEntry::EndNow
        });
    }
    TriggerCase {
        duration_s: rng.gen_range(10..90),
        after_s: rng.gen_range(1..90),
        after_n: rng.gen_range(1..25),
        every_s: rng.gen_range(3..30),
        log,
    }
}

/// Brute-force replay of the log: which firings should exist and when.
fn trigger_oracle_replay(case: &TriggerCase) -> Vec<(usize, EpochMs)> {
    let start = T0;
    let mut end = start + i64::from(case.duration_s) * 1000;
    let mut now = T0;
    let mut posts = Vec::new();
    for entry in &case.log {
        match entry {
            LogEntry::Advance(ms) => now += ms,
            LogEntry::Post(_) => {
                if now < end {
                    posts.push(now);
                }
            }
            LogEntry::EndNow => end = end.min(now),
        }
    }
    let mut out = Vec::new();
    let after = start + i64::from(case.after_s) * 1000;
    if after <= end {
        out.push((0, after));
    }
    if let Some(&t) = posts.get(case.after_n as usize - 1) {
        out.push((1, t));
    }
    let every = i64::from(case.every_s) * 1000;
    for k in 1..=(end - start) / every {
        out.push((2, start + k * every));
    }
    out.push((3, end));
    out.sort();
    out
}

fn trigger_engine_replay(case: &TriggerCase) -> Result<Vec<(usize, EpochMs)>, String> {
    let slots = (1..=4).map(human).collect();
    let mut rt = RoomRuntime::new(room_with(slots, case.duration_s, false), 3);
    let surveys = [
        survey(10, SurveyTrigger::AfterSeconds(case.after_s), 1),
        survey(20, SurveyTrigger::AfterMessages(case.after_n), 2),
        survey(30, SurveyTrigger::Recurring(case.every_s), 3),
        survey(40, SurveyTrigger::PostChat, 4),
    ];
    for s in &surveys {
        rt.arm_survey(s.clone(), T0);
    }
    for slot in 1..=4 {
        rt.join(slot, T0).map_err(|e| e.to_string())?;
    }
    ensure!(rt.state() == RoomState::Active, "room did not start");
    let mut firings = Vec::new();

    // Answers every open survey straight away so that no presentation waits
    // behind another and presentation time equals firing time.
    let mut settle = |rt: &mut RoomRuntime, now: EpochMs| loop {
        for out in rt.drain_outbox() {
            if let RoomEvent::SurveyPresented(p) = out.event {
                let which = surveys.iter().position(|s| s.id == p.survey_id).unwrap();
                firings.push((which, p.presented_at_ms));
            }
        }
        let open: Vec<_> = (1..=4).filter_map(|s| rt.open_presentation(s)).collect();
        if open.is_empty() {
            break;
        }
        for p in open {
            let answers: Vec<_> = p.questions.iter().map(|q| (q.id, AnswerValue::Int(50))).collect();
            rt.submit_survey(p.slot_index, p.presentation_id, &answers, now).unwrap();
        }
    };
    let advance = |rt: &mut RoomRuntime, target: EpochMs, settle: &mut dyn FnMut(&mut RoomRuntime, EpochMs)| {
        while let Some(due) = rt.next_deadline().filter(|&d| d <= target) {
            rt.advance_clock(due);
            settle(rt, due);
        }
        rt.advance_clock(target);
        settle(rt, target);
    };

    let mut now = T0;
    for entry in &case.log {
        match entry {
            LogEntry::Advance(ms) => {
                now += ms;
                advance(&mut rt, now, &mut settle);
            }
            LogEntry::Post(slot) => {
                let _ = rt.post_message(*slot, "hello", now);
                settle(&mut rt, now);
            }
            LogEntry::EndNow => {
                rt.end_now(now);
                settle(&mut rt, now);
            }
        }
    }
    advance(&mut rt, now + i64::from(case.duration_s) * 1000 + 60_000, &mut settle);
    ensure!(rt.state() == RoomState::Ended, "room never ended");
    firings.sort();
    Ok(firings)
}

fn trigger_oracle() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut total = 0;
    for i in 0..100 {
        let case = random_case(&mut rng);
        let want = trigger_oracle_replay(&case);
        let got = trigger_engine_replay(&case)?;
        ensure!(got == want, "log {i}: engine fired {got:?}, oracle {want:?}");
        total += want.len();
    }
    let took = started.elapsed();
    ensure!(took < Duration::from_secs(30), "took {took:?}");
    Ok(format!("100 logs, {total} firings identical"))
}

// ---- 3 ------------------------------------------------------------------

/// Runs `turns` human messages against a bot with an instantaneous provider
/// and returns the observed trigger-to-delivery gaps.
fn bot_gaps(law: DelayLaw, seed: u64, turns: usize) -> Result<Vec<i64>, String> {
    let bot = Slot::bot(3, "Casey", BotConfig::scripted("You are a participant.", law, "ok"));
    let mut rt = RoomRuntime::new(room_with(vec![human(1), human(2), bot], 3600, false), seed);
    rt.join(1, T0).unwrap();
    rt.join(2, T0).unwrap();
    let mut gaps = Vec::with_capacity(turns);
    let mut now = T0;
    for _ in 0..turns {
        now += 5000;
        let msg = rt.post_message(1, "hello", now).map_err(|e| e.to_string())?;
        for job in rt.drain_jobs() {
            if let Job::BotReply { slot, generation, .. } = job {
                rt.bot_reply_ready(slot, generation, Ok("reply".into()), now);
            }
        }
        rt.advance_clock(now + 4999);
        let reply = rt.transcript().last().unwrap();
        ensure!(reply.is_bot, "no bot reply to message {}", msg.seq);
        gaps.push(reply.timestamp_ms - msg.timestamp_ms);
        let logged = rt.bot_log().last().unwrap();
        ensure!(
            logged.delay_ms as i64 == reply.timestamp_ms - msg.timestamp_ms,
            "logged delay {} differs from observed gap",
            logged.delay_ms
        );
        rt.drain_outbox();
    }
    Ok(gaps)
}

fn delay_law() -> Outcome {
    let fixed = bot_gaps(DelayLaw::fixed(2000), 1, 200)?;
    ensure!(fixed.iter().all(|&g| g == 2000), "fixed gaps {:?}", fixed.iter().filter(|&&g| g != 2000).collect::<Vec<_>>());

    let law = DelayLaw::uniform(2000, 4000).unwrap();
    let mut gaps = Vec::with_capacity(10_000);
    for room in 0..100 {
        gaps.extend(bot_gaps(law, 1000 + room, 100)?);
    }
    let (lo, hi) = (*gaps.iter().min().unwrap(), *gaps.iter().max().unwrap());
    let mean = gaps.iter().sum::<i64>() as f64 / gaps.len() as f64;
    ensure!(lo >= 2000 && hi <= 4000, "support [{lo}, {hi}]");
    ensure!((mean - 3000.0).abs() <= 50.0, "mean {mean:.1}");

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let draws: Vec<u64> = (0..10_000).map(|_| draw_delay(law, &mut rng)).collect();
    let raw_mean = draws.iter().sum::<u64>() as f64 / draws.len() as f64;
    ensure!(draws.iter().all(|d| (2000..=4000).contains(d)), "raw draw outside range");
    ensure!((raw_mean - 3000.0).abs() <= 50.0, "raw mean {raw_mean:.1}");
    Ok(format!(
        "200 fixed deliveries at +2000; 10000 engine deliveries in [{lo}, {hi}] mean {mean:.1}; raw draw mean {raw_mean:.1}"
    ))
}

// ---- 4 ------------------------------------------------------------------

const FIGURE_CANDIDATES: [&str; 3] = [
    "Hi! I'm doing alright, thank you for asking. How about you?",
    "Hey! I'm managing, thank you for checking in. Hope you're doing well.",
    "Hello! I'm getting by, thanks. How's everything on your end?",
];

fn suggestion_scenario() -> String {
    format!(
        r#"
name = "suggestions"
events = '''
at_ms,slot,action,value
0,1,join,
0,2,join,
0,3,join,
1000,2,chat,"Hi, how are you doing tonight?"
5000,1,chat,Not bad.
'''
[room]
duration_s = 10
require_ready = false

[[slot]]
index = 1
kind = "human"
display_name = "Slot A"
[slot.suggestions]
trigger = "every_message"
script = """
[suggestions]
{}
{}
{}
"""

[[slot]]
index = 2
kind = "human"
display_name = "Slot B"

[[slot]]
index = 3
kind = "human"
display_name = "Slot C"
"#,
        FIGURE_CANDIDATES[0], FIGURE_CANDIDATES[1], FIGURE_CANDIDATES[2]
    )
}

fn suggestions_contract() -> Outcome {
    // Context window on a long transcript with injections mixed in.
    let mut a = human(1);
    a.suggestions = Some(SuggestionsConfig::new(
        SuggestionTrigger::EveryMessage,
        ModelBackend::scripted("[suggestions]\na\nb\nc\n"),
    ));
    let mut rt = RoomRuntime::new(room_with(vec![a, human(2)], 600, false), 5);
    rt.join(1, T0).unwrap();
    rt.join(2, T0).unwrap();
    let mut conversational: Vec<Message> = Vec::new();
    let mut largest = 0;
    for i in 0..35 {
        let now = T0 + 1000 * (i + 1);
        if i % 7 == 3 {
            rt.inject(&format!("note {i}"), now).unwrap();
        } else {
            conversational.push(rt.post_message(2 - (i % 3 == 0) as SlotIndex, &format!("line {i}"), now).unwrap());
        }
        for job in rt.drain_jobs() {
            let Job::Suggestions { slot, request, .. } = job else { continue };
            ensure!(slot == 1, "suggestions job for slot {slot}");
            let context = &request.messages[1..request.messages.len() - 1];
            let expect: Vec<&Message> =
                conversational.iter().rev().take(SUGGESTION_CONTEXT_WINDOW).rev().collect();
            ensure!(context.len() == expect.len(), "context {} messages, expected {}", context.len(), expect.len());
            for (c, m) in context.iter().zip(&expect) {
                ensure!(c.content.ends_with(&m.text), "context {:?} does not carry {:?}", c.content, m.text);
            }
            largest = largest.max(context.len());
        }
    }
    ensure!(largest == SUGGESTION_CONTEXT_WINDOW, "context never reached the cap ({largest})");

    // Wire audit on the reference exchange.
    let scenario = Scenario::parse(&suggestion_scenario(), std::path::Path::new(".")).unwrap();
    let report = sim::run(&scenario, Some(1)).map_err(|e| e.to_string())?;
    ensure!(report.passed(), "runner violations {:?}", report.violations);
    let frames: Vec<_> = report.frames_of(1, "suggestions").collect();
    ensure!(frames.len() == 1, "slot 1 got {} suggestion frames", frames.len());
    let candidates: Vec<&str> = frames[0]["payload"]["candidates"]
        .as_array()
        .ok_or("candidates is not an array")?
        .iter()
        .filter_map(|c| c.as_str())
        .collect();
    ensure!(candidates == FIGURE_CANDIDATES, "candidates {candidates:?}");
    for other in [2, 3] {
        let leaked = report.wire[&other]
            .iter()
            .filter(|f| f["type"] == "suggestions" || f.to_string().contains(FIGURE_CANDIDATES[0]))
            .count();
        ensure!(leaked == 0, "slot {other} saw {leaked} suggestion frames");
    }
    // Monitors see every frame, with suggestions marked as such.
    let monitored: Vec<_> = report
        .monitor_wire
        .iter()
        .filter(|f| f.to_string().contains(FIGURE_CANDIDATES[2]))
        .collect();
    ensure!(
        monitored.len() == 1 && monitored[0]["type"] == "suggestions" && monitored[0]["payload"]["slot_index"] == 1,
        "monitor copies {monitored:?}"
    );
    Ok(format!(
        "context capped at {largest} (injections excluded), 3 candidates byte-identical, slots 2 and 3 saw none, monitor saw one flagged copy"
    ))
}

// ---- 5 ------------------------------------------------------------------

fn auto_submit() -> Outcome {
    let report = demo(42);
    let (header, rows) = csv_rows(&report.surveys_csv);
    let (slot, firing, value, auto, presented, submitted) = (
        col(&header, "slot_index"),
        col(&header, "firing_index"),
        col(&header, "value"),
        col(&header, "auto_submitted"),
        col(&header, "presented_at_ms"),
        col(&header, "submitted_at_ms"),
    );
    let row = rows
        .iter()
        .find(|r| r[slot] == "1" && r[firing] == "1")
        .ok_or("no row for slot 1, firing 1")?;
    let gap: i64 = row[submitted].parse::<i64>().unwrap() - row[presented].parse::<i64>().unwrap();
    ensure!(row[value] == "65", "value {}", row[value]);
    ensure!(row[auto] == "true", "auto_submitted {}", row[auto]);
    ensure!((0..=11_000).contains(&gap), "submitted - presented = {gap}");
    Ok(format!("value 65, auto_submitted=true, submitted-presented {gap} ms"))
}

// ---- 6 ------------------------------------------------------------------

fn labelled_room() -> Room {
    let mut room = room_with((1..=3).map(human).collect(), 60, true);
    for (slot, (label, text)) in room.slots.iter_mut().zip([("AI", "Talk to an AI."), ("H", "Talk to a human."), ("X", "Just chat.")]) {
        slot.text_label = Some(label.into());
        slot.instructions_text = Some(text.into());
    }
    room
}

fn pairs(room: &Room) -> Vec<(Option<String>, Option<String>)> {
    room.slots.iter().map(|s| (s.text_label.clone(), s.instructions_text.clone())).collect()
}

fn permutations3() -> Vec<Vec<SlotIndex>> {
    let mut out = Vec::new();
    for a in 1..=3 {
        for b in 1..=3 {
            for c in 1..=3 {
                if a != b && b != c && a != c {
                    out.push(vec![a, b, c]);
                }
            }
        }
    }
    out
}

fn shuffle_pairing() -> Outcome {
    let original = pairs(&labelled_room());
    let mut sorted_original = original.clone();
    sorted_original.sort();
    for perm in permutations3() {
        let mut room = labelled_room();
        apply_slot_permutation(&mut room, &perm).map_err(|e| e.to_string())?;
        let moved = pairs(&room);
        for (from, &to) in perm.iter().enumerate() {
            ensure!(moved[to as usize - 1] == original[from], "perm {perm:?} broke a pair");
        }
        let mut sorted = moved.clone();
        sorted.sort();
        ensure!(sorted == sorted_original, "perm {perm:?} changed the multiset");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut counts: BTreeMap<Vec<SlotIndex>, usize> = BTreeMap::new();
    for _ in 0..6000 {
        let mut room = labelled_room();
        let reported = shuffle_slot_pairs(&mut room, &mut rng);
        // Read the permutation back from where each pair landed.
        let moved = pairs(&room);
        let observed: Vec<SlotIndex> = original
            .iter()
            .map(|p| moved.iter().position(|m| m == p).unwrap() as SlotIndex + 1)
            .collect();
        ensure!(observed == reported, "reported {reported:?} but pairs moved by {observed:?}");
        *counts.entry(observed).or_default() += 1;
    }
    ensure!(counts.len() == 6, "only {} permutations seen", counts.len());
    let (lo, hi) = (*counts.values().min().unwrap(), *counts.values().max().unwrap());
    ensure!(lo >= 880 && hi <= 1120, "counts {counts:?}");
    Ok(format!("6 permutations preserve pairs; 6000 shuffles give counts in [{lo}, {hi}]"))
}

// ---- 7 ------------------------------------------------------------------

const ADVERSARIAL: [&str; 7] = [
    "commas, everywhere, really",
    "she said \"no\" twice",
    "line one\nline two",
    "emoji 🍎🎉 and ünïcödé",
    "\"quoted start",
    ",,,",
    "mixed \"a,b\"\nand more",
];

fn csv_field(text: &str) -> String {
    format!("\"{}\"", text.replace('"', "\"\""))
}

fn adversarial_scenario() -> String {
    let mut events = String::from("at_ms,slot,action,value\n0,1,join,\n0,2,join,\n");
    for (i, text) in ADVERSARIAL.iter().enumerate() {
        events.push_str(&format!("{},{},chat,{}\n", 1000 * (i + 1), i % 2 + 1, csv_field(text)));
    }
    events.push_str(&format!("9000,0,inject,{}\n", csv_field(ADVERSARIAL[6])));
    events.push_str("9500,1,push,1\n");
    events.push_str(&format!("9600,1,submit,{}\n", csv_field(&format!("1:{}", ADVERSARIAL[1]))));
    format!(
        r#"
events = '''
{events}'''
[room]
duration_s = 20
require_ready = false
[[slot]]
index = 1
kind = "human"
display_name = "Ann, \"the\" first"
[[slot]]
index = 2
kind = "human"
[[survey]]
title = "Open, \"text\""
trigger = "manual"
targets = [1]
[[survey.question]]
prompt = "Anything else?"
kind = "open_text"
"#
    )
}

fn check_chat(report: &SmokeReport) -> Result<usize, String> {
    let (header, rows) = csv_rows(&report.chat_csv);
    ensure!(header == CHAT_COLUMNS, "chat header {header:?}");
    ensure!(rows.len() == report.transcript.len(), "{} chat rows, {} messages", rows.len(), report.transcript.len());
    let c = |n| col(&header, n);
    for (row, m) in rows.iter().zip(&report.transcript) {
        ensure!(row.len() == CHAT_COLUMNS.len(), "row width {}", row.len());
        let want = [
            ("room_id", m.room_id.to_string()),
            ("message_seq", m.seq.to_string()),
            ("timestamp_ms", m.timestamp_ms.to_string()),
            ("slot_index", m.slot_index.to_string()),
            ("display_name", m.display_name.clone()),
            ("is_bot", m.is_bot.to_string()),
            ("injected", m.injected.to_string()),
            ("text", m.text.clone()),
        ];
        for (name, value) in want {
            ensure!(row[c(name)] == value, "message {} column {name}: {:?} != {:?}", m.seq, row[c(name)], value);
        }
    }
    Ok(rows.len())
}

fn check_surveys(report: &SmokeReport) -> Result<usize, String> {
    let (header, rows) = csv_rows(&report.surveys_csv);
    ensure!(header == SURVEY_COLUMNS, "survey header {header:?}");
    ensure!(rows.len() == report.responses.len(), "{} survey rows, {} responses", rows.len(), report.responses.len());
    let c = |n| col(&header, n);
    for (row, r) in rows.iter().zip(&report.responses) {
        let value = match &r.value {
            AnswerValue::Int(n) => n.to_string(),
            AnswerValue::Text(t) => t.clone(),
            AnswerValue::Empty => String::new(),
        };
        let want = [
            ("room_id", r.room_id.to_string()),
            ("survey_id", r.survey_id.to_string()),
            ("question_id", r.question_id.to_string()),
            ("firing_index", r.firing_index.to_string()),
            ("slot_index", r.slot_index.to_string()),
            ("value", value),
            ("auto_submitted", r.auto_submitted.to_string()),
            ("presented_at_ms", r.presented_at_ms.to_string()),
            ("submitted_at_ms", r.submitted_at_ms.to_string()),
            ("preceding_message_seq", r.preceding_message_seq.to_string()),
        ];
        for (name, v) in want {
            ensure!(row[c(name)] == v, "response column {name}: {:?} != {v:?}", row[c(name)]);
        }
    }
    Ok(rows.len())
}

fn export_round_trip() -> Outcome {
    let report = demo(42);
    let chat = check_chat(&report)?;
    let surveys = check_surveys(&report)?;

    let scenario = Scenario::parse(&adversarial_scenario(), std::path::Path::new(".")).map_err(|e| e.to_string())?;
    let adv = sim::run(&scenario, Some(1)).map_err(|e| e.to_string())?;
    ensure!(adv.passed(), "runner violations {:?}", adv.violations);
    let texts: Vec<&str> = adv.transcript.iter().map(|m| m.text.as_str()).collect();
    for t in ADVERSARIAL {
        ensure!(texts.contains(&t), "{t:?} missing from transcript");
    }
    let adv_chat = check_chat(&adv)?;
    let adv_surveys = check_surveys(&adv)?;
    ensure!(
        adv.responses.iter().any(|r| r.value == AnswerValue::Text(ADVERSARIAL[1].into())),
        "text answer not stored"
    );
    Ok(format!(
        "demo {chat} chat / {surveys} survey rows field-identical; adversarial {adv_chat} chat / {adv_surveys} survey rows intact"
    ))
}

// ---- 8 ------------------------------------------------------------------

#[derive(Default, Clone)]
struct Expected {
    keys: u32,
    edits: u32,
    pastes: u32,
    clicks: u32,
    first_key: Option<EpochMs>,
    last_event: Option<EpochMs>,
}

fn telemetry_conservation() -> Outcome {
    let kinds = [InputKind::Keystroke, InputKind::Deletion, InputKind::Paste, InputKind::Click, InputKind::ComposerFocus];
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut messages, mut both_defined) = (0, 0);
    for log in 0..200 {
        let mut rt = RoomRuntime::new(room_with((1..=3).map(human).collect(), 3600, false), log);
        for s in 1..=3 {
            rt.join(s, T0).unwrap();
        }
        let mut now = T0;
        let mut open: BTreeMap<SlotIndex, Expected> = BTreeMap::new();
        // Delivery times of conversational messages, by sender.
        let mut sent: Vec<(SlotIndex, EpochMs)> = Vec::new();
        for _ in 0..rng.gen_range(10..80) {
            now += rng.gen_range(0..3000);
            let slot: SlotIndex = rng.gen_range(1..=3);
            let roll: f64 = rng.gen();
            if roll < 0.7 {
                let kind = kinds[rng.gen_range(0..kinds.len())];
                let at = now - rng.gen_range(0..500);
                ensure!(rt.ingest_input(slot, kind, at, now), "input refused");
                let e = open.entry(slot).or_default();
                match kind {
                    InputKind::Keystroke => {
                        e.keys += 1;
                        e.first_key = Some(e.first_key.map_or(at, |f| f.min(at)));
                    }
                    InputKind::Deletion => e.edits += 1,
                    InputKind::Paste => e.pastes += 1,
                    InputKind::Click => e.clicks += 1,
                    InputKind::ComposerFocus => {}
                }
                e.last_event = Some(e.last_event.map_or(at, |l| l.max(at)));
            } else if roll < 0.95 {
                let m = rt.post_message(slot, "text", now).map_err(|e| e.to_string())?;
                let e = open.remove(&slot).unwrap_or_default();
                let cutoff = e.first_key.unwrap_or(now);
                let reference = sent.iter().filter(|(s, t)| *s != slot && *t <= cutoff).map(|(_, t)| *t).max();
                let got = rt.metrics(m.seq).ok_or("no metrics")?.clone();
                let want_first = reference.zip(e.first_key).map(|(r, k)| k - r);
                let want_reply = reference.map(|r| now - r);
                let want_typing = match (e.first_key, e.last_event) {
                    (Some(f), Some(l)) => (l - f).max(0),
                    _ => 0,
                };
                ensure!(
                    (got.keystroke_count, got.edit_count, got.paste_count, got.click_count)
                        == (e.keys, e.edits, e.pastes, e.clicks),
                    "log {log} message {}: counts differ",
                    m.seq
                );
                ensure!(got.first_keystroke_latency_ms == want_first, "log {log} message {}: first keystroke latency", m.seq);
                ensure!(got.reply_send_latency_ms == want_reply, "log {log} message {}: reply latency", m.seq);
                ensure!(got.typing_duration_ms == want_typing, "log {log} message {}: typing duration", m.seq);
                if let (Some(f), Some(r)) = (got.first_keystroke_latency_ms, got.reply_send_latency_ms) {
                    ensure!(r >= f, "reply latency {r} < first keystroke latency {f}");
                    both_defined += 1;
                }
                sent.push((slot, now));
                messages += 1;
            } else {
                rt.inject("researcher note", now).unwrap();
            }
            rt.drain_outbox();
        }
    }
    Ok(format!("200 logs, {messages} messages match the counting oracle; ordering holds on {both_defined}"))
}

// ---- 9 ------------------------------------------------------------------

fn secrets() -> Secrets {
    Secrets::parse(&"5a".repeat(32), "acceptance-hmac").unwrap()
}

fn security_suite() -> Outcome {
    const PASSWORD: &str = "correct horse battery staple";
    const API_KEY: &str = "sk-live-acceptance-0123456789";
    const IP: &str = "203.0.113.77";

    // Hashing, lockout and recovery on a virtual clock.
    let clock = Arc::new(VirtualClock::new(T0));
    let config = AuthConfig {
        bcrypt_cost: 4,
        ..AuthConfig::default()
    };
    let auth = AuthService::new(config, &secrets(), clock.clone());
    let id = auth.register("lock@example.org", PASSWORD, AccountId(Uuid::from_u128(7))).map_err(|e| e.to_string())?;
    let hash = auth.account(id).unwrap().password_hash;
    ensure!(hash != PASSWORD && hash.starts_with("$2"), "stored hash is not bcrypt");
    ensure!(bcrypt::verify(PASSWORD, &hash).unwrap(), "bcrypt verify failed");
    ensure!(!bcrypt::verify("wrong password!!", &hash).unwrap(), "bcrypt accepted a wrong password");
    ensure!(auth.authenticate("lock@example.org", PASSWORD, IP).is_ok(), "login failed");
    for _ in 0..5 {
        let r = auth.authenticate("lock@example.org", "not the password", IP);
        ensure!(matches!(r, Err(AuthError::BadCredentials) | Err(AuthError::AccountLocked { .. })), "{r:?}");
    }
    let locked = auth.authenticate("lock@example.org", PASSWORD, IP);
    ensure!(matches!(locked, Err(AuthError::AccountLocked { .. })), "after 5 failures: {locked:?}");
    clock.advance(15 * 60 * 1000 - 1);
    ensure!(
        matches!(auth.authenticate("lock@example.org", PASSWORD, IP), Err(AuthError::AccountLocked { .. })),
        "lock lifted early"
    );
    clock.advance(1);
    ensure!(auth.authenticate("lock@example.org", PASSWORD, IP).is_ok(), "no recovery after 15 minutes");

    // Sealed provider keys.
    let vault = KeyVault::new(&[0x42; 32]);
    let sealed = vault.seal(id, "openai", API_KEY);
    ensure!(vault.open(id, "openai", &sealed).as_deref() == Ok(API_KEY), "round trip failed");
    let mut tampered = sealed.clone();
    let mut bytes = tampered.ciphertext.into_bytes();
    bytes[0] = if bytes[0] == b'A' { b'B' } else { b'A' };
    tampered.ciphertext = String::from_utf8(bytes).unwrap();
    ensure!(vault.open(id, "openai", &tampered).is_err(), "tampered ciphertext opened");
    ensure!(vault.open(id, "anthropic", &sealed).is_err(), "key opened under another provider");
    ensure!(vault.open(AccountId(Uuid::from_u128(8)), "openai", &sealed).is_err(), "key opened under another account");
    ensure!(KeyVault::new(&[0x43; 32]).open(id, "openai", &sealed).is_err(), "key opened under another master key");

    // Isolation: a second researcher probes the first one's resources.
    let pclock: Arc<dyn Clock> = Arc::new(VirtualClock::new(T0));
    let mut pconfig = PlatformConfig::default();
    pconfig.auth.bcrypt_cost = 4;
    pconfig.seed = Some(9);
    let p = Platform::new(pconfig, &secrets(), pclock, Arc::new(QueuedJobs::default()));
    let owner = p.register("owner@example.org", PASSWORD).map_err(|e| e.to_string())?;
    let intruder = p.register("intruder@example.org", "another long password").map_err(|e| e.to_string())?;
    p.login("owner@example.org", PASSWORD, IP).map_err(|e| e.to_string())?;
    p.store_provider_key(owner, ProviderKind::OpenAi, API_KEY).map_err(|e| e.to_string())?;
    let study = p.create_study(owner, "private", StudyType::Experimental).map_err(|e| e.to_string())?;
    let rooms: Vec<RoomId> = p
        .create_rooms_csv(owner, study.id, b"condition_label,slot_count,duration_s\n,2,60\n,3,60\n,2,120\n")
        .map_err(|e| e.to_string())?
        .into_iter()
        .map(|r| r.id)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(91);
    let mut denied = 0;
    for probe in 0..100 {
        let room = rooms[rng.gen_range(0..rooms.len())];
        let op = rng.gen_range(0..14);
        let result: Result<(), PlatformError> = match op {
            0 => p.study(intruder, study.id).map(drop),
            1 => p.room(intruder, room).map(drop),
            2 => p.transcript(intruder, room).map(drop),
            3 => p.inject(intruder, room, "hello").map(drop),
            4 => p.export_room(intruder, room, colloquy::export::ExportKind::Chat).map(drop),
            5 => p.export_study(intruder, study.id, colloquy::export::ExportKind::Survey).map(drop),
            6 => p.shuffle_slots(intruder, room).map(drop),
            7 => p.configure_slot(intruder, room, 1, SlotSettings::default()).map(drop),
            8 => p.issue_participant_url(intruder, room, 1).map(drop),
            9 => p.connect_monitor(intruder, room).map(drop),
            10 => p.end_room(intruder, room).map(drop),
            11 => p.rooms_of(intruder, study.id).map(drop),
            12 => p.add_collaborator(study.id, intruder, "intruder@example.org").map(drop),
            _ => p.create_rooms_csv(intruder, study.id, b"condition_label,slot_count,duration_s\n,2,60\n").map(drop),
        };
        match result {
            Err(e) if matches!(e.code(), "not_authorized" | "not_owner") => denied += 1,
            other => return Err(format!("probe {probe} (op {op}) was not denied: {other:?}")),
        }
    }
    ensure!(p.studies_of(intruder).is_empty(), "intruder can list the study");

    // Persisted state.
    let dir = std::env::temp_dir().join(format!("colloquy-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let path = dir.join("state.json");
    p.save(&path).map_err(|e| e.to_string())?;
    let saved = std::fs::read_to_string(&path).map_err(|e| e.to_string())?;
    let _ = std::fs::remove_dir_all(&dir);
    for (what, needle) in [("password", PASSWORD), ("api key", API_KEY), ("ip", IP)] {
        ensure!(!saved.contains(needle), "persisted state contains the plaintext {what}");
    }
    Ok(format!(
        "bcrypt ok, AES-GCM round trip and 4 refusals, lockout lifted at +15 min, {denied}/100 probes denied, {} byte snapshot clean",
        saved.len()
    ))
}

// ---- 10 -----------------------------------------------------------------

fn determinism() -> Outcome {
    let (a, b) = (demo(42), demo(42));
    ensure!(a.passed(), "violations {:?}", a.violations);
    ensure!(a.chat_csv == b.chat_csv, "chat CSVs differ");
    ensure!(a.surveys_csv == b.surveys_csv, "survey CSVs differ");
    ensure!(!a.chat_csv.is_empty() && !a.surveys_csv.is_empty(), "empty output");
    Ok(format!(
        "seed 42 twice: chat {} bytes, surveys {} bytes identical",
        a.chat_csv.len(),
        a.surveys_csv.len()
    ))
}
