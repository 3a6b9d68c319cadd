use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::bot::{DelayLaw, ModelBackend, ProviderKind, ScriptSource, SuggestionTrigger};
use crate::clock::EpochMs;
use crate::ids::SlotIndex;
use crate::survey::{QuestionKind, SurveyTrigger};

use super::SimError;

pub const DEFAULT_START_MS: EpochMs = 1_700_000_000_000;

/// A headless session: one room, its slots and surveys, and a timed list of
/// participant actions.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_start")]
    pub start_ms: EpochMs,
    pub room: RoomSpec,
    #[serde(rename = "slot")]
    pub slots: Vec<SlotSpec>,
    #[serde(rename = "survey", default)]
    pub surveys: Vec<SurveySpec>,
    /// Inline event table.
    #[serde(default)]
    pub events: Option<String>,
    /// Event table in a separate file, relative to the scenario file.
    #[serde(default)]
    pub events_file: Option<PathBuf>,
    #[serde(skip)]
    pub timeline: Vec<ScenarioEvent>,
    /// Directory that relative script and event files resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_start() -> EpochMs {
    DEFAULT_START_MS
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoomSpec {
    pub duration_s: u32,
    #[serde(default = "yes")]
    pub require_ready: bool,
    #[serde(default = "yes")]
    pub show_timer: bool,
    #[serde(default)]
    pub condition_label: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotKindSpec {
    Human,
    Bot,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlotSpec {
    pub index: SlotIndex,
    pub kind: SlotKindSpec,
    #[serde(default)]
    pub display_name: Option<String>,
    #[serde(default)]
    pub instructions: Option<String>,
    #[serde(default)]
    pub system_prompt: Option<String>,
    #[serde(default)]
    pub delay: Option<DelayLaw>,
    #[serde(default)]
    pub provider: Option<ProviderKind>,
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default)]
    pub script: Option<String>,
    #[serde(default)]
    pub script_file: Option<PathBuf>,
    #[serde(default)]
    pub suggestions: Option<SuggestionSpec>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuggestionSpec {
    pub trigger: SuggestionTrigger,
    #[serde(default)]
    pub script: Option<String>,
    #[serde(default)]
    pub script_file: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurveySpec {
    pub title: String,
    pub trigger: SurveyTrigger,
    #[serde(default)]
    pub answer_window_s: Option<u32>,
    /// Target slots; all human slots when absent.
    #[serde(default)]
    pub targets: Option<Vec<SlotIndex>>,
    #[serde(rename = "question")]
    pub questions: Vec<QuestionSpec>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct QuestionSpec {
    pub prompt: String,
    #[serde(flatten)]
    pub kind: QuestionKind,
}

/// One row of the event table: `at_ms,slot,action,value`, with `at_ms`
/// relative to the scenario start.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioEvent {
    pub at_ms: i64,
    pub slot: SlotIndex,
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    Join,
    Leave,
    Ready,
    Chat(String),
    Keystroke,
    Deletion,
    Paste,
    Click,
    Focus,
    RequestSuggestions,
    /// `question:value` for the slot's open survey (1-based question number).
    SurveyState(usize, String),
    /// Submits the open survey; each `question:value` pair is an answer.
    Submit(Vec<(usize, String)>),
    Inject(String),
    /// Pushes the n-th (1-based) survey of the scenario.
    Push(usize),
    End,
}

fn parse_pair(raw: &str) -> Result<(usize, String), String> {
    let (q, v) = raw.split_once(':').ok_or_else(|| format!("expected question:value, got {raw:?}"))?;
    let q: usize = q.trim().parse().map_err(|_| format!("bad question number {q:?}"))?;
    if q == 0 {
        return Err("question numbers start at 1".into());
    }
    Ok((q, v.to_owned()))
}

impl Action {
    fn parse(action: &str, value: &str) -> Result<Self, String> {
        Ok(match action {
            "join" => Action::Join,
            "leave" => Action::Leave,
            "ready" => Action::Ready,
            "chat" => Action::Chat(value.to_owned()),
            "key" | "keystroke" => Action::Keystroke,
            "delete" | "deletion" => Action::Deletion,
            "paste" => Action::Paste,
            "click" => Action::Click,
            "focus" => Action::Focus,
            "suggest" => Action::RequestSuggestions,
            "survey_state" => {
                let (q, v) = parse_pair(value)?;
                Action::SurveyState(q, v)
            }
            "submit" => Action::Submit(
                value
                    .split(';')
                    .filter(|p| !p.trim().is_empty())
                    .map(parse_pair)
                    .collect::<Result<_, _>>()?,
            ),
            "inject" => Action::Inject(value.to_owned()),
            "push" => Action::Push(value.trim().parse().map_err(|_| format!("bad survey number {value:?}"))?),
            "end" => Action::End,
            other => return Err(format!("unknown action {other:?}")),
        })
    }
}

/// Parses an event table. Rows keep file order among equal times.
pub fn parse_events(csv_text: &str) -> Result<Vec<ScenarioEvent>, SimError> {
    let bad = |line: usize, msg: String| SimError::ScenarioParse(format!("events row {line}: {msg}"));
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::Headers)
        .comment(Some(b'#'))
        .from_reader(csv_text.trim_start().as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| SimError::ScenarioParse(e.to_string()))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != ["at_ms", "slot", "action", "value"] {
        return Err(SimError::ScenarioParse("events header must be at_ms,slot,action,value".into()));
    }
    let mut events = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 1;
        let row = row.map_err(|e| bad(line, e.to_string()))?;
        let at_ms = row[0].trim().parse().map_err(|_| bad(line, "bad at_ms".into()))?;
        let slot = row[1].trim().parse().map_err(|_| bad(line, "bad slot".into()))?;
        let action = Action::parse(row[2].trim(), row.get(3).unwrap_or("")).map_err(|e| bad(line, e))?;
        events.push(ScenarioEvent { at_ms, slot, action });
    }
    events.sort_by_key(|e| e.at_ms);
    Ok(events)
}

fn script_source(inline: &Option<String>, file: &Option<PathBuf>, base: &Path) -> Option<ScriptSource> {
    match (inline, file) {
        (Some(s), _) => Some(ScriptSource::Inline(s.clone())),
        (None, Some(f)) => Some(ScriptSource::File(base.join(f))),
        (None, None) => None,
    }
}

impl SlotSpec {
    pub(crate) fn backend(&self, base: &Path) -> ModelBackend {
        let provider = self.provider.unwrap_or(ProviderKind::Scripted);
        ModelBackend {
            provider,
            model: self.model.clone().unwrap_or_else(|| provider.as_str().to_owned()),
            script: script_source(&self.script, &self.script_file, base),
        }
    }
}

impl SuggestionSpec {
    pub(crate) fn backend(&self, base: &Path) -> ModelBackend {
        ModelBackend {
            provider: ProviderKind::Scripted,
            model: "scripted".into(),
            script: script_source(&self.script, &self.script_file, base),
        }
    }
}

impl Scenario {
    /// Parses a scenario. Relative file references resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, SimError> {
        if text.trim().is_empty() {
            return Err(SimError::ScenarioParse("scenario is empty".into()));
        }
        let mut scenario: Scenario = toml::from_str(text).map_err(|e| SimError::ScenarioParse(e.to_string()))?;
        let table = match (&scenario.events, &scenario.events_file) {
            (Some(inline), None) => inline.clone(),
            (None, Some(file)) => {
                let path = base.join(file);
                std::fs::read_to_string(&path)
                    .map_err(|e| SimError::ScenarioParse(format!("{}: {e}", path.display())))?
            }
            (Some(_), Some(_)) => {
                return Err(SimError::ScenarioParse("give either events or events_file, not both".into()))
            }
            (None, None) => return Err(SimError::ScenarioParse("scenario has no events".into())),
        };
        scenario.timeline = parse_events(&table)?;
        scenario.base_dir = base.to_path_buf();
        scenario.check()?;
        Ok(scenario)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| SimError::ScenarioParse(format!("{}: {e}", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    fn check(&self) -> Result<(), SimError> {
        let err = |m: String| Err(SimError::ScenarioParse(m));
        let mut indices: Vec<SlotIndex> = self.slots.iter().map(|s| s.index).collect();
        indices.sort_unstable();
        if indices != (1..=self.slots.len() as SlotIndex).collect::<Vec<_>>() {
            return err("slot indices must run 1..n without gaps".into());
        }
        if !self.slots.iter().any(|s| s.kind == SlotKindSpec::Human) {
            return err("scenario needs at least one human slot".into());
        }
        for s in &self.slots {
            if s.kind == SlotKindSpec::Bot && s.delay.is_none() {
                return err(format!("bot slot {} needs a delay", s.index));
            }
        }
        for e in &self.timeline {
            let researcher = matches!(e.action, Action::Inject(_) | Action::Push(_) | Action::End);
            if !researcher && !self.slots.iter().any(|s| s.index == e.slot && s.kind == SlotKindSpec::Human) {
                return err(format!("event at {} ms names slot {}, which is not a human slot", e.at_ms, e.slot));
            }
            if let Action::Push(n) = e.action {
                if n == 0 || n > self.surveys.len() {
                    return err(format!("push names survey {n}, scenario has {}", self.surveys.len()));
                }
            }
        }
        Ok(())
    }
}
