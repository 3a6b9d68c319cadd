//! Account → study → room → slot hierarchy.
//!
//! The [`Registry`] owns studies, the per-study room index with its display
//! codes, and the platform-wide participant token index. Room contents live
//! with the room engine; the registry only allocates them.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bot::{BotConfig, SuggestionsConfig};
use crate::clock::EpochMs;
use crate::ids::{
    AccountId, CodeGenerator, ParticipantToken, RoomCode, RoomId, SlotIndex, StudyId, MAX_SLOTS,
    MIN_SLOTS,
};
use crate::randomizer::Condition;
use crate::survey::DEFAULT_ANSWER_WINDOW_S;

/// Room code draws per room before bulk creation gives up.
pub const CODE_RETRY_LIMIT: usize = 16;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RegistryError {
    #[error("unknown account")]
    UnknownAccount,
    #[error("study name must not be empty")]
    EmptyName,
    #[error("unknown study {0}")]
    UnknownStudy(StudyId),
    #[error("unknown room {0}")]
    UnknownRoom(RoomId),
    #[error("only the study owner may do this")]
    NotOwner,
    #[error("cannot share a study with its owner")]
    SelfShare,
    #[error("import contains no rows")]
    EmptyImport,
    #[error("slot count {0} outside 2..=10")]
    SlotCountOutOfRange(usize),
    #[error("could not draw a unique room code after {CODE_RETRY_LIMIT} attempts")]
    DuplicateCodeAfterRetries,
    #[error("duration must be at least 1 s")]
    InvalidDuration,
    #[error("audio rooms are not supported")]
    UnsupportedModality,
    #[error("malformed import: {0}")]
    MalformedImport(String),
    #[error("slot {0} is a bot slot")]
    BotSlot(SlotIndex),
    #[error("unknown slot {0}")]
    UnknownSlot(SlotIndex),
    #[error("unknown participant token")]
    UnknownToken,
    #[error("session is over")]
    SessionOver,
    #[error("observational studies have no condition pool")]
    ObservationalStudy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyType {
    Experimental,
    Observational,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Study {
    pub id: StudyId,
    pub owner_account_id: AccountId,
    pub collaborator_ids: BTreeSet<AccountId>,
    pub name: String,
    pub study_type: StudyType,
    pub condition_pool: Vec<Condition>,
    pub created_at: EpochMs,
}

impl Study {
    pub fn grants(&self, account: AccountId) -> bool {
        self.owner_account_id == account || self.collaborator_ids.contains(&account)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Text,
    Audio,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoomConfig {
    pub modality: Modality,
    pub duration_s: u32,
    pub show_timer: bool,
    pub require_ready: bool,
    pub survey_answer_window_s: u32,
}

impl RoomConfig {
    pub fn text(duration_s: u32) -> Self {
        Self {
            modality: Modality::Text,
            duration_s,
            show_timer: true,
            require_ready: true,
            survey_answer_window_s: DEFAULT_ANSWER_WINDOW_S,
        }
    }

    pub fn validate(&self) -> Result<(), RegistryError> {
        if self.modality != Modality::Text {
            return Err(RegistryError::UnsupportedModality);
        }
        if self.duration_s == 0 || self.survey_answer_window_s == 0 {
            return Err(RegistryError::InvalidDuration);
        }
        Ok(())
    }

    pub fn duration_ms(&self) -> i64 {
        i64::from(self.duration_s) * 1000
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SlotKind {
    Human,
    Bot(BotConfig),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slot {
    pub index: SlotIndex,
    pub display_name: String,
    pub kind: SlotKind,
    pub instructions_text: Option<String>,
    /// Manipulation label travelling with `instructions_text` when slots are
    /// shuffled.
    #[serde(default)]
    pub text_label: Option<String>,
    pub participant_token: Option<ParticipantToken>,
    pub suggestions: Option<SuggestionsConfig>,
    /// Researcher-supplied label for the person holding this slot, used to
    /// link sessions of the same participant across rooms.
    #[serde(default)]
    pub external_participant_label: Option<String>,
}

impl Slot {
    pub fn human(index: SlotIndex, token: ParticipantToken) -> Self {
        Self {
            index,
            display_name: format!("Participant {}", slot_letter(index)),
            kind: SlotKind::Human,
            instructions_text: None,
            text_label: None,
            participant_token: Some(token),
            suggestions: None,
            external_participant_label: None,
        }
    }

    pub fn bot(index: SlotIndex, display_name: impl Into<String>, config: BotConfig) -> Self {
        Self {
            index,
            display_name: display_name.into(),
            kind: SlotKind::Bot(config),
            instructions_text: None,
            text_label: None,
            participant_token: None,
            suggestions: None,
            external_participant_label: None,
        }
    }

    pub fn is_human(&self) -> bool {
        matches!(self.kind, SlotKind::Human)
    }

    pub fn bot_config(&self) -> Option<&BotConfig> {
        match &self.kind {
            SlotKind::Bot(cfg) => Some(cfg),
            SlotKind::Human => None,
        }
    }
}

/// `1 → A`, `2 → B`, … `10 → J`.
pub fn slot_letter(index: SlotIndex) -> char {
    (b'A' + index.saturating_sub(1).min(25)) as char
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Room {
    pub id: RoomId,
    pub study_id: StudyId,
    pub code: RoomCode,
    pub condition_label: Option<String>,
    pub slots: Vec<Slot>,
    pub config: RoomConfig,
}

impl Room {
    pub fn slot(&self, index: SlotIndex) -> Option<&Slot> {
        self.slots.iter().find(|s| s.index == index)
    }

    pub fn slot_mut(&mut self, index: SlotIndex) -> Option<&mut Slot> {
        self.slots.iter_mut().find(|s| s.index == index)
    }

    pub fn human_slots(&self) -> impl Iterator<Item = &Slot> {
        self.slots.iter().filter(|s| s.is_human())
    }

    pub fn check_slot_shape(&self) -> bool {
        (MIN_SLOTS..=MAX_SLOTS).contains(&self.slots.len())
            && self
                .slots
                .iter()
                .enumerate()
                .all(|(i, s)| usize::from(s.index) == i + 1)
            && self
                .slots
                .iter()
                .all(|s| s.is_human() == s.participant_token.is_some())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImportRow {
    pub condition_label: Option<String>,
    pub slot_count: usize,
    pub duration_s: u32,
}

pub const IMPORT_HEADER: [&str; 3] = ["condition_label", "slot_count", "duration_s"];

/// Parses a bulk-room import table (RFC 4180, UTF-8, header required).
pub fn parse_import_csv(data: &[u8]) -> Result<Vec<ImportRow>, RegistryError> {
    let malformed = |e: &dyn std::fmt::Display| RegistryError::MalformedImport(e.to_string());
    let text = std::str::from_utf8(data).map_err(|e| malformed(&e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| malformed(&e))?.clone();
    let position = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim_start_matches('\u{feff}') == name)
            .ok_or_else(|| RegistryError::MalformedImport(format!("missing column {name}")))
    };
    let (label_col, count_col, duration_col) = (
        position(IMPORT_HEADER[0])?,
        position(IMPORT_HEADER[1])?,
        position(IMPORT_HEADER[2])?,
    );
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| malformed(&e))?;
        let field = |col: usize| record.get(col).unwrap_or("");
        let slot_count = field(count_col)
            .parse()
            .map_err(|_| RegistryError::MalformedImport(format!("row {}: bad slot_count", line + 1)))?;
        let duration_s = field(duration_col)
            .parse()
            .map_err(|_| RegistryError::MalformedImport(format!("row {}: bad duration_s", line + 1)))?;
        let label = field(label_col);
        rows.push(ImportRow {
            condition_label: (!label.is_empty()).then(|| label.to_owned()),
            slot_count,
            duration_s,
        });
    }
    Ok(rows)
}

#[derive(Debug, Default)]
struct StudyRooms {
    rooms: Vec<RoomId>,
    codes: BTreeSet<RoomCode>,
}

/// Where a participant token points.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenTarget {
    pub room_id: RoomId,
    pub slot_index: SlotIndex,
}

#[derive(Debug, Default)]
pub struct Registry {
    studies: RwLock<BTreeMap<StudyId, Arc<Mutex<Study>>>>,
    study_rooms: RwLock<HashMap<StudyId, Arc<Mutex<StudyRooms>>>>,
    room_study: RwLock<HashMap<RoomId, StudyId>>,
    tokens: RwLock<HashMap<ParticipantToken, TokenTarget>>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn create_study(
        &self,
        owner: AccountId,
        owner_exists: bool,
        name: &str,
        study_type: StudyType,
        id: StudyId,
        now: EpochMs,
    ) -> Result<Study, RegistryError> {
        if !owner_exists {
            return Err(RegistryError::UnknownAccount);
        }
        let name = name.trim();
        if name.is_empty() {
            return Err(RegistryError::EmptyName);
        }
        let study = Study {
            id,
            owner_account_id: owner,
            collaborator_ids: BTreeSet::new(),
            name: name.to_owned(),
            study_type,
            condition_pool: Vec::new(),
            created_at: now,
        };
        self.insert_study(study.clone());
        Ok(study)
    }

    pub(crate) fn insert_study(&self, study: Study) {
        let id = study.id;
        self.studies.write().insert(id, Arc::new(Mutex::new(study)));
        self.study_rooms.write().entry(id).or_default();
    }

    pub fn study(&self, id: StudyId) -> Option<Study> {
        self.studies.read().get(&id).map(|s| s.lock().clone())
    }

    pub fn studies(&self) -> Vec<Study> {
        self.studies.read().values().map(|s| s.lock().clone()).collect()
    }

    /// Runs `f` with exclusive access to one study.
    pub fn with_study<T>(
        &self,
        id: StudyId,
        f: impl FnOnce(&mut Study) -> Result<T, RegistryError>,
    ) -> Result<T, RegistryError> {
        let cell = self
            .studies
            .read()
            .get(&id)
            .cloned()
            .ok_or(RegistryError::UnknownStudy(id))?;
        let mut study = cell.lock();
        f(&mut study)
    }

    pub fn add_collaborator(
        &self,
        study: StudyId,
        grantor: AccountId,
        grantee: AccountId,
        grantee_exists: bool,
    ) -> Result<Study, RegistryError> {
        self.with_study(study, |s| {
            if s.owner_account_id != grantor {
                return Err(RegistryError::NotOwner);
            }
            if grantee == grantor {
                return Err(RegistryError::SelfShare);
            }
            if !grantee_exists {
                return Err(RegistryError::UnknownAccount);
            }
            s.collaborator_ids.insert(grantee);
            Ok(s.clone())
        })
    }

    /// Allocates one room per import row with fresh codes and participant
    /// tokens. All rows are validated before anything is registered, and
    /// the study's room index is held for the whole import.
    pub fn allocate_rooms<G, R>(
        &self,
        study: StudyId,
        rows: &[ImportRow],
        codes: &mut G,
        token_rng: &mut R,
        mut room_ids: impl FnMut() -> RoomId,
    ) -> Result<Vec<Room>, RegistryError>
    where
        G: CodeGenerator + ?Sized,
        R: RngCore + CryptoRng,
    {
        if rows.is_empty() {
            return Err(RegistryError::EmptyImport);
        }
        for row in rows {
            if !(MIN_SLOTS..=MAX_SLOTS).contains(&row.slot_count) {
                return Err(RegistryError::SlotCountOutOfRange(row.slot_count));
            }
            if row.duration_s == 0 {
                return Err(RegistryError::InvalidDuration);
            }
        }
        let index = self
            .study_rooms
            .read()
            .get(&study)
            .cloned()
            .ok_or(RegistryError::UnknownStudy(study))?;
        let mut index = index.lock();

        let mut fresh_codes: Vec<RoomCode> = Vec::with_capacity(rows.len());
        for _ in rows {
            let code = (0..CODE_RETRY_LIMIT)
                .map(|_| codes.next_code())
                .find(|c| !index.codes.contains(c) && !fresh_codes.contains(c))
                .ok_or(RegistryError::DuplicateCodeAfterRetries)?;
            fresh_codes.push(code);
        }

        let mut tokens = self.tokens.write();
        let mut rooms = Vec::with_capacity(rows.len());
        for (row, code) in rows.iter().zip(fresh_codes.iter().cloned()) {
            let room_id = room_ids();
            let slots = (1..=row.slot_count as SlotIndex)
                .map(|i| {
                    let token = loop {
                        let t = ParticipantToken::generate(token_rng);
                        if !tokens.contains_key(&t) {
                            break t;
                        }
                    };
                    tokens.insert(token.clone(), TokenTarget { room_id, slot_index: i });
                    Slot::human(i, token)
                })
                .collect();
            let config = RoomConfig::text(row.duration_s);
            rooms.push(Room {
                id: room_id,
                study_id: study,
                code,
                condition_label: row.condition_label.clone(),
                slots,
                config,
            });
        }
        index.codes.extend(fresh_codes);
        index.rooms.extend(rooms.iter().map(|r| r.id));
        self.room_study
            .write()
            .extend(rooms.iter().map(|r| (r.id, study)));
        Ok(rooms)
    }

    /// Re-registers a room restored from a snapshot.
    pub(crate) fn restore_room(&self, room: &Room) {
        let index = self
            .study_rooms
            .write()
            .entry(room.study_id)
            .or_default()
            .clone();
        let mut index = index.lock();
        index.rooms.push(room.id);
        index.codes.insert(room.code.clone());
        self.room_study.write().insert(room.id, room.study_id);
        let mut tokens = self.tokens.write();
        for slot in &room.slots {
            if let Some(t) = &slot.participant_token {
                tokens.insert(
                    t.clone(),
                    TokenTarget {
                        room_id: room.id,
                        slot_index: slot.index,
                    },
                );
            }
        }
    }

    pub fn rooms_of(&self, study: StudyId) -> Vec<RoomId> {
        self.study_rooms
            .read()
            .get(&study)
            .map(|i| i.lock().rooms.clone())
            .unwrap_or_default()
    }

    pub fn study_of(&self, room: RoomId) -> Option<StudyId> {
        self.room_study.read().get(&room).copied()
    }

    pub fn lookup_token(&self, token: &ParticipantToken) -> Option<TokenTarget> {
        self.tokens.read().get(token).copied()
    }

    /// Swaps the token registered for a slot (slot kind changes).
    pub(crate) fn rebind_token(
        &self,
        old: Option<&ParticipantToken>,
        new: Option<(&ParticipantToken, TokenTarget)>,
    ) {
        let mut tokens = self.tokens.write();
        if let Some(old) = old {
            tokens.remove(old);
        }
        if let Some((t, target)) = new {
            tokens.insert(t.clone(), target);
        }
    }

    pub(crate) fn token_taken(&self, token: &ParticipantToken) -> bool {
        self.tokens.read().contains_key(token)
    }
}

/// Builds the participant entry URL for a slot.
pub fn participant_url(room: &Room, slot_index: SlotIndex, base_url: &str) -> Result<String, RegistryError> {
    let slot = room
        .slot(slot_index)
        .ok_or(RegistryError::UnknownSlot(slot_index))?;
    let token = slot
        .participant_token
        .as_ref()
        .ok_or(RegistryError::BotSlot(slot_index))?;
    Ok(format!("{}/join/{}", base_url.trim_end_matches('/'), token))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::RandomCodes;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use std::collections::VecDeque;
    use uuid::Uuid;

    fn acct(n: u128) -> AccountId {
        AccountId(Uuid::from_u128(n))
    }

    fn setup() -> (Registry, StudyId) {
        let reg = Registry::new();
        let id = StudyId(Uuid::from_u128(100));
        reg.create_study(acct(1), true, "Persuasion A", StudyType::Experimental, id, 0)
            .unwrap();
        (reg, id)
    }

    fn ids() -> impl FnMut() -> RoomId {
        let mut n = 1000u128;
        move || {
            n += 1;
            RoomId(Uuid::from_u128(n))
        }
    }

    struct Scripted(VecDeque<&'static str>);
    impl CodeGenerator for Scripted {
        fn next_code(&mut self) -> RoomCode {
            RoomCode::parse(self.0.pop_front().expect("script exhausted")).unwrap()
        }
    }

    fn rows(labels: &[&str]) -> Vec<ImportRow> {
        labels
            .iter()
            .map(|l| ImportRow {
                condition_label: Some((*l).into()),
                slot_count: 2,
                duration_s: 300,
            })
            .collect()
    }

    #[test]
    fn study_defaults_and_validation() {
        let (reg, id) = setup();
        let s = reg.study(id).unwrap();
        assert!(s.condition_pool.is_empty());
        assert!(s.collaborator_ids.is_empty());
        assert_eq!(
            reg.create_study(acct(1), true, "  ", StudyType::Experimental, StudyId(Uuid::from_u128(5)), 0),
            Err(RegistryError::EmptyName)
        );
        assert_eq!(
            reg.create_study(acct(9), false, "x", StudyType::Experimental, StudyId(Uuid::from_u128(6)), 0),
            Err(RegistryError::UnknownAccount)
        );
    }

    #[test]
    fn collaborator_rules() {
        let (reg, id) = setup();
        let s = reg.add_collaborator(id, acct(1), acct(2), true).unwrap();
        assert!(s.grants(acct(2)));
        assert_eq!(reg.add_collaborator(id, acct(2), acct(3), true), Err(RegistryError::NotOwner));
        assert_eq!(reg.add_collaborator(id, acct(1), acct(1), true), Err(RegistryError::SelfShare));
        assert_eq!(reg.add_collaborator(id, acct(1), acct(4), false), Err(RegistryError::UnknownAccount));
        assert!(!reg.study(id).unwrap().collaborator_ids.contains(&acct(1)));
    }

    #[test]
    fn bulk_creates_one_room_per_row() {
        let (reg, id) = setup();
        let labels: Vec<&str> = (0..24).map(|i| if i < 12 { "treatment" } else { "control" }).collect();
        let mut codes = RandomCodes(ChaCha20Rng::seed_from_u64(3));
        let rooms = reg
            .allocate_rooms(id, &rows(&labels), &mut codes, &mut rand::rngs::OsRng, ids())
            .unwrap();
        assert_eq!(rooms.len(), 24);
        let distinct: BTreeSet<_> = rooms.iter().map(|r| r.code.clone()).collect();
        assert_eq!(distinct.len(), 24);
        assert_eq!(rooms.iter().filter(|r| r.condition_label.as_deref() == Some("treatment")).count(), 12);
        assert!(rooms.iter().all(Room::check_slot_shape));
        assert_eq!(reg.rooms_of(id).len(), 24);
    }

    #[test]
    fn empty_and_out_of_range_imports_fail() {
        let (reg, id) = setup();
        let mut codes = RandomCodes(ChaCha20Rng::seed_from_u64(3));
        assert_eq!(
            reg.allocate_rooms(id, &[], &mut codes, &mut rand::rngs::OsRng, ids()),
            Err(RegistryError::EmptyImport)
        );
        let mut bad = rows(&["a"]);
        bad[0].slot_count = 11;
        assert_eq!(
            reg.allocate_rooms(id, &bad, &mut codes, &mut rand::rngs::OsRng, ids()),
            Err(RegistryError::SlotCountOutOfRange(11))
        );
        bad[0].slot_count = 1;
        assert_eq!(
            reg.allocate_rooms(id, &bad, &mut codes, &mut rand::rngs::OsRng, ids()),
            Err(RegistryError::SlotCountOutOfRange(1))
        );
        assert!(reg.rooms_of(id).is_empty());
    }

    #[test]
    fn colliding_draw_is_retried() {
        let (reg, id) = setup();
        let mut codes = Scripted(VecDeque::from(["LS9UX3", "LS9UX3", "8BHMVQ"]));
        let rooms = reg
            .allocate_rooms(id, &rows(&["a", "b"]), &mut codes, &mut rand::rngs::OsRng, ids())
            .unwrap();
        let got: Vec<_> = rooms.iter().map(|r| r.code.as_str().to_owned()).collect();
        assert_eq!(got, ["LS9UX3", "8BHMVQ"]);
        assert!(codes.0.is_empty());
    }

    #[test]
    fn codes_already_in_study_are_avoided() {
        let (reg, id) = setup();
        let mut first = Scripted(VecDeque::from(["LS9UX3"]));
        reg.allocate_rooms(id, &rows(&["a"]), &mut first, &mut rand::rngs::OsRng, ids())
            .unwrap();
        let mut stuck = Scripted(std::iter::repeat("LS9UX3").take(CODE_RETRY_LIMIT).collect());
        assert_eq!(
            reg.allocate_rooms(id, &rows(&["b"]), &mut stuck, &mut rand::rngs::OsRng, ids()),
            Err(RegistryError::DuplicateCodeAfterRetries)
        );
    }

    #[test]
    fn urls_embed_distinct_tokens() {
        let (reg, id) = setup();
        let mut codes = RandomCodes(ChaCha20Rng::seed_from_u64(3));
        let room = reg
            .allocate_rooms(id, &rows(&["a"]), &mut codes, &mut rand::rngs::OsRng, ids())
            .unwrap()
            .remove(0);
        let a = participant_url(&room, 1, "https://chat.example.org/").unwrap();
        let b = participant_url(&room, 2, "https://chat.example.org").unwrap();
        assert_ne!(a, b);
        assert_eq!(a, participant_url(&room, 1, "https://chat.example.org").unwrap());
        assert!(a.starts_with("https://chat.example.org/join/"));
        assert_eq!(participant_url(&room, 3, "x"), Err(RegistryError::UnknownSlot(3)));
        let token = room.slots[0].participant_token.clone().unwrap();
        assert_eq!(
            reg.lookup_token(&token),
            Some(TokenTarget { room_id: room.id, slot_index: 1 })
        );
    }

    #[test]
    fn import_csv_parses_with_header() {
        let csv = "condition_label,slot_count,duration_s\r\ntreatment,2,300\r\n\"control, B\",3,600\r\n,2,60\r\n";
        let rows = parse_import_csv(csv.as_bytes()).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[1].condition_label.as_deref(), Some("control, B"));
        assert_eq!(rows[1].slot_count, 3);
        assert_eq!(rows[2].condition_label, None);
        assert!(parse_import_csv(b"label,count\n").is_err());
        assert!(parse_import_csv(b"condition_label,slot_count,duration_s\nx,two,5\n").is_err());
        assert!(parse_import_csv(b"condition_label,slot_count,duration_s\n").unwrap().is_empty());
    }

    #[test]
    fn letters() {
        assert_eq!(slot_letter(1), 'A');
        assert_eq!(slot_letter(10), 'J');
    }
}
