//! The assembled service: accounts, studies, live rooms, channels and
//! background jobs behind one handle.
//!
//! Every room-scoped operation locks that room, advances its clock to the
//! current instant, applies the operation, then fans the resulting events
//! out through the [`Hub`] and hands any jobs to the [`JobSink`]. The HTTP
//! server and the headless scenario runner both drive a [`Platform`].

mod channels;
mod jobs;
mod persist;

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::auth::{authorize_access, AuthConfig, AuthError, AuthService, Resource, Secrets, SessionToken};
use crate::bot::{BotConfig, BotError, ProviderKind, SuggestionsConfig};
use crate::clock::{Clock, EpochMs};
use crate::engine::{EngineError, RoomRuntime, RoomState};
use crate::export::{self, ExportKind, RoomExport};
use crate::gateway::Hub;
use crate::ids::{
    AccountId, ParticipantToken, QuestionId, RandomCodes, RoomId, SlotIndex, StudyId, SurveyId,
};
use crate::message::Message;
use crate::randomizer::{self, Condition, RandomizerError};
use crate::registry::{
    parse_import_csv, participant_url, ImportRow, Registry, RegistryError, Room, Slot, SlotKind, Study,
    StudyType, TokenTarget,
};
use crate::survey::{
    Question, QuestionLibrary, QuestionLibraryEntry, SurveyDefinition, SurveyError, SurveyScope, SurveyTrigger,
    Targets,
};

pub use channels::{ChannelOutcome, MonitorChannel, ParticipantChannel};
pub use jobs::{JobSink, QueuedJobs};
pub use persist::{PlatformSnapshot, SNAPSHOT_VERSION};

#[derive(Debug, Error)]
pub enum PlatformError {
    #[error("not authorized")]
    NotAuthorized,
    #[error("unknown room {0}")]
    UnknownRoom(RoomId),
    #[error("unknown question {0}")]
    UnknownQuestion(QuestionId),
    #[error("unknown survey {0}")]
    UnknownSurvey(SurveyId),
    #[error("a room needs at least one human slot")]
    NoHumanSlots,
    #[error("suggestions are only available in experimental studies")]
    SuggestionsInObservational,
    #[error(transparent)]
    Auth(#[from] AuthError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Randomizer(#[from] RandomizerError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Survey(#[from] SurveyError),
    #[error(transparent)]
    Bot(#[from] BotError),
    #[error("storage: {0}")]
    Storage(String),
}

impl PlatformError {
    /// Stable snake_case code used in error frames and HTTP bodies.
    pub fn code(&self) -> &'static str {
        match self {
            PlatformError::NotAuthorized => "not_authorized",
            PlatformError::UnknownRoom(_) => "unknown_room",
            PlatformError::UnknownQuestion(_) => "unknown_question",
            PlatformError::UnknownSurvey(_) => "unknown_survey",
            PlatformError::NoHumanSlots => "no_human_slots",
            PlatformError::SuggestionsInObservational => "observational_study",
            PlatformError::Auth(e) => match e {
                AuthError::EmailTaken => "email_taken",
                AuthError::InvalidEmail => "invalid_email",
                AuthError::WeakPassword => "weak_password",
                AuthError::BadCredentials => "bad_credentials",
                AuthError::AccountLocked { .. } => "account_locked",
                AuthError::RateLimited => "rate_limited",
                AuthError::DecryptionFailure => "decryption_failure",
                AuthError::NoSuchKey => "no_such_key",
                AuthError::UnknownAccount => "unknown_account",
                AuthError::InvalidSession => "invalid_session",
                AuthError::MissingSecret(_) | AuthError::BadSecret(_) | AuthError::Hash(_) => "internal",
            },
            PlatformError::Registry(e) => match e {
                RegistryError::UnknownAccount => "unknown_account",
                RegistryError::EmptyName => "empty_name",
                RegistryError::UnknownStudy(_) => "unknown_study",
                RegistryError::UnknownRoom(_) => "unknown_room",
                RegistryError::NotOwner => "not_owner",
                RegistryError::SelfShare => "self_share",
                RegistryError::EmptyImport => "empty_import",
                RegistryError::SlotCountOutOfRange(_) => "slot_count_out_of_range",
                RegistryError::DuplicateCodeAfterRetries => "duplicate_code_after_retries",
                RegistryError::InvalidDuration => "invalid_duration",
                RegistryError::UnsupportedModality => "unsupported_modality",
                RegistryError::MalformedImport(_) => "malformed_import",
                RegistryError::BotSlot(_) => "bot_slot",
                RegistryError::UnknownSlot(_) => "unknown_slot",
                RegistryError::UnknownToken => "unknown_token",
                RegistryError::SessionOver => "session_over",
                RegistryError::ObservationalStudy => "observational_study",
            },
            PlatformError::Randomizer(e) => match e {
                RandomizerError::EmptyPool => "empty_pool",
                RandomizerError::ObservationalStudy => "observational_study",
                RandomizerError::RoomLocked => "room_locked",
                RandomizerError::BadPool => "bad_pool",
                RandomizerError::BadPermutation(_) => "bad_permutation",
            },
            PlatformError::Engine(e) => engine_code(e),
            PlatformError::Survey(e) => match e {
                SurveyError::NoQuestions => "no_questions",
                SurveyError::BadTriggerParams(_) => "bad_trigger_params",
                SurveyError::NotAuthorized => "not_authorized",
                SurveyError::UnknownQuestion(_) => "unknown_question",
                SurveyError::UnknownSurvey(_) => "unknown_survey",
                SurveyError::InvalidQuestion(_) => "invalid_question",
                SurveyError::OutOfRange(_) => "out_of_range",
                SurveyError::PresentationClosed => "presentation_closed",
            },
            PlatformError::Bot(_) => "invalid_bot_config",
            PlatformError::Storage(_) => "storage",
        }
    }
}

pub fn engine_code(e: &EngineError) -> &'static str {
    match e {
        EngineError::UnknownSlot(_) => "unknown_slot",
        EngineError::BotSlot(_) => "bot_slot",
        EngineError::SessionOver => "session_over",
        EngineError::AlreadyConnected => "already_connected",
        EngineError::NotConnected => "not_connected",
        EngineError::NotInReadyCheck => "not_in_ready_check",
        EngineError::NotActive => "not_active",
        EngineError::EmptyMessage => "empty_message",
        EngineError::MessageTooLong => "message_too_long",
        EngineError::SuggestionsDisabled(_) => "suggestions_disabled",
        EngineError::UnknownSurvey(_) => "unknown_survey",
        EngineError::NotManualSurvey(_) => "not_manual_survey",
        EngineError::Bot(BotError::EmptyContext) => "empty_context",
        EngineError::Bot(_) => "bot_error",
        EngineError::Survey(SurveyError::OutOfRange(_)) => "out_of_range",
        EngineError::Survey(SurveyError::PresentationClosed) => "presentation_closed",
        EngineError::Survey(_) => "survey_error",
    }
}

pub type Result<T, E = PlatformError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlatformConfig {
    /// Prefix of participant join URLs.
    pub base_url: String,
    /// Display name on researcher injections.
    pub injector_name: String,
    pub auth: AuthConfig,
    /// Seed for ids, codes, tokens and per-room generators. `None` draws from
    /// the operating system.
    pub seed: Option<u64>,
    /// Answer window for surveys that do not set their own.
    pub answer_window_s: u32,
}

impl Default for PlatformConfig {
    fn default() -> Self {
        Self {
            base_url: "http://localhost:8080".into(),
            injector_name: crate::engine::DEFAULT_INJECTOR_NAME.into(),
            auth: AuthConfig::default(),
            seed: None,
            answer_window_s: crate::survey::DEFAULT_ANSWER_WINDOW_S,
        }
    }
}

/// Partial update of one slot. Absent fields are left unchanged.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SlotSettings {
    pub display_name: Option<String>,
    pub instructions_text: Option<Option<String>>,
    /// `Some(None)` makes the slot human; `Some(Some(cfg))` makes it a bot.
    pub bot: Option<Option<BotConfig>>,
    pub suggestions: Option<Option<SuggestionsConfig>>,
    pub external_participant_label: Option<Option<String>>,
}

/// A survey as submitted by a researcher, before question snapshots are
/// resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyDraft {
    pub title: String,
    #[serde(default)]
    pub question_ids: Vec<QuestionId>,
    #[serde(default)]
    pub questions: Vec<Question>,
    pub trigger: SurveyTrigger,
    #[serde(default)]
    pub answer_window_s: Option<u32>,
    #[serde(default = "all_targets")]
    pub targets: Targets,
    pub scope: SurveyScope,
}

fn all_targets() -> Targets {
    Targets::All
}

/// A room as a researcher sees it in listings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomSummary {
    pub room: Room,
    pub state: RoomState,
    pub message_count: usize,
}

pub struct Platform {
    config: PlatformConfig,
    clock: Arc<dyn Clock>,
    auth: AuthService,
    registry: Registry,
    library: QuestionLibrary,
    rooms: RwLock<HashMap<RoomId, Arc<Mutex<RoomRuntime>>>>,
    surveys: RwLock<BTreeMap<SurveyId, Arc<SurveyDefinition>>>,
    rng: Mutex<ChaCha20Rng>,
    hub: Hub,
    jobs: Arc<dyn JobSink>,
    providers: jobs::ProviderCache,
}

impl Platform {
    pub fn new(config: PlatformConfig, secrets: &Secrets, clock: Arc<dyn Clock>, jobs: Arc<dyn JobSink>) -> Self {
        let rng = match config.seed {
            Some(seed) => ChaCha20Rng::seed_from_u64(seed),
            None => ChaCha20Rng::from_entropy(),
        };
        Self {
            auth: AuthService::new(config.auth, secrets, clock.clone()),
            config,
            clock,
            registry: Registry::new(),
            library: QuestionLibrary::default(),
            rooms: RwLock::new(HashMap::new()),
            surveys: RwLock::new(BTreeMap::new()),
            rng: Mutex::new(rng),
            hub: Hub::new(),
            jobs,
            providers: jobs::ProviderCache::default(),
        }
    }

    pub fn now(&self) -> EpochMs {
        self.clock.now_ms()
    }

    pub fn config(&self) -> &PlatformConfig {
        &self.config
    }

    pub fn auth(&self) -> &AuthService {
        &self.auth
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn hub(&self) -> &Hub {
        &self.hub
    }

    fn next_seed(&self) -> u64 {
        self.rng.lock().next_u64()
    }

    fn room_cell(&self, room: RoomId) -> Result<Arc<Mutex<RoomRuntime>>> {
        self.rooms
            .read()
            .get(&room)
            .cloned()
            .ok_or(PlatformError::UnknownRoom(room))
    }

    pub fn room_ids(&self) -> Vec<RoomId> {
        let mut ids: Vec<RoomId> = self.rooms.read().keys().copied().collect();
        ids.sort();
        ids
    }

    /// Runs one operation inside a room's ordered step.
    fn step<T>(&self, room: RoomId, f: impl FnOnce(&mut RoomRuntime, EpochMs) -> T) -> Result<T> {
        let cell = self.room_cell(room)?;
        let mut rt = cell.lock();
        let now = self.clock.now_ms();
        rt.advance_clock(now);
        let out = f(&mut rt, now);
        self.flush(&mut rt, now);
        Ok(out)
    }

    /// Delivers pending room events and jobs. Participants whose channel
    /// overflowed are treated as disconnected.
    fn flush(&self, rt: &mut RoomRuntime, now: EpochMs) {
        let room = rt.room().id;
        loop {
            let events = rt.drain_outbox();
            if events.is_empty() {
                break;
            }
            for dropped in self.hub.dispatch(room, &events, now) {
                tracing::debug!(%room, slot = dropped.slot, "dropping slow participant channel");
                rt.leave(dropped.slot, now);
            }
        }
        for job in rt.drain_jobs() {
            self.jobs.submit(job);
        }
    }

    /// Read-only access to a room's runtime, after advancing its clock.
    pub fn inspect<T>(&self, room: RoomId, f: impl FnOnce(&RoomRuntime) -> T) -> Result<T> {
        self.step(room, |rt, _| f(rt))
    }

    fn authorize(&self, account: AccountId, resource: Resource) -> Result<()> {
        if authorize_access(&self.registry, account, resource) {
            Ok(())
        } else {
            Err(PlatformError::NotAuthorized)
        }
    }

    fn owned_study(&self, account: AccountId, study: StudyId) -> Result<Study> {
        let s = self.registry.study(study).ok_or(PlatformError::NotAuthorized)?;
        if s.owner_account_id == account {
            Ok(s)
        } else if s.grants(account) {
            Err(RegistryError::NotOwner.into())
        } else {
            Err(PlatformError::NotAuthorized)
        }
    }

    fn owned_room(&self, account: AccountId, room: RoomId) -> Result<Study> {
        let study = self.registry.study_of(room).ok_or(PlatformError::NotAuthorized)?;
        self.owned_study(account, study)
    }

    // ---- accounts -------------------------------------------------------

    pub fn register(&self, email: &str, password: &str) -> Result<AccountId> {
        let id = AccountId::from_rng(&mut *self.rng.lock());
        Ok(self.auth.register(email, password, id)?)
    }

    pub fn login(&self, email: &str, password: &str, source_ip: &str) -> Result<SessionToken> {
        Ok(self.auth.authenticate(email, password, source_ip)?)
    }

    pub fn session_account(&self, bearer: &str) -> Result<AccountId> {
        Ok(self.auth.session_account(bearer)?)
    }

    pub fn store_provider_key(&self, account: AccountId, provider: ProviderKind, key: &str) -> Result<()> {
        Ok(self.auth.store_provider_key(account, provider, key)?)
    }

    // ---- studies and rooms ----------------------------------------------

    pub fn create_study(&self, owner: AccountId, name: &str, study_type: StudyType) -> Result<Study> {
        let id = StudyId::from_rng(&mut *self.rng.lock());
        let exists = self.auth.account_exists(owner);
        Ok(self
            .registry
            .create_study(owner, exists, name, study_type, id, self.now())?)
    }

    pub fn study(&self, account: AccountId, study: StudyId) -> Result<Study> {
        self.authorize(account, Resource::Study(study))?;
        self.registry.study(study).ok_or(PlatformError::NotAuthorized)
    }

    /// Studies the account owns or collaborates on.
    pub fn studies_of(&self, account: AccountId) -> Vec<Study> {
        self.registry
            .studies()
            .into_iter()
            .filter(|s| s.grants(account))
            .collect()
    }

    pub fn add_collaborator(&self, study: StudyId, grantor: AccountId, grantee_email: &str) -> Result<Study> {
        self.authorize(grantor, Resource::Study(study))?;
        let grantee = self.auth.account_by_email(grantee_email);
        let exists = grantee.is_some();
        let grantee = grantee.unwrap_or(AccountId(uuid::Uuid::nil()));
        Ok(self.registry.add_collaborator(study, grantor, grantee, exists)?)
    }

    pub fn set_conditions(&self, account: AccountId, study: StudyId, pool: Vec<Condition>) -> Result<Study> {
        let s = self.owned_study(account, study)?;
        if s.study_type == StudyType::Observational {
            return Err(RandomizerError::ObservationalStudy.into());
        }
        randomizer::validate_pool(&pool)?;
        Ok(self.registry.with_study(study, |s| {
            s.condition_pool = pool;
            Ok(s.clone())
        })?)
    }

    pub fn create_rooms_csv(&self, account: AccountId, study: StudyId, csv: &[u8]) -> Result<Vec<Room>> {
        let rows = parse_import_csv(csv)?;
        self.create_rooms_bulk(account, study, &rows)
    }

    /// Creates one room per row. A row whose label names a pool condition
    /// gets that condition's texts; an unlabeled row in a study with a pool
    /// is assigned a condition at random. Study-wide surveys are armed.
    pub fn create_rooms_bulk(&self, account: AccountId, study: StudyId, rows: &[ImportRow]) -> Result<Vec<Room>> {
        let s = self.owned_study(account, study)?;
        let mut rooms = {
            let mut rng = self.rng.lock();
            let mut codes = RandomCodes(ChaCha20Rng::from_rng(&mut *rng).expect("seeding from rng"));
            let mut ids = ChaCha20Rng::from_rng(&mut *rng).expect("seeding from rng");
            self.registry
                .allocate_rooms(study, rows, &mut codes, &mut *rng, || RoomId::from_rng(&mut ids))?
        };
        let surveys: Vec<Arc<SurveyDefinition>> = self
            .surveys
            .read()
            .values()
            .filter(|d| d.scope == SurveyScope::Study(study))
            .cloned()
            .collect();
        let now = self.now();
        for room in &mut rooms {
            if !s.condition_pool.is_empty() {
                let named = room
                    .condition_label
                    .as_ref()
                    .and_then(|l| s.condition_pool.iter().find(|c| &c.label == l));
                match named {
                    Some(c) => randomizer::apply_condition(c, room),
                    None if room.condition_label.is_none() => {
                        randomizer::assign_condition(s.study_type, &s.condition_pool, room, &mut *self.rng.lock())?;
                    }
                    None => {}
                }
            }
            let mut rt = RoomRuntime::new(room.clone(), self.next_seed());
            rt.set_injector_name(self.config.injector_name.clone());
            for def in &surveys {
                rt.arm_survey(def.clone(), now);
            }
            self.rooms.write().insert(room.id, Arc::new(Mutex::new(rt)));
        }
        Ok(rooms)
    }

    pub fn room(&self, account: AccountId, room: RoomId) -> Result<RoomSummary> {
        self.authorize(account, Resource::Room(room))?;
        self.inspect(room, |rt| RoomSummary {
            room: rt.room().clone(),
            state: rt.state(),
            message_count: rt.transcript().len(),
        })
    }

    pub fn rooms_of(&self, account: AccountId, study: StudyId) -> Result<Vec<RoomSummary>> {
        self.authorize(account, Resource::Study(study))?;
        self.registry
            .rooms_of(study)
            .into_iter()
            .map(|id| self.room(account, id))
            .collect()
    }

    fn with_unlocked_room<T>(
        &self,
        room: RoomId,
        f: impl FnOnce(&mut RoomRuntime) -> Result<T>,
    ) -> Result<T> {
        self.step(room, |rt, _| {
            if !matches!(rt.state(), RoomState::Created | RoomState::Waiting) {
                return Err(RandomizerError::RoomLocked.into());
            }
            f(rt)
        })?
    }

    /// Re-draws the room's condition from the study pool.
    pub fn assign_condition(&self, account: AccountId, room: RoomId) -> Result<String> {
        let s = self.owned_room(account, room)?;
        self.with_unlocked_room(room, |rt| {
            Ok(randomizer::assign_condition(
                s.study_type,
                &s.condition_pool,
                rt.room_mut(),
                &mut *self.rng.lock(),
            )?)
        })
    }

    /// Applies one random permutation to the room's (label, instructions)
    /// pairs. Returns the permutation, `perm[i-1]` being slot i's target.
    pub fn shuffle_slots(&self, account: AccountId, room: RoomId) -> Result<Vec<SlotIndex>> {
        self.owned_room(account, room)?;
        self.with_unlocked_room(room, |rt| {
            Ok(randomizer::shuffle_slot_pairs(rt.room_mut(), &mut *self.rng.lock()))
        })
    }

    pub fn configure_slot(
        &self,
        account: AccountId,
        room: RoomId,
        slot: SlotIndex,
        settings: SlotSettings,
    ) -> Result<Slot> {
        let s = self.owned_room(account, room)?;
        if let Some(Some(cfg)) = &settings.bot {
            cfg.validate()?;
        }
        if let Some(Some(cfg)) = &settings.suggestions {
            if s.study_type == StudyType::Observational {
                return Err(PlatformError::SuggestionsInObservational);
            }
            cfg.validate()?;
        }
        self.with_unlocked_room(room, |rt| {
            let kind_change = settings.bot.is_some();
            if kind_change && (rt.state() != RoomState::Created || rt.is_connected(slot)) {
                return Err(RandomizerError::RoomLocked.into());
            }
            let mut updated = rt.room().slot(slot).cloned().ok_or(RegistryError::UnknownSlot(slot))?;
            if let Some(name) = settings.display_name {
                updated.display_name = name;
            }
            if let Some(text) = settings.instructions_text {
                updated.instructions_text = text;
            }
            if let Some(label) = settings.external_participant_label {
                updated.external_participant_label = label;
            }
            if let Some(cfg) = settings.suggestions {
                updated.suggestions = cfg;
            }
            let old_token = updated.participant_token.clone();
            if let Some(bot) = settings.bot {
                match bot {
                    Some(cfg) => {
                        updated.kind = SlotKind::Bot(cfg);
                        updated.participant_token = None;
                        updated.suggestions = None;
                    }
                    None if !updated.is_human() => {
                        updated.kind = SlotKind::Human;
                        updated.participant_token = Some(self.fresh_token());
                    }
                    None => {}
                }
            }
            let others_human = rt.room().slots.iter().any(|s| s.index != slot && s.is_human());
            if !updated.is_human() && !others_human {
                return Err(PlatformError::NoHumanSlots);
            }
            if updated.participant_token != old_token {
                let target = TokenTarget {
                    room_id: room,
                    slot_index: slot,
                };
                self.registry
                    .rebind_token(old_token.as_ref(), updated.participant_token.as_ref().map(|t| (t, target)));
            }
            *rt.room_mut().slot_mut(slot).expect("checked") = updated.clone();
            Ok(updated)
        })
    }

    fn fresh_token(&self) -> ParticipantToken {
        let mut rng = self.rng.lock();
        loop {
            let t = ParticipantToken::generate(&mut *rng);
            if !self.registry.token_taken(&t) {
                return t;
            }
        }
    }

    pub fn update_room_config(
        &self,
        account: AccountId,
        room: RoomId,
        config: crate::registry::RoomConfig,
    ) -> Result<Room> {
        self.owned_room(account, room)?;
        config.validate()?;
        self.with_unlocked_room(room, |rt| {
            rt.room_mut().config = config;
            Ok(rt.room().clone())
        })
    }

    pub fn issue_participant_url(&self, account: AccountId, room: RoomId, slot: SlotIndex) -> Result<String> {
        self.authorize(account, Resource::Room(room))?;
        let r = self.inspect(room, |rt| rt.room().clone())?;
        Ok(participant_url(&r, slot, &self.config.base_url)?)
    }

    /// Maps a join token to its room and slot. Tokens stop resolving once the
    /// room has ended.
    pub fn resolve_token(&self, raw: &str) -> Result<TokenTarget> {
        let token = ParticipantToken::from_untrusted(raw).ok_or(RegistryError::UnknownToken)?;
        let target = self.registry.lookup_token(&token).ok_or(RegistryError::UnknownToken)?;
        if self.inspect(target.room_id, |rt| rt.state())? == RoomState::Ended {
            return Err(RegistryError::SessionOver.into());
        }
        Ok(target)
    }

    // ---- surveys --------------------------------------------------------

    pub fn save_question(&self, account: AccountId, mut question: Question) -> Result<Question> {
        if !self.auth.account_exists(account) {
            return Err(AuthError::UnknownAccount.into());
        }
        question.id = QuestionId::from_rng(&mut *self.rng.lock());
        self.library.save(QuestionLibraryEntry {
            owner_account_id: account,
            question: question.clone(),
            saved_at: self.now(),
        })?;
        Ok(question)
    }

    pub fn library_questions(&self, account: AccountId) -> Vec<QuestionLibraryEntry> {
        self.library.owned_by(account)
    }

    /// Resolves a draft into a definition and arms it in every in-scope room
    /// that has not ended.
    pub fn define_survey(&self, account: AccountId, draft: SurveyDraft) -> Result<SurveyDefinition> {
        let study = match draft.scope {
            SurveyScope::Study(s) => s,
            SurveyScope::Room(r) => self.registry.study_of(r).ok_or(PlatformError::NotAuthorized)?,
        };
        self.owned_study(account, study)?;
        let mut questions = Vec::with_capacity(draft.question_ids.len() + draft.questions.len());
        for id in &draft.question_ids {
            let entry = self
                .library
                .get(*id)
                .filter(|e| e.owner_account_id == account)
                .ok_or(PlatformError::UnknownQuestion(*id))?;
            questions.push(entry.question);
        }
        for mut q in draft.questions {
            q.id = QuestionId::from_rng(&mut *self.rng.lock());
            questions.push(q);
        }
        let def = SurveyDefinition {
            id: SurveyId::from_rng(&mut *self.rng.lock()),
            study_id: study,
            title: draft.title,
            questions,
            trigger: draft.trigger,
            answer_window_s: draft.answer_window_s.unwrap_or(self.config.answer_window_s),
            targets: draft.targets,
            scope: draft.scope,
        };
        def.validate()?;
        let def = Arc::new(def);
        self.surveys.write().insert(def.id, def.clone());
        let rooms = match def.scope {
            SurveyScope::Room(r) => vec![r],
            SurveyScope::Study(s) => self.registry.rooms_of(s),
        };
        for room in rooms {
            self.step(room, |rt, now| rt.arm_survey(def.clone(), now))?;
        }
        Ok((*def).clone())
    }

    pub fn survey(&self, account: AccountId, id: SurveyId) -> Result<SurveyDefinition> {
        let def = self
            .surveys
            .read()
            .get(&id)
            .cloned()
            .ok_or(PlatformError::UnknownSurvey(id))?;
        self.authorize(account, Resource::Study(def.study_id))?;
        Ok((*def).clone())
    }

    /// Presents a manual survey now. Returns the number of presentations.
    pub fn push_survey(&self, account: AccountId, room: RoomId, survey: SurveyId) -> Result<usize> {
        self.authorize(account, Resource::Room(room))?;
        Ok(self.step(room, |rt, now| rt.push_survey(survey, now))??)
    }

    // ---- monitoring and data --------------------------------------------

    pub fn inject(&self, account: AccountId, room: RoomId, text: &str) -> Result<Message> {
        self.authorize(account, Resource::Room(room))?;
        Ok(self.step(room, |rt, now| rt.inject(text, now))??)
    }

    /// Ends an active session immediately.
    pub fn end_room(&self, account: AccountId, room: RoomId) -> Result<RoomState> {
        self.authorize(account, Resource::Room(room))?;
        self.step(room, |rt, now| rt.end_now(now).state)
    }

    pub fn transcript(&self, account: AccountId, room: RoomId) -> Result<Vec<Message>> {
        self.authorize(account, Resource::Room(room))?;
        self.inspect(room, |rt| rt.transcript().to_vec())
    }

    /// Snapshot of one room for export, taken inside its ordered step.
    pub fn room_export(&self, room: RoomId) -> Result<RoomExport> {
        let known = self.surveys.read().clone();
        self.inspect(room, |rt| {
            let mut surveys: BTreeMap<_, _> = rt.armed_surveys().map(|(d, _)| (d.id, d.clone())).collect();
            for r in rt.responses() {
                if let Some(d) = known.get(&r.survey_id) {
                    surveys.entry(d.id).or_insert_with(|| (**d).clone());
                }
            }
            RoomExport {
                study_id: rt.room().study_id,
                room: rt.room().clone(),
                session: rt.session().clone(),
                transcript: rt.transcript().to_vec(),
                metrics: rt.all_metrics().map(|m| (m.message_seq, m.clone())).collect(),
                responses: rt.responses().to_vec(),
                surveys,
            }
        })
    }

    pub fn export_room(&self, account: AccountId, room: RoomId, kind: ExportKind) -> Result<Vec<u8>> {
        self.authorize(account, Resource::Room(room))?;
        self.auth.check_export_rate(account)?;
        Ok(export::export(kind, &[self.room_export(room)?]))
    }

    pub fn export_study(&self, account: AccountId, study: StudyId, kind: ExportKind) -> Result<Vec<u8>> {
        self.authorize(account, Resource::Study(study))?;
        self.auth.check_export_rate(account)?;
        let rooms = self
            .registry
            .rooms_of(study)
            .into_iter()
            .map(|r| self.room_export(r))
            .collect::<Result<Vec<_>>>()?;
        Ok(export::export(kind, &rooms))
    }

    /// Operator export without an account, for the command line.
    pub fn export_unchecked(&self, rooms: &[RoomId], kind: ExportKind) -> Result<Vec<u8>> {
        let rooms = rooms
            .iter()
            .map(|r| self.room_export(*r))
            .collect::<Result<Vec<_>>>()?;
        Ok(export::export(kind, &rooms))
    }

    // ---- time -----------------------------------------------------------

    /// Advances every room to the current instant.
    pub fn tick(&self) {
        let cells: Vec<_> = self.rooms.read().values().cloned().collect();
        let now = self.clock.now_ms();
        for cell in cells {
            let mut rt = cell.lock();
            rt.advance_clock(now);
            self.flush(&mut rt, now);
        }
    }

    /// Earliest pending deadline across all rooms.
    pub fn next_deadline(&self) -> Option<EpochMs> {
        let cells: Vec<_> = self.rooms.read().values().cloned().collect();
        cells.iter().filter_map(|c| c.lock().next_deadline()).min()
    }

    /// Ends every active room now, firing post-chat surveys, and closes all
    /// channels.
    pub fn shutdown(&self) {
        let cells: Vec<_> = self.rooms.read().values().cloned().collect();
        let now = self.clock.now_ms();
        for cell in cells {
            let mut rt = cell.lock();
            rt.end_now(now);
            self.flush(&mut rt, now);
            self.hub.close_room(rt.room().id);
        }
    }
}
