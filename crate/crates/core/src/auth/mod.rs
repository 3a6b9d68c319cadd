//! Researcher accounts, credentials, sealed provider keys, rate limits, and
//! study-level access checks.

mod crypto;
mod limiter;

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine as _;
use parking_lot::{Mutex, RwLock};
use rand::rngs::OsRng;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::bot::{ApiKey, ProviderKind};
use crate::clock::{Clock, EpochMs};
use crate::ids::{AccountId, RoomId, StudyId};
use crate::registry::Registry;

pub use crypto::{EncryptedKey, IpHasher, KeyVault, Secrets, HMAC_SECRET_ENV, MASTER_KEY_ENV};
pub use limiter::RateLimiter;

pub const MIN_PASSWORD_LEN: usize = 10;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AuthError {
    #[error("email already registered")]
    EmailTaken,
    #[error("email address is not valid")]
    InvalidEmail,
    #[error("password must be at least {MIN_PASSWORD_LEN} characters")]
    WeakPassword,
    #[error("bad credentials")]
    BadCredentials,
    #[error("account locked")]
    AccountLocked { until_ms: EpochMs },
    #[error("rate limited")]
    RateLimited,
    #[error("stored key failed authentication")]
    DecryptionFailure,
    #[error("no stored key for that provider")]
    NoSuchKey,
    #[error("unknown account")]
    UnknownAccount,
    #[error("session is not valid")]
    InvalidSession,
    #[error("missing secret {0}")]
    MissingSecret(&'static str),
    #[error("malformed secret {0}")]
    BadSecret(&'static str),
    #[error("password hashing failed: {0}")]
    Hash(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AuthConfig {
    pub bcrypt_cost: u32,
    pub lockout_threshold: u32,
    pub lockout_ms: i64,
    pub auth_attempts_per_min: usize,
    pub exports_per_min: usize,
    pub session_ttl_ms: i64,
}

impl Default for AuthConfig {
    fn default() -> Self {
        Self {
            bcrypt_cost: 12,
            lockout_threshold: 5,
            lockout_ms: 15 * 60 * 1000,
            auth_attempts_per_min: 20,
            exports_per_min: 10,
            session_ttl_ms: 12 * 60 * 60 * 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Account {
    pub id: AccountId,
    pub email: String,
    pub password_hash: String,
    pub encrypted_api_keys: BTreeMap<String, EncryptedKey>,
    pub created_at: EpochMs,
    pub failed_login_count: u32,
    pub locked_until: Option<EpochMs>,
}

/// Bearer credential returned by a successful login.
#[derive(Clone, PartialEq, Eq)]
pub struct SessionToken(pub String);

impl std::fmt::Debug for SessionToken {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("SessionToken(<redacted>)")
    }
}

#[derive(Debug, Clone, Copy)]
struct LiveSession {
    account: AccountId,
    expires_at: EpochMs,
}

/// Something a researcher may ask to read or act on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resource {
    Study(StudyId),
    Room(RoomId),
}

/// Allows iff the account owns or collaborates on the study that owns the
/// resource. Unknown resources are denied.
pub fn authorize_access(registry: &Registry, account: AccountId, resource: Resource) -> bool {
    let study = match resource {
        Resource::Study(id) => Some(id),
        Resource::Room(id) => registry.study_of(id),
    };
    study
        .and_then(|id| registry.study(id))
        .is_some_and(|s| s.grants(account))
}

fn normalize_email(email: &str) -> Result<String, AuthError> {
    let email = email.trim().to_lowercase();
    match email.split_once('@') {
        Some((local, domain)) if !local.is_empty() && domain.contains('.') && !email.contains(char::is_whitespace) => {
            Ok(email)
        }
        _ => Err(AuthError::InvalidEmail),
    }
}

fn digest(token: &str) -> String {
    hex::encode(Sha256::digest(token.as_bytes()))
}

pub struct AuthService {
    config: AuthConfig,
    clock: Arc<dyn Clock>,
    accounts: RwLock<BTreeMap<AccountId, Account>>,
    by_email: RwLock<HashMap<String, AccountId>>,
    /// Keyed by SHA-256 of the bearer token.
    sessions: Mutex<HashMap<String, LiveSession>>,
    vault: KeyVault,
    ip_hasher: IpHasher,
    auth_limiter: RateLimiter<String>,
    export_limiter: RateLimiter<AccountId>,
}

impl AuthService {
    pub fn new(config: AuthConfig, secrets: &Secrets, clock: Arc<dyn Clock>) -> Self {
        Self {
            auth_limiter: RateLimiter::new(config.auth_attempts_per_min, 60_000),
            export_limiter: RateLimiter::new(config.exports_per_min, 60_000),
            config,
            clock,
            accounts: RwLock::new(BTreeMap::new()),
            by_email: RwLock::new(HashMap::new()),
            sessions: Mutex::new(HashMap::new()),
            vault: KeyVault::new(&secrets.master_key),
            ip_hasher: IpHasher::new(&secrets.hmac_secret),
        }
    }

    pub fn config(&self) -> &AuthConfig {
        &self.config
    }

    pub fn hash_ip(&self, ip: &str) -> String {
        self.ip_hasher.hash(ip)
    }

    pub fn account_exists(&self, id: AccountId) -> bool {
        self.accounts.read().contains_key(&id)
    }

    pub fn account(&self, id: AccountId) -> Option<Account> {
        self.accounts.read().get(&id).cloned()
    }

    pub fn account_by_email(&self, email: &str) -> Option<AccountId> {
        let email = normalize_email(email).ok()?;
        self.by_email.read().get(&email).copied()
    }

    pub fn register(&self, email: &str, password: &str, id: AccountId) -> Result<AccountId, AuthError> {
        let email = normalize_email(email)?;
        if password.chars().count() < MIN_PASSWORD_LEN {
            return Err(AuthError::WeakPassword);
        }
        if self.by_email.read().contains_key(&email) {
            return Err(AuthError::EmailTaken);
        }
        let password_hash = bcrypt::hash(password, self.config.bcrypt_cost).map_err(|e| AuthError::Hash(e.to_string()))?;
        let mut by_email = self.by_email.write();
        if by_email.contains_key(&email) {
            return Err(AuthError::EmailTaken);
        }
        by_email.insert(email.clone(), id);
        self.accounts.write().insert(
            id,
            Account {
                id,
                email,
                password_hash,
                encrypted_api_keys: BTreeMap::new(),
                created_at: self.clock.now_ms(),
                failed_login_count: 0,
                locked_until: None,
            },
        );
        tracing::info!(account = %id, "account registered");
        Ok(id)
    }

    /// Verifies credentials. The per-IP limit is checked first, then the
    /// lockout, then the password. Five consecutive failures lock the
    /// account; a locked account refuses even the right password.
    pub fn authenticate(&self, email: &str, password: &str, source_ip: &str) -> Result<SessionToken, AuthError> {
        let now = self.clock.now_ms();
        let ip = self.hash_ip(source_ip);
        if !self.auth_limiter.try_acquire(&ip, now) {
            tracing::warn!(ip_hash = %ip, "auth rate limit hit");
            return Err(AuthError::RateLimited);
        }
        let id = self.account_by_email(email).ok_or(AuthError::BadCredentials)?;
        let hash = {
            let accounts = self.accounts.read();
            let account = accounts.get(&id).ok_or(AuthError::BadCredentials)?;
            if let Some(until_ms) = account.locked_until.filter(|&u| now < u) {
                return Err(AuthError::AccountLocked { until_ms });
            }
            account.password_hash.clone()
        };
        let ok = bcrypt::verify(password, &hash).unwrap_or(false);
        let mut accounts = self.accounts.write();
        let account = accounts.get_mut(&id).ok_or(AuthError::BadCredentials)?;
        if ok {
            account.failed_login_count = 0;
            account.locked_until = None;
            drop(accounts);
            return Ok(self.open_session(id, now));
        }
        account.failed_login_count += 1;
        if account.failed_login_count >= self.config.lockout_threshold {
            account.failed_login_count = 0;
            account.locked_until = Some(now + self.config.lockout_ms);
            tracing::warn!(account = %id, "account locked");
        }
        Err(AuthError::BadCredentials)
    }

    fn open_session(&self, account: AccountId, now: EpochMs) -> SessionToken {
        let mut bytes = [0u8; 32];
        OsRng.fill_bytes(&mut bytes);
        let token = URL_SAFE_NO_PAD.encode(bytes);
        self.sessions.lock().insert(
            digest(&token),
            LiveSession {
                account,
                expires_at: now + self.config.session_ttl_ms,
            },
        );
        SessionToken(token)
    }

    pub fn session_account(&self, token: &str) -> Result<AccountId, AuthError> {
        let now = self.clock.now_ms();
        let mut sessions = self.sessions.lock();
        let key = digest(token);
        match sessions.get(&key) {
            Some(s) if s.expires_at > now => Ok(s.account),
            Some(_) => {
                sessions.remove(&key);
                Err(AuthError::InvalidSession)
            }
            None => Err(AuthError::InvalidSession),
        }
    }

    pub fn logout(&self, token: &str) {
        self.sessions.lock().remove(&digest(token));
    }

    pub fn store_provider_key(&self, account: AccountId, provider: ProviderKind, plaintext: &str) -> Result<(), AuthError> {
        let sealed = self.vault.seal(account, provider.as_str(), plaintext);
        let mut accounts = self.accounts.write();
        let a = accounts.get_mut(&account).ok_or(AuthError::UnknownAccount)?;
        a.encrypted_api_keys.insert(provider.as_str().to_owned(), sealed);
        Ok(())
    }

    pub fn load_provider_key(&self, account: AccountId, provider: ProviderKind) -> Result<ApiKey, AuthError> {
        let sealed = {
            let accounts = self.accounts.read();
            let a = accounts.get(&account).ok_or(AuthError::UnknownAccount)?;
            a.encrypted_api_keys
                .get(provider.as_str())
                .cloned()
                .ok_or(AuthError::NoSuchKey)?
        };
        self.vault.open(account, provider.as_str(), &sealed).map(ApiKey::new)
    }

    /// Counts one export request against the account's per-minute budget.
    pub fn check_export_rate(&self, account: AccountId) -> Result<(), AuthError> {
        if self.export_limiter.try_acquire(&account, self.clock.now_ms()) {
            Ok(())
        } else {
            Err(AuthError::RateLimited)
        }
    }

    pub fn accounts(&self) -> Vec<Account> {
        self.accounts.read().values().cloned().collect()
    }

    pub fn restore(&self, accounts: Vec<Account>) {
        let mut by_id = self.accounts.write();
        let mut by_email = self.by_email.write();
        for a in accounts {
            by_email.insert(a.email.clone(), a.id);
            by_id.insert(a.id, a);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::VirtualClock;
    use uuid::Uuid;

    const T0: EpochMs = 1_700_000_000_000;

    fn service() -> (AuthService, VirtualClock) {
        let clock = VirtualClock::new(T0);
        let config = AuthConfig {
            bcrypt_cost: 4,
            ..AuthConfig::default()
        };
        let secrets = Secrets::parse(&"ab".repeat(32), "hmac").unwrap();
        (AuthService::new(config, &secrets, Arc::new(clock.clone())), clock)
    }

    fn acct(n: u128) -> AccountId {
        AccountId(Uuid::from_u128(n))
    }

    #[test]
    fn registration_hashes_with_bcrypt() {
        let (auth, _) = service();
        let id = auth.register("Researcher@Example.org", "correct horse battery", acct(1)).unwrap();
        let a = auth.account(id).unwrap();
        assert_eq!(a.email, "researcher@example.org");
        assert!(a.password_hash.starts_with("$2b$04$"));
        assert!(bcrypt::verify("correct horse battery", &a.password_hash).unwrap());
    }

    #[test]
    fn registration_errors() {
        let (auth, _) = service();
        auth.register("a@example.org", "long enough pw", acct(1)).unwrap();
        assert_eq!(auth.register("A@example.org", "long enough pw", acct(2)), Err(AuthError::EmailTaken));
        assert_eq!(auth.register("b@example.org", "short1", acct(3)), Err(AuthError::WeakPassword));
        assert_eq!(auth.register("nope", "long enough pw", acct(4)), Err(AuthError::InvalidEmail));
    }

    #[test]
    fn login_and_session() {
        let (auth, clock) = service();
        let id = auth.register("a@example.org", "long enough pw", acct(1)).unwrap();
        let token = auth.authenticate("a@example.org", "long enough pw", "198.51.100.1").unwrap();
        assert_eq!(auth.session_account(&token.0), Ok(id));
        assert_eq!(auth.session_account("forged"), Err(AuthError::InvalidSession));
        clock.advance(auth.config().session_ttl_ms);
        assert_eq!(auth.session_account(&token.0), Err(AuthError::InvalidSession));
    }

    #[test]
    fn lockout_after_five_failures_then_recovery() {
        let (auth, clock) = service();
        auth.register("a@example.org", "long enough pw", acct(1)).unwrap();
        for _ in 0..5 {
            assert_eq!(auth.authenticate("a@example.org", "wrong", "ip"), Err(AuthError::BadCredentials));
        }
        assert!(matches!(
            auth.authenticate("a@example.org", "long enough pw", "ip"),
            Err(AuthError::AccountLocked { .. })
        ));
        clock.advance(15 * 60 * 1000 - 1);
        assert!(matches!(
            auth.authenticate("a@example.org", "long enough pw", "ip"),
            Err(AuthError::AccountLocked { .. })
        ));
        clock.advance(1);
        assert!(auth.authenticate("a@example.org", "long enough pw", "ip").is_ok());
    }

    #[test]
    fn success_resets_failure_count() {
        let (auth, _) = service();
        auth.register("a@example.org", "long enough pw", acct(1)).unwrap();
        for _ in 0..4 {
            let _ = auth.authenticate("a@example.org", "wrong", "ip");
        }
        auth.authenticate("a@example.org", "long enough pw", "ip").unwrap();
        for _ in 0..4 {
            let _ = auth.authenticate("a@example.org", "wrong", "ip");
        }
        assert!(auth.authenticate("a@example.org", "long enough pw", "ip").is_ok());
    }

    #[test]
    fn per_ip_rate_limit() {
        let (auth, clock) = service();
        for _ in 0..20 {
            assert_eq!(auth.authenticate("x@example.org", "whatever", "192.0.2.7"), Err(AuthError::BadCredentials));
        }
        assert_eq!(auth.authenticate("x@example.org", "whatever", "192.0.2.7"), Err(AuthError::RateLimited));
        assert_eq!(auth.authenticate("x@example.org", "whatever", "192.0.2.8"), Err(AuthError::BadCredentials));
        clock.advance(60_000);
        assert_eq!(auth.authenticate("x@example.org", "whatever", "192.0.2.7"), Err(AuthError::BadCredentials));
    }

    #[test]
    fn export_rate_limit() {
        let (auth, _) = service();
        for _ in 0..10 {
            auth.check_export_rate(acct(1)).unwrap();
        }
        assert_eq!(auth.check_export_rate(acct(1)), Err(AuthError::RateLimited));
        assert!(auth.check_export_rate(acct(2)).is_ok());
    }

    #[test]
    fn provider_keys_round_trip_and_are_never_plain() {
        let (auth, _) = service();
        let id = auth.register("a@example.org", "long enough pw", acct(1)).unwrap();
        assert_eq!(auth.load_provider_key(id, ProviderKind::OpenAi).err(), Some(AuthError::NoSuchKey));
        auth.store_provider_key(id, ProviderKind::OpenAi, "sk-live-abcdef").unwrap();
        assert_eq!(auth.load_provider_key(id, ProviderKind::OpenAi).unwrap().expose(), "sk-live-abcdef");
        let dump = serde_json::to_string(&auth.accounts()).unwrap();
        assert!(!dump.contains("sk-live-abcdef"));
        assert!(!dump.contains("long enough pw"));
    }
}
