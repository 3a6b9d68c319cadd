use aes_gcm::aead::{AeadInPlace, KeyInit};
use aes_gcm::{Aes256Gcm, Nonce, Tag};
use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use hmac::{Hmac, Mac};
use rand::rngs::OsRng;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::Sha256;

use crate::ids::AccountId;

use super::AuthError;

pub const MASTER_KEY_ENV: &str = "COLLOQUY_MASTER_KEY";
pub const HMAC_SECRET_ENV: &str = "COLLOQUY_HMAC_SECRET";

/// Server secrets loaded at startup. Both are required.
#[derive(Clone)]
pub struct Secrets {
    pub master_key: [u8; 32],
    pub hmac_secret: Vec<u8>,
}

impl std::fmt::Debug for Secrets {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("Secrets(<redacted>)")
    }
}

impl Secrets {
    /// Reads both secrets from the environment. The master key is 32 bytes
    /// given as 64 hex digits or standard base64; the HMAC secret is any
    /// non-empty string.
    pub fn from_env() -> Result<Self, AuthError> {
        let key = std::env::var(MASTER_KEY_ENV).map_err(|_| AuthError::MissingSecret(MASTER_KEY_ENV))?;
        let hmac = std::env::var(HMAC_SECRET_ENV).map_err(|_| AuthError::MissingSecret(HMAC_SECRET_ENV))?;
        Self::parse(&key, &hmac)
    }

    pub fn parse(master_key: &str, hmac_secret: &str) -> Result<Self, AuthError> {
        let master_key = master_key.trim();
        let bytes = hex::decode(master_key)
            .ok()
            .or_else(|| STANDARD.decode(master_key).ok())
            .ok_or(AuthError::BadSecret(MASTER_KEY_ENV))?;
        let master_key: [u8; 32] = bytes.try_into().map_err(|_| AuthError::BadSecret(MASTER_KEY_ENV))?;
        if hmac_secret.is_empty() {
            return Err(AuthError::BadSecret(HMAC_SECRET_ENV));
        }
        Ok(Self {
            master_key,
            hmac_secret: hmac_secret.as_bytes().to_vec(),
        })
    }
}

/// An AES-256-GCM sealed provider key. All parts are base64.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncryptedKey {
    pub nonce: String,
    pub ciphertext: String,
    pub tag: String,
}

/// Seals provider API keys under the master key. The account and provider
/// are bound in as associated data, so a sealed key cannot be moved to
/// another account or provider slot.
pub struct KeyVault {
    cipher: Aes256Gcm,
}

impl KeyVault {
    pub fn new(master_key: &[u8; 32]) -> Self {
        Self {
            cipher: Aes256Gcm::new(master_key.into()),
        }
    }

    fn aad(account: AccountId, provider: &str) -> Vec<u8> {
        format!("{account}/{provider}").into_bytes()
    }

    pub fn seal(&self, account: AccountId, provider: &str, plaintext: &str) -> EncryptedKey {
        let mut nonce = [0u8; 12];
        OsRng.fill_bytes(&mut nonce);
        let mut buf = plaintext.as_bytes().to_vec();
        let tag = self
            .cipher
            .encrypt_in_place_detached(Nonce::from_slice(&nonce), &Self::aad(account, provider), &mut buf)
            .expect("AES-GCM encryption of a short key cannot fail");
        EncryptedKey {
            nonce: STANDARD.encode(nonce),
            ciphertext: STANDARD.encode(&buf),
            tag: STANDARD.encode(tag),
        }
    }

    pub fn open(&self, account: AccountId, provider: &str, sealed: &EncryptedKey) -> Result<String, AuthError> {
        let decode = |s: &str| STANDARD.decode(s).map_err(|_| AuthError::DecryptionFailure);
        let nonce = decode(&sealed.nonce)?;
        let tag = decode(&sealed.tag)?;
        let mut buf = decode(&sealed.ciphertext)?;
        if nonce.len() != 12 || tag.len() != 16 {
            return Err(AuthError::DecryptionFailure);
        }
        self.cipher
            .decrypt_in_place_detached(
                Nonce::from_slice(&nonce),
                &Self::aad(account, provider),
                &mut buf,
                Tag::from_slice(&tag),
            )
            .map_err(|_| AuthError::DecryptionFailure)?;
        String::from_utf8(buf).map_err(|_| AuthError::DecryptionFailure)
    }
}

/// Keyed digest used wherever an IP address would otherwise be kept.
#[derive(Clone)]
pub struct IpHasher {
    secret: Vec<u8>,
}

impl IpHasher {
    pub fn new(secret: &[u8]) -> Self {
        Self { secret: secret.to_vec() }
    }

    pub fn hash(&self, ip: &str) -> String {
        let mut mac = <Hmac<Sha256> as Mac>::new_from_slice(&self.secret).expect("HMAC accepts any key length");
        mac.update(ip.as_bytes());
        hex::encode(mac.finalize().into_bytes())
    }
}
