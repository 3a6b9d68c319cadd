//! Identifiers, participant tokens, and room display codes.

use std::fmt;

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine as _;
use rand::{CryptoRng, Rng, RngCore};
use serde::{Deserialize, Serialize};
use uuid::Uuid;

macro_rules! uuid_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub Uuid);

        impl $name {
            pub fn from_rng<R: RngCore + ?Sized>(rng: &mut R) -> Self {
                let mut bytes = [0u8; 16];
                rng.fill_bytes(&mut bytes);
                Self(uuid::Builder::from_random_bytes(bytes).into_uuid())
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                self.0.fmt(f)
            }
        }

        impl std::str::FromStr for $name {
            type Err = uuid::Error;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                Uuid::parse_str(s).map(Self)
            }
        }
    };
}

uuid_id!(AccountId);
uuid_id!(StudyId);
uuid_id!(RoomId);
uuid_id!(SurveyId);
uuid_id!(QuestionId);

/// 1-based participant slot position. Index 0 is reserved for researcher
/// injections and never names a real slot.
pub type SlotIndex = u8;

pub const RESEARCHER_SLOT: SlotIndex = 0;
pub const MAX_SLOTS: usize = 10;
pub const MIN_SLOTS: usize = 2;

/// Unguessable join credential: 128 random bits, URL-safe base64 without
/// padding (22 characters).
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParticipantToken(String);

impl ParticipantToken {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let mut bytes = [0u8; 16];
        rng.fill_bytes(&mut bytes);
        Self(URL_SAFE_NO_PAD.encode(bytes))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Wraps an untrusted string received from a client. No validation beyond
    /// a length bound; resolution decides whether it names anything.
    pub fn from_untrusted(raw: &str) -> Option<Self> {
        (!raw.is_empty() && raw.len() <= 64).then(|| Self(raw.to_owned()))
    }
}

impl fmt::Debug for ParticipantToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ParticipantToken({}…)", &self.0[..self.0.len().min(4)])
    }
}

impl fmt::Display for ParticipantToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub const ROOM_CODE_LEN: usize = 6;
const ROOM_CODE_ALPHABET: &[u8; 36] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";

/// Six-character uppercase alphanumeric room display code, e.g. `LS9UX3`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct RoomCode(String);

impl RoomCode {
    pub fn parse(raw: &str) -> Option<Self> {
        (raw.len() == ROOM_CODE_LEN
            && raw
                .bytes()
                .all(|b| b.is_ascii_uppercase() || b.is_ascii_digit()))
        .then(|| Self(raw.to_owned()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for RoomCode {
    type Error = String;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        RoomCode::parse(&value).ok_or_else(|| format!("invalid room code {value:?}"))
    }
}

impl From<RoomCode> for String {
    fn from(code: RoomCode) -> Self {
        code.0
    }
}

impl fmt::Display for RoomCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Source of candidate room codes. Collisions are handled by the caller.
pub trait CodeGenerator: Send {
    fn next_code(&mut self) -> RoomCode;
}

/// Uniform draws over `[A-Z0-9]{6}`.
pub struct RandomCodes<R>(pub R);

impl<R: Rng + Send> CodeGenerator for RandomCodes<R> {
    fn next_code(&mut self) -> RoomCode {
        let code: String = (0..ROOM_CODE_LEN)
            .map(|_| ROOM_CODE_ALPHABET[self.0.gen_range(0..ROOM_CODE_ALPHABET.len())] as char)
            .collect();
        RoomCode(code)
    }
}
