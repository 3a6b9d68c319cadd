//! Server-authoritative time source.
//!
//! Every timestamp the platform records comes from a [`Clock`]. Production
//! uses [`SystemClock`]; tests and the smoke harness use [`VirtualClock`],
//! which only moves when told to.

use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::Arc;

/// Milliseconds since the Unix epoch, UTC.
pub type EpochMs = i64;

pub trait Clock: Send + Sync + 'static {
    fn now_ms(&self) -> EpochMs;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> EpochMs {
        chrono::Utc::now().timestamp_millis()
    }
}

/// Manually advanced clock shared between a driver and the platform.
#[derive(Debug, Clone)]
pub struct VirtualClock {
    now: Arc<AtomicI64>,
}

impl VirtualClock {
    pub fn new(start_ms: EpochMs) -> Self {
        Self {
            now: Arc::new(AtomicI64::new(start_ms)),
        }
    }

    /// Moves the clock to `at_ms`. Attempts to go backwards are ignored.
    pub fn set(&self, at_ms: EpochMs) {
        self.now.fetch_max(at_ms, Ordering::SeqCst);
    }

    pub fn advance(&self, by_ms: i64) -> EpochMs {
        self.now.fetch_add(by_ms.max(0), Ordering::SeqCst) + by_ms.max(0)
    }
}

impl Clock for VirtualClock {
    fn now_ms(&self) -> EpochMs {
        self.now.load(Ordering::SeqCst)
    }
}

pub(crate) fn iso_utc(ms: EpochMs) -> String {
    use chrono::{DateTime, SecondsFormat};
    DateTime::from_timestamp_millis(ms)
        .map(|t| t.to_rfc3339_opts(SecondsFormat::Millis, true))
        .unwrap_or_default()
}
