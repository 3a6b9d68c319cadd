use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::clock::EpochMs;
use crate::ids::{RoomId, SlotIndex};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoomState {
    Created,
    Waiting,
    ReadyCheck,
    Active,
    Ended,
}

impl RoomState {
    pub fn as_str(self) -> &'static str {
        match self {
            RoomState::Created => "created",
            RoomState::Waiting => "waiting",
            RoomState::ReadyCheck => "ready_check",
            RoomState::Active => "active",
            RoomState::Ended => "ended",
        }
    }

    /// Whether `self → next` is an edge of the lifecycle. Staying put is
    /// always legal; `ReadyCheck` is only on the path when the ready gate is
    /// on.
    pub fn can_become(self, next: RoomState, require_ready: bool) -> bool {
        use RoomState::*;
        if self == next {
            return true;
        }
        matches!(
            (self, next, require_ready),
            (Created, Waiting, _)
                | (Waiting, ReadyCheck, true)
                | (ReadyCheck, Active, true)
                | (Waiting, Active, false)
                | (Active, Ended, _)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionState {
    pub room_id: RoomId,
    pub state: RoomState,
    pub ready_confirmed: BTreeSet<SlotIndex>,
    pub started_at_ms: Option<EpochMs>,
    pub ended_at_ms: Option<EpochMs>,
}

impl SessionState {
    pub fn new(room_id: RoomId) -> Self {
        Self {
            room_id,
            state: RoomState::Created,
            ready_confirmed: BTreeSet::new(),
            started_at_ms: None,
            ended_at_ms: None,
        }
    }

    pub fn elapsed_ms(&self, now: EpochMs) -> Option<i64> {
        self.started_at_ms.map(|s| now - s)
    }
}
