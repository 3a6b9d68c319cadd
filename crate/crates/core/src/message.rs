use serde::{Deserialize, Serialize};

use crate::clock::EpochMs;
use crate::ids::{RoomId, SlotIndex, RESEARCHER_SLOT};

/// One stored utterance. `seq` starts at 1 and has no gaps within a room.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub seq: u64,
    pub room_id: RoomId,
    pub slot_index: SlotIndex,
    pub display_name: String,
    pub is_bot: bool,
    pub injected: bool,
    pub text: String,
    pub timestamp_ms: EpochMs,
}

impl Message {
    pub fn is_from(&self, slot: SlotIndex) -> bool {
        !self.injected && self.slot_index == slot
    }

    /// Participant-authored (human or bot), as opposed to a researcher injection.
    pub fn is_conversational(&self) -> bool {
        !self.injected && self.slot_index != RESEARCHER_SLOT
    }
}
