use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use parking_lot::Mutex;
use tokio::sync::mpsc::{self, error::TrySendError};

use crate::clock::EpochMs;
use crate::engine::{Audience, Outbound};
use crate::ids::{RoomId, SlotIndex};

use super::frames::{event_frame, Envelope};

/// Frames buffered per channel before a slow consumer is dropped.
pub const CHANNEL_CAPACITY: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ChannelId(pub u64);

pub type FrameSender = mpsc::Sender<String>;
pub type FrameReceiver = mpsc::Receiver<String>;

pub fn frame_channel() -> (FrameSender, FrameReceiver) {
    mpsc::channel(CHANNEL_CAPACITY)
}

#[derive(Default)]
struct RoomChannels {
    participants: HashMap<SlotIndex, (ChannelId, FrameSender)>,
    monitors: Vec<(ChannelId, FrameSender)>,
}

/// Live channels per room and non-blocking fan-out to them.
#[derive(Default)]
pub struct Hub {
    rooms: Mutex<HashMap<RoomId, RoomChannels>>,
    next_id: AtomicU64,
}

/// A participant channel that was removed because its buffer filled or its
/// receiver went away. The room should treat the slot as disconnected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dropped {
    pub slot: SlotIndex,
    pub channel: ChannelId,
}

impl Hub {
    pub fn new() -> Self {
        Self::default()
    }

    fn fresh_id(&self) -> ChannelId {
        ChannelId(self.next_id.fetch_add(1, Ordering::Relaxed) + 1)
    }

    /// Registers the channel for a slot, replacing any previous one.
    pub fn add_participant(&self, room: RoomId, slot: SlotIndex, tx: FrameSender) -> ChannelId {
        let id = self.fresh_id();
        self.rooms.lock().entry(room).or_default().participants.insert(slot, (id, tx));
        id
    }

    pub fn add_monitor(&self, room: RoomId, tx: FrameSender) -> ChannelId {
        let id = self.fresh_id();
        self.rooms.lock().entry(room).or_default().monitors.push((id, tx));
        id
    }

    /// Removes a channel. Returns the slot if it was that slot's current
    /// participant channel.
    pub fn remove(&self, room: RoomId, channel: ChannelId) -> Option<SlotIndex> {
        let mut rooms = self.rooms.lock();
        let chans = rooms.get_mut(&room)?;
        chans.monitors.retain(|(id, _)| *id != channel);
        let slot = chans
            .participants
            .iter()
            .find(|(_, (id, _))| *id == channel)
            .map(|(s, _)| *s);
        if let Some(s) = slot {
            chans.participants.remove(&s);
        }
        slot
    }

    pub fn is_current(&self, room: RoomId, slot: SlotIndex, channel: ChannelId) -> bool {
        self.rooms
            .lock()
            .get(&room)
            .and_then(|c| c.participants.get(&slot))
            .is_some_and(|(id, _)| *id == channel)
    }

    pub fn participant_count(&self, room: RoomId) -> usize {
        self.rooms.lock().get(&room).map_or(0, |c| c.participants.len())
    }

    pub fn monitor_count(&self, room: RoomId) -> usize {
        self.rooms.lock().get(&room).map_or(0, |c| c.monitors.len())
    }

    /// Sends one frame to one channel. Returns false if the channel is gone
    /// or full (in which case it is removed).
    pub fn send_to(&self, room: RoomId, channel: ChannelId, frame: &Envelope) -> bool {
        let line = frame.encode();
        let mut rooms = self.rooms.lock();
        let Some(chans) = rooms.get_mut(&room) else {
            return false;
        };
        if let Some(pos) = chans.monitors.iter().position(|(id, _)| *id == channel) {
            if chans.monitors[pos].1.try_send(line).is_ok() {
                return true;
            }
            chans.monitors.remove(pos);
            return false;
        }
        let slot = chans
            .participants
            .iter()
            .find(|(_, (id, _))| *id == channel)
            .map(|(s, _)| *s);
        match slot {
            Some(s) => {
                if chans.participants[&s].1.try_send(line).is_ok() {
                    true
                } else {
                    chans.participants.remove(&s);
                    false
                }
            }
            None => false,
        }
    }

    /// Fans room events out to their audiences. Monitors receive everything.
    pub fn dispatch(&self, room: RoomId, events: &[Outbound], now: EpochMs) -> Vec<Dropped> {
        if events.is_empty() {
            return Vec::new();
        }
        let mut rooms = self.rooms.lock();
        let Some(chans) = rooms.get_mut(&room) else {
            return Vec::new();
        };
        let mut dropped = Vec::new();
        for out in events {
            let line = event_frame(&out.event, now).encode();
            chans.monitors.retain(|(_, tx)| deliver(tx, &line));
            if out.audience == Audience::Monitors {
                continue;
            }
            let mut gone = Vec::new();
            for (slot, (id, tx)) in &chans.participants {
                if out.audience.includes_slot(*slot) && !deliver(tx, &line) {
                    gone.push(Dropped {
                        slot: *slot,
                        channel: *id,
                    });
                }
            }
            for d in &gone {
                chans.participants.remove(&d.slot);
            }
            dropped.extend(gone);
        }
        dropped
    }

    /// Closes every channel of a room.
    pub fn close_room(&self, room: RoomId) {
        self.rooms.lock().remove(&room);
    }
}

fn deliver(tx: &FrameSender, line: &str) -> bool {
    match tx.try_send(line.to_owned()) {
        Ok(()) => true,
        Err(TrySendError::Full(_)) | Err(TrySendError::Closed(_)) => false,
    }
}
