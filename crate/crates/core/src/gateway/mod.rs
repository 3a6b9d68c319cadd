//! Session wire protocol: frame codec and per-room channel fan-out.

pub mod frames;
pub mod hub;

pub use frames::{
    parse_inbound, ChannelRole, Envelope, FrameError, Inbound, FRAME_TYPES, HEARTBEAT_INTERVAL_MS, HEARTBEAT_MISSES,
    MAX_FRAME_BYTES,
};
pub use hub::{frame_channel, ChannelId, Dropped, FrameReceiver, FrameSender, Hub, CHANNEL_CAPACITY};
