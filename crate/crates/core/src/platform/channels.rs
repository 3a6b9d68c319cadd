//! Participant and monitor channels: connect with a snapshot, route inbound
//! frames into the room, disconnect.

use crate::auth::Resource;
use crate::clock::EpochMs;
use crate::engine::{Answer, EngineError, RoomRuntime};
use crate::gateway::frames::{
    error_frame, hello_frame, monitor_snapshot_frame, snapshot_frame, Envelope,
};
use crate::gateway::{frame_channel, parse_inbound, ChannelId, ChannelRole, FrameReceiver, Inbound};
use crate::ids::{AccountId, RoomId, SlotIndex};
use crate::telemetry::ClockAnchor;

use super::{engine_code, Platform, PlatformError, Result};

/// Server side of one participant connection.
#[derive(Debug, Clone)]
pub struct ParticipantChannel {
    pub room: RoomId,
    pub slot: SlotIndex,
    pub channel: ChannelId,
    anchor: ClockAnchor,
}

/// Server side of one monitor connection.
#[derive(Debug, Clone)]
pub struct MonitorChannel {
    pub room: RoomId,
    pub account: AccountId,
    pub channel: ChannelId,
}

/// What the transport should do after an inbound frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelOutcome {
    Open,
    /// The channel was superseded or dropped; close the connection.
    Close,
}

impl Platform {
    /// Opens a participant channel for a join token. The new channel first
    /// receives `hello` and a `snapshot`, then every live frame produced
    /// after the snapshot was taken.
    pub fn connect_participant(&self, token: &str) -> Result<(ParticipantChannel, FrameReceiver)> {
        let target = self.resolve_token(token)?;
        let (tx, rx) = frame_channel();
        let channel = self.step(target.room_id, |rt, now| -> Result<_> {
            // Events already produced belong to the old view; deliver them
            // before the snapshot so they are not replayed after it.
            self.flush(rt, now);
            let view = rt.join(target.slot_index, now)?;
            let channel = self.hub.add_participant(target.room_id, target.slot_index, tx);
            self.hub.send_to(target.room_id, channel, &hello_frame(now));
            self.hub.send_to(target.room_id, channel, &snapshot_frame(&view, now));
            Ok(channel)
        })??;
        let now = self.now();
        Ok((
            ParticipantChannel {
                room: target.room_id,
                slot: target.slot_index,
                channel,
                anchor: ClockAnchor::at_open(now),
            },
            rx,
        ))
    }

    pub fn disconnect_participant(&self, ch: &ParticipantChannel) {
        if self.hub.remove(ch.room, ch.channel) == Some(ch.slot) {
            let _ = self.step(ch.room, |rt, now| rt.leave(ch.slot, now));
        }
    }

    fn reply_error(&self, room: RoomId, channel: ChannelId, code: &str, message: String, now: EpochMs) {
        self.hub.send_to(room, channel, &error_frame(code, message, now));
    }

    /// Routes one inbound participant frame. Identity comes from the
    /// channel; anything the payload claims about it is ignored.
    pub fn participant_frame(&self, ch: &mut ParticipantChannel, line: &str) -> ChannelOutcome {
        if !self.hub.is_current(ch.room, ch.slot, ch.channel) {
            return ChannelOutcome::Close;
        }
        let now = self.now();
        let frame = match parse_inbound(line, ChannelRole::Participant) {
            Ok(f) => f,
            Err(e) => {
                self.reply_error(ch.room, ch.channel, e.code(), e.to_string(), now);
                return ChannelOutcome::Open;
            }
        };
        if let Inbound::Hello(h) = &frame {
            ch.anchor = ClockAnchor::from_handshake(now, h.client_offset_ms);
            self.hub.send_to(ch.room, ch.channel, &hello_frame(now));
            return ChannelOutcome::Open;
        }
        let anchor = ch.anchor;
        let slot = ch.slot;
        let result = self.step(ch.room, |rt, now| apply_participant(rt, slot, anchor, frame, now));
        match result {
            Ok(Ok(())) => {}
            Ok(Err(e)) => self.reply_error(ch.room, ch.channel, engine_code(&e), e.to_string(), now),
            Err(e) => self.reply_error(ch.room, ch.channel, e.code(), e.to_string(), now),
        }
        ChannelOutcome::Open
    }

    /// Opens a monitor channel. Monitors see every room event, including
    /// suggestions and telemetry.
    pub fn connect_monitor(&self, account: AccountId, room: RoomId) -> Result<(MonitorChannel, FrameReceiver)> {
        if !crate::auth::authorize_access(self.registry(), account, Resource::Room(room)) {
            return Err(PlatformError::NotAuthorized);
        }
        let (tx, rx) = frame_channel();
        let channel = self.step(room, |rt, now| {
            self.flush(rt, now);
            let channel = self.hub.add_monitor(room, tx);
            self.hub.send_to(room, channel, &hello_frame(now));
            self.hub
                .send_to(room, channel, &monitor_snapshot_frame(&rt.monitor_view(), now));
            channel
        })?;
        Ok((MonitorChannel { room, account, channel }, rx))
    }

    pub fn disconnect_monitor(&self, ch: &MonitorChannel) {
        self.hub.remove(ch.room, ch.channel);
    }

    pub fn monitor_frame(&self, ch: &MonitorChannel, line: &str) -> ChannelOutcome {
        let now = self.now();
        let frame = match parse_inbound(line, ChannelRole::Monitor) {
            Ok(f) => f,
            Err(e) => {
                self.reply_error(ch.room, ch.channel, e.code(), e.to_string(), now);
                return ChannelOutcome::Open;
            }
        };
        let result = match frame {
            Inbound::Hello(_) => {
                self.hub.send_to(ch.room, ch.channel, &hello_frame(now));
                Ok(())
            }
            Inbound::Inject(i) => self.inject(ch.account, ch.room, &i.text).map(drop),
            Inbound::SurveyPush(p) => self.push_survey(ch.account, ch.room, p.survey_id).map(drop),
            _ => unreachable!("role gating admits only monitor frames"),
        };
        if let Err(e) = result {
            self.reply_error(ch.room, ch.channel, e.code(), e.to_string(), now);
        }
        ChannelOutcome::Open
    }

    /// Sends a frame to one channel without going through the room.
    pub fn send_direct(&self, room: RoomId, channel: ChannelId, frame: &Envelope) -> bool {
        self.hub.send_to(room, channel, frame)
    }
}

fn apply_participant(
    rt: &mut RoomRuntime,
    slot: SlotIndex,
    anchor: ClockAnchor,
    frame: Inbound,
    now: EpochMs,
) -> std::result::Result<(), EngineError> {
    match frame {
        Inbound::Ready => rt.confirm_ready(slot, now).map(drop),
        Inbound::Chat(c) => rt.post_message(slot, &c.text, now).map(drop),
        Inbound::InputEvent(e) => {
            rt.ingest_input(slot, e.kind, anchor.to_server(e.client_offset_ms, now), now);
            Ok(())
        }
        Inbound::SuggestionRequest => rt.request_suggestions(slot, now),
        Inbound::SurveyState(s) => rt.survey_state(slot, s.presentation_id, s.question_id, s.value, now),
        Inbound::SurveyResponse(r) => {
            let answers: Vec<Answer> = r.answers.into_iter().map(|a| (a.question_id, a.value)).collect();
            rt.submit_survey(slot, r.presentation_id, &answers, now).map(drop)
        }
        Inbound::Hello(_) | Inbound::Inject(_) | Inbound::SurveyPush(_) => {
            unreachable!("handled before or rejected by role gating")
        }
    }
}
