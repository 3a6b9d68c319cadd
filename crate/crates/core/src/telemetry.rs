//! Composition telemetry: raw input events per slot, reduced to one
//! [`MessageMetrics`] record when the slot sends a message.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::clock::EpochMs;
use crate::ids::{RoomId, SlotIndex};
use crate::message::Message;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    Keystroke,
    /// Backspace, delete, or cut.
    Deletion,
    Paste,
    Click,
    ComposerFocus,
}

/// Client-reported input event as received on the wire.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputEvent {
    pub room_id: RoomId,
    pub slot_index: SlotIndex,
    pub kind: InputKind,
    /// Milliseconds since the client opened its channel.
    pub client_offset_ms: i64,
}

/// An input event placed on the server clock.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimedInput {
    pub kind: InputKind,
    pub at_ms: EpochMs,
}

/// Maps client channel offsets onto server time. Anchored once per channel
/// from the handshake; offsets that would land in the future are clamped to
/// the receipt time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClockAnchor {
    origin_ms: EpochMs,
}

impl ClockAnchor {
    pub fn at_open(opened_at_ms: EpochMs) -> Self {
        Self { origin_ms: opened_at_ms }
    }

    /// Re-anchors from a handshake in which the client reported its own
    /// channel offset at the moment the server received it.
    pub fn from_handshake(received_at_ms: EpochMs, client_offset_ms: i64) -> Self {
        Self {
            origin_ms: received_at_ms - client_offset_ms.max(0),
        }
    }

    pub fn to_server(&self, client_offset_ms: i64, received_at_ms: EpochMs) -> EpochMs {
        (self.origin_ms + client_offset_ms.max(0)).min(received_at_ms)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageMetrics {
    pub message_seq: u64,
    pub slot_index: SlotIndex,
    pub first_keystroke_latency_ms: Option<i64>,
    pub reply_send_latency_ms: Option<i64>,
    pub typing_duration_ms: i64,
    pub keystroke_count: u32,
    pub edit_count: u32,
    pub paste_count: u32,
    pub click_count: u32,
}

/// Picks the counterpart delivery that latencies are measured from: the last
/// one before the first keystroke, or before the send if nothing was typed.
pub fn reference_delivery(counterpart_deliveries: &[EpochMs], buffer: &[TimedInput], sent_at_ms: EpochMs) -> Option<EpochMs> {
    let cutoff = first_keystroke(buffer).unwrap_or(sent_at_ms);
    counterpart_deliveries.iter().copied().filter(|&t| t <= cutoff).max()
}

fn first_keystroke(buffer: &[TimedInput]) -> Option<EpochMs> {
    buffer
        .iter()
        .filter(|e| e.kind == InputKind::Keystroke)
        .map(|e| e.at_ms)
        .min()
}

/// Reduces one composition buffer to metrics for the message it produced.
pub fn finalize_metrics(message: &Message, buffer: &[TimedInput], last_counterpart_delivery_ms: Option<EpochMs>) -> MessageMetrics {
    let first_key = first_keystroke(buffer);
    let last_event = buffer.iter().map(|e| e.at_ms).max();
    let count = |kind| buffer.iter().filter(|e| e.kind == kind).count() as u32;
    let typing_duration_ms = match (first_key, last_event) {
        (Some(first), Some(last)) => (last - first).max(0),
        _ => 0,
    };
    MessageMetrics {
        message_seq: message.seq,
        slot_index: message.slot_index,
        first_keystroke_latency_ms: last_counterpart_delivery_ms
            .zip(first_key)
            .map(|(delivered, key)| key - delivered),
        reply_send_latency_ms: last_counterpart_delivery_ms.map(|d| message.timestamp_ms - d),
        typing_duration_ms,
        keystroke_count: count(InputKind::Keystroke),
        edit_count: count(InputKind::Deletion),
        paste_count: count(InputKind::Paste),
        click_count: count(InputKind::Click),
    }
}

/// Per-room telemetry state: open composition buffers and finalized metrics.
#[derive(Debug, Clone, Default)]
pub struct TelemetryBook {
    buffers: BTreeMap<SlotIndex, Vec<TimedInput>>,
    metrics: BTreeMap<u64, MessageMetrics>,
}

impl TelemetryBook {
    pub fn ingest(&mut self, slot: SlotIndex, input: TimedInput) {
        self.buffers.entry(slot).or_default().push(input);
    }

    pub fn buffer(&self, slot: SlotIndex) -> &[TimedInput] {
        self.buffers.get(&slot).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Finalizes and resets the slot's buffer for `message`.
    pub fn finalize(&mut self, message: &Message, counterpart_deliveries: &[EpochMs]) -> MessageMetrics {
        let buffer = self.buffers.remove(&message.slot_index).unwrap_or_default();
        let reference = reference_delivery(counterpart_deliveries, &buffer, message.timestamp_ms);
        let metrics = finalize_metrics(message, &buffer, reference);
        self.metrics.insert(message.seq, metrics.clone());
        metrics
    }

    pub fn metrics(&self, seq: u64) -> Option<&MessageMetrics> {
        self.metrics.get(&seq)
    }

    pub fn all_metrics(&self) -> impl Iterator<Item = &MessageMetrics> {
        self.metrics.values()
    }

    pub fn restore(&mut self, metrics: Vec<MessageMetrics>) {
        self.metrics = metrics.into_iter().map(|m| (m.message_seq, m)).collect();
    }
}
