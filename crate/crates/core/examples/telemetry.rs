//! Composition telemetry reduced to per-message metrics.

use colloquy::engine::RoomRuntime;
use colloquy::ids::{ParticipantToken, RoomCode, RoomId, StudyId};
use colloquy::registry::{Room, RoomConfig, Slot};
use colloquy::telemetry::InputKind;
use uuid::Uuid;

const T0: i64 = 1_700_000_000_000;

fn main() {
    let room = Room {
        id: RoomId(Uuid::from_u128(1)),
        study_id: StudyId(Uuid::from_u128(2)),
        code: RoomCode::parse("TYPE42").unwrap(),
        condition_label: None,
        slots: (1..=2)
            .map(|i| Slot::human(i, ParticipantToken::from_untrusted(&format!("token-{i}")).unwrap()))
            .collect(),
        config: RoomConfig {
            require_ready: false,
            ..RoomConfig::text(120)
        },
    };
    let mut rt = RoomRuntime::new(room, 1);
    rt.join(1, T0).unwrap();
    rt.join(2, T0).unwrap();

    rt.post_message(1, "Hi, how are you doing tonight?", T0 + 1000).unwrap();
    // Slot 2 reads, then types with one correction and a click.
    for (kind, at) in [
        (InputKind::ComposerFocus, 2500),
        (InputKind::Keystroke, 3000),
        (InputKind::Keystroke, 3150),
        (InputKind::Deletion, 3300),
        (InputKind::Keystroke, 3400),
        (InputKind::Click, 4200),
    ] {
        rt.ingest_input(2, kind, T0 + at, T0 + at);
    }
    let reply = rt.post_message(2, "Pretty good!", T0 + 4500).unwrap();
    let m = rt.metrics(reply.seq).unwrap();
    println!("first keystroke latency {:?} ms", m.first_keystroke_latency_ms);
    println!("reply send latency      {:?} ms", m.reply_send_latency_ms);
    println!("typing duration         {} ms", m.typing_duration_ms);
    println!(
        "keystrokes {}  edits {}  pastes {}  clicks {}",
        m.keystroke_count, m.edit_count, m.paste_count, m.click_count
    );
}
