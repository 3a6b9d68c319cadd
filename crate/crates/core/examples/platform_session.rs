//! The transport-free platform: a researcher sets up a study, two
//! participants exchange JSON frames over in-memory channels, and a monitor
//! injects a message. This is what the HTTP/WebSocket server wraps.

use std::sync::Arc;

use colloquy::auth::Secrets;
use colloquy::clock::VirtualClock;
use colloquy::export::ExportKind;
use colloquy::gateway::FrameReceiver;
use colloquy::platform::{Platform, PlatformConfig, QueuedJobs};
use colloquy::registry::StudyType;
use serde_json::json;

fn drain(name: &str, rx: &mut FrameReceiver) {
    while let Ok(line) = rx.try_recv() {
        let frame: serde_json::Value = serde_json::from_str(&line).unwrap();
        println!("{name:<8} <- {} {}", frame["type"].as_str().unwrap(), frame["payload"]);
    }
}

fn main() {
    let clock = Arc::new(VirtualClock::new(1_700_000_000_000));
    let mut config = PlatformConfig::default();
    config.auth.bcrypt_cost = 4;
    config.seed = Some(1);
    let secrets = Secrets::parse(&"22".repeat(32), "example-hmac-secret").unwrap();
    let p = Platform::new(config, &secrets, clock.clone(), Arc::new(QueuedJobs::default()));

    let me = p.register("pi@example.org", "a long passphrase").unwrap();
    let study = p.create_study(me, "pilot", StudyType::Experimental).unwrap();
    let room = p
        .create_rooms_csv(me, study.id, b"condition_label,slot_count,duration_s\n,2,120\n")
        .unwrap()
        .remove(0);
    println!("room {} code {}", room.id, room.code.as_str());
    let token = |i: usize| room.slots[i].participant_token.as_ref().unwrap().to_string();

    let (_mon, mut mon_rx) = p.connect_monitor(me, room.id).unwrap();
    let (mut a, mut a_rx) = p.connect_participant(&token(0)).unwrap();
    let (mut b, mut b_rx) = p.connect_participant(&token(1)).unwrap();
    drain("slot 1", &mut a_rx);

    for ch in [&mut a, &mut b] {
        p.participant_frame(ch, &json!({"type": "ready", "payload": {}}).to_string());
    }
    clock.advance(1500);
    p.participant_frame(&mut a, &json!({"type": "chat", "payload": {"text": "Hi, how are you doing tonight?"}}).to_string());
    clock.advance(800);
    p.inject(me, room.id, "Two minutes left.").unwrap();
    p.participant_frame(&mut b, r#"{"type":"chat","payload":{"text":""}}"#);

    drain("slot 2", &mut b_rx);
    drain("monitor", &mut mon_rx);
    println!("{}", String::from_utf8(p.export_room(me, room.id, ExportKind::Chat).unwrap()).unwrap());
}
