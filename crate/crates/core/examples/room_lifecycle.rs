//! Walks a two-person room through the ready gate and the session timer.

use colloquy::engine::{RoomEvent, RoomRuntime};
use colloquy::ids::{ParticipantToken, RoomCode, RoomId, StudyId};
use colloquy::registry::{Room, RoomConfig, Slot};
use uuid::Uuid;

const T0: i64 = 1_700_000_000_000;

fn main() {
    let slots = (1..=2)
        .map(|i| Slot::human(i, ParticipantToken::from_untrusted(&format!("token-{i}")).unwrap()))
        .collect();
    let room = Room {
        id: RoomId(Uuid::from_u128(1)),
        study_id: StudyId(Uuid::from_u128(2)),
        code: RoomCode::parse("LS9UX3").unwrap(),
        condition_label: None,
        slots,
        config: RoomConfig::text(30),
    };
    let mut rt = RoomRuntime::new(room, 1);

    let show = |rt: &mut RoomRuntime, what: &str| {
        let states: Vec<_> = rt
            .drain_outbox()
            .into_iter()
            .filter_map(|o| match o.event {
                RoomEvent::State(s) => Some(s.state.as_str()),
                _ => None,
            })
            .collect();
        println!("{what:<24} -> {:<11} {:?}", rt.state().as_str(), states);
    };

    rt.join(1, T0).unwrap();
    show(&mut rt, "slot 1 joins");
    rt.join(2, T0 + 500).unwrap();
    show(&mut rt, "slot 2 joins");
    println!("chat before ready: {:?}", rt.post_message(1, "hi", T0 + 600).unwrap_err());
    rt.confirm_ready(2, T0 + 1000).unwrap();
    show(&mut rt, "slot 2 ready");
    rt.confirm_ready(1, T0 + 2000).unwrap();
    show(&mut rt, "slot 1 ready");
    rt.post_message(1, "Hi, how are you doing tonight?", T0 + 3000).unwrap();
    println!("timer: {:?}", rt.timer());
    rt.advance_clock(T0 + 40_000);
    show(&mut rt, "clock +40 s");
    let s = rt.session();
    println!(
        "ran {} ms, {} message(s)",
        s.ended_at_ms.unwrap() - s.started_at_ms.unwrap(),
        rt.transcript().len()
    );
}
