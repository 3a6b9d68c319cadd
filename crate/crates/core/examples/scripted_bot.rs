//! A bot slot answering from a script with a random 2-4 s delay. The
//! provider is called inline, so only the delay law decides timing.

use colloquy::bot::{BotConfig, ChatProvider, DelayLaw, ScriptedProvider};
use colloquy::engine::{Job, RoomRuntime};
use colloquy::ids::{ParticipantToken, RoomCode, RoomId, StudyId};
use colloquy::registry::{Room, RoomConfig, Slot};
use uuid::Uuid;

const T0: i64 = 1_700_000_000_000;
const SCRIPT: &str = "It's going well, thanks!\nWhat did you do today?\nOh nice.\n";

fn main() {
    let delay = DelayLaw::uniform(2000, 4000).unwrap();
    let human = |i| Slot::human(i, ParticipantToken::from_untrusted(&format!("token-{i}")).unwrap());
    let bot = Slot::bot(3, "Casey", BotConfig::scripted("You are a friendly participant.", delay, SCRIPT));
    let room = Room {
        id: RoomId(Uuid::from_u128(1)),
        study_id: StudyId(Uuid::from_u128(2)),
        code: RoomCode::parse("BOT123").unwrap(),
        condition_label: None,
        slots: vec![human(1), human(2), bot],
        config: RoomConfig {
            require_ready: false,
            ..RoomConfig::text(120)
        },
    };
    let mut rt = RoomRuntime::new(room, 42);
    let provider = ScriptedProvider::parse(SCRIPT);
    rt.join(1, T0).unwrap();
    rt.join(2, T0).unwrap();

    let mut now = T0;
    for (i, text) in ["Hi everyone", "Pretty good here", "Went for a walk"].iter().enumerate() {
        now += 10_000;
        rt.post_message(1 + (i % 2) as u8, text, now).unwrap();
        for job in rt.drain_jobs() {
            if let Job::BotReply { slot, generation, request, .. } = job {
                println!("bot context has {} messages", request.messages.len());
                let reply = futures::executor::block_on(provider.complete(&request)).map_err(Into::into);
                rt.bot_reply_ready(slot, generation, reply, now);
            }
        }
        rt.advance_clock(now + 5000);
    }
    for m in rt.transcript() {
        println!("{:>6} ms  {:<8} {}", m.timestamp_ms - T0, m.display_name, m.text);
    }
    for d in rt.bot_log() {
        println!("reply to #{} after {} ms", d.trigger_seq, d.delivered_ms - d.trigger_ms);
    }
}
