//! Draws a condition for a room from a pool, then applies a paired shuffle
//! of slot labels and instruction texts.

use std::collections::BTreeMap;

use colloquy::ids::{ParticipantToken, RoomCode, RoomId, StudyId};
use colloquy::randomizer::{assign_condition, shuffle_slot_pairs, Condition};
use colloquy::registry::{Room, RoomConfig, Slot, StudyType};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use uuid::Uuid;

fn print_slots(room: &Room) {
    for s in &room.slots {
        println!(
            "  slot {}  label={:<8} text={:?}",
            s.index,
            s.text_label.as_deref().unwrap_or("-"),
            s.instructions_text.as_deref().unwrap_or("")
        );
    }
}

fn main() {
    let pool = vec![
        Condition {
            label: "disclosed".into(),
            slot_texts: BTreeMap::from([
                (1, "Your partner is an AI.".into()),
                (2, "You are chatting with a person.".into()),
            ]),
            slot_labels: BTreeMap::from([(1, "ai-told".into()), (2, "control".into())]),
        },
        Condition {
            label: "undisclosed".into(),
            slot_texts: BTreeMap::from([
                (1, "Please have a conversation.".into()),
                (2, "Please have a conversation.".into()),
            ]),
            slot_labels: BTreeMap::new(),
        },
    ];
    let mut room = Room {
        id: RoomId(Uuid::from_u128(1)),
        study_id: StudyId(Uuid::from_u128(2)),
        code: RoomCode::parse("RAND01").unwrap(),
        condition_label: None,
        slots: (1..=2)
            .map(|i| Slot::human(i, ParticipantToken::from_untrusted(&format!("token-{i}")).unwrap()))
            .collect(),
        config: RoomConfig::text(300),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let label = assign_condition(StudyType::Experimental, &pool, &mut room, &mut rng).unwrap();
    println!("condition {label}");
    print_slots(&room);
    let perm = shuffle_slot_pairs(&mut room, &mut rng);
    println!("after shuffle {perm:?}");
    print_slots(&room);
}
