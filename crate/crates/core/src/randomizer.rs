//! Condition assignment and paired slot shuffling.
//!
//! Both operations are pure functions over a [`Room`] driven by a caller
//! supplied generator, so a fixed seed reproduces the same sequence of
//! assignments and permutations.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::SlotIndex;
use crate::registry::{Room, StudyType};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RandomizerError {
    #[error("condition pool is empty")]
    EmptyPool,
    #[error("observational studies do not assign conditions")]
    ObservationalStudy,
    #[error("room is active or ended")]
    RoomLocked,
    #[error("condition labels must be unique and non-empty")]
    BadPool,
    #[error("permutation must be a rearrangement of 1..={0}")]
    BadPermutation(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Condition {
    pub label: String,
    /// Instruction text per slot.
    pub slot_texts: BTreeMap<SlotIndex, String>,
    /// Optional per-slot manipulation labels; slots without one take the
    /// condition label.
    #[serde(default)]
    pub slot_labels: BTreeMap<SlotIndex, String>,
}

pub fn validate_pool(pool: &[Condition]) -> Result<(), RandomizerError> {
    let mut seen = std::collections::BTreeSet::new();
    for c in pool {
        if c.label.trim().is_empty() || !seen.insert(c.label.as_str()) {
            return Err(RandomizerError::BadPool);
        }
    }
    Ok(())
}

/// Draws one condition uniformly from the pool and applies it to the room:
/// the room's condition label is set and each listed slot's instructions
/// are overwritten.
pub fn assign_condition<R: Rng + ?Sized>(
    study_type: StudyType,
    pool: &[Condition],
    room: &mut Room,
    rng: &mut R,
) -> Result<String, RandomizerError> {
    if study_type == StudyType::Observational {
        return Err(RandomizerError::ObservationalStudy);
    }
    let condition = pool.choose(rng).ok_or(RandomizerError::EmptyPool)?;
    apply_condition(condition, room);
    Ok(condition.label.clone())
}

pub fn apply_condition(condition: &Condition, room: &mut Room) {
    room.condition_label = Some(condition.label.clone());
    for (index, text) in &condition.slot_texts {
        if let Some(slot) = room.slot_mut(*index) {
            slot.instructions_text = Some(text.clone());
            slot.text_label = Some(
                condition
                    .slot_labels
                    .get(index)
                    .cloned()
                    .unwrap_or_else(|| condition.label.clone()),
            );
        }
    }
}

/// Draws one uniformly random permutation of the room's slots and moves each
/// slot's (label, instructions) pair to its image. Returns the permutation
/// as `perm[i-1] = π(i)`.
pub fn shuffle_slot_pairs<R: Rng + ?Sized>(room: &mut Room, rng: &mut R) -> Vec<SlotIndex> {
    let mut perm: Vec<SlotIndex> = (1..=room.slots.len() as SlotIndex).collect();
    perm.shuffle(rng);
    apply_slot_permutation(room, &perm).expect("generated permutation is valid");
    perm
}

/// Moves the pair held by slot `i` to slot `perm[i-1]`.
pub fn apply_slot_permutation(room: &mut Room, perm: &[SlotIndex]) -> Result<(), RandomizerError> {
    let n = room.slots.len();
    let mut sorted = perm.to_vec();
    sorted.sort_unstable();
    if sorted != (1..=n as SlotIndex).collect::<Vec<_>>() {
        return Err(RandomizerError::BadPermutation(n));
    }
    let pairs: Vec<(Option<String>, Option<String>)> = room
        .slots
        .iter()
        .map(|s| (s.text_label.clone(), s.instructions_text.clone()))
        .collect();
    for (from, (label, text)) in pairs.into_iter().enumerate() {
        let to = usize::from(perm[from]) - 1;
        room.slots[to].text_label = label;
        room.slots[to].instructions_text = text;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::{ParticipantToken, RoomCode, RoomId, StudyId};
    use crate::registry::{RoomConfig, Slot};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use uuid::Uuid;

    fn room(n: usize) -> Room {
        Room {
            id: RoomId(Uuid::nil()),
            study_id: StudyId(Uuid::nil()),
            code: RoomCode::parse("LS9UX3").unwrap(),
            condition_label: None,
            slots: (1..=n as SlotIndex)
                .map(|i| {
                    let mut s = Slot::human(i, ParticipantToken::from_untrusted(&format!("tok{i}")).unwrap());
                    s.text_label = Some(format!("label{i}"));
                    s.instructions_text = Some(format!("text{i}"));
                    s
                })
                .collect(),
            config: RoomConfig::text(60),
        }
    }

    fn condition(label: &str) -> Condition {
        Condition {
            label: label.into(),
            slot_texts: [(1, format!("{label} for A")), (2, format!("{label} for B"))].into(),
            slot_labels: BTreeMap::new(),
        }
    }

    fn pairs(room: &Room) -> Vec<(Option<String>, Option<String>)> {
        let mut v: Vec<_> = room
            .slots
            .iter()
            .map(|s| (s.text_label.clone(), s.instructions_text.clone()))
            .collect();
        v.sort();
        v
    }

    #[test]
    fn assignment_overwrites_instructions() {
        let mut r = room(2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let label = assign_condition(StudyType::Experimental, &[condition("A")], &mut r, &mut rng).unwrap();
        assert_eq!(label, "A");
        assert_eq!(r.condition_label.as_deref(), Some("A"));
        assert_eq!(r.slots[1].instructions_text.as_deref(), Some("A for B"));
        assert_eq!(r.slots[1].text_label.as_deref(), Some("A"));
    }

    #[test]
    fn assignment_errors() {
        let mut r = room(2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(
            assign_condition(StudyType::Experimental, &[], &mut r, &mut rng),
            Err(RandomizerError::EmptyPool)
        );
        assert_eq!(
            assign_condition(StudyType::Observational, &[condition("A")], &mut r, &mut rng),
            Err(RandomizerError::ObservationalStudy)
        );
    }

    #[test]
    fn two_condition_frequencies_within_three_sigma() {
        // binomial(1000, 0.5): sd ≈ 15.8, 3σ ≈ 47 → [400, 600] is comfortably wide
        let pool = [condition("A"), condition("B")];
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut a = 0;
        for _ in 0..1000 {
            let mut r = room(2);
            if assign_condition(StudyType::Experimental, &pool, &mut r, &mut rng).unwrap() == "A" {
                a += 1;
            }
        }
        assert!((400..=600).contains(&a), "A drawn {a} times");
    }

    #[test]
    fn swap_moves_pairs_intact() {
        let mut r = room(2);
        apply_slot_permutation(&mut r, &[2, 1]).unwrap();
        assert_eq!(r.slots[0].text_label.as_deref(), Some("label2"));
        assert_eq!(r.slots[0].instructions_text.as_deref(), Some("text2"));
        assert_eq!(r.slots[1].text_label.as_deref(), Some("label1"));
        assert_eq!(r.slots[1].instructions_text.as_deref(), Some("text1"));
        // tokens and names stay with their slot positions
        assert_eq!(r.slots[0].participant_token.as_ref().unwrap().as_str(), "tok1");
    }

    #[test]
    fn identity_leaves_room_unchanged() {
        let mut r = room(3);
        let before = r.clone();
        apply_slot_permutation(&mut r, &[1, 2, 3]).unwrap();
        assert_eq!(r, before);
    }

    #[test]
    fn invalid_permutations_rejected() {
        let mut r = room(3);
        assert!(apply_slot_permutation(&mut r, &[1, 1, 2]).is_err());
        assert!(apply_slot_permutation(&mut r, &[1, 2]).is_err());
        assert!(apply_slot_permutation(&mut r, &[0, 1, 2]).is_err());
    }

    #[test]
    fn all_six_permutations_preserve_pair_multiset() {
        let perms: [[SlotIndex; 3]; 6] = [[1, 2, 3], [1, 3, 2], [2, 1, 3], [2, 3, 1], [3, 1, 2], [3, 2, 1]];
        for perm in perms {
            let mut r = room(3);
            let before = pairs(&r);
            apply_slot_permutation(&mut r, &perm).unwrap();
            assert_eq!(pairs(&r), before, "{perm:?}");
            for (i, &to) in perm.iter().enumerate() {
                let slot = &r.slots[usize::from(to) - 1];
                assert_eq!(slot.text_label.as_deref(), Some(format!("label{}", i + 1).as_str()));
                assert_eq!(slot.instructions_text.as_deref(), Some(format!("text{}", i + 1).as_str()));
            }
        }
    }

    #[test]
    fn same_seed_same_sequence() {
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..20).map(|_| shuffle_slot_pairs(&mut room(4), &mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(run(9), run(9));
        assert_ne!(run(9), run(10));
    }

    #[test]
    fn pool_validation() {
        assert!(validate_pool(&[condition("A"), condition("B")]).is_ok());
        assert_eq!(validate_pool(&[condition("A"), condition("A")]), Err(RandomizerError::BadPool));
        assert_eq!(validate_pool(&[condition(" ")]), Err(RandomizerError::BadPool));
    }
}
