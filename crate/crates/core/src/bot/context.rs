use crate::ids::SlotIndex;
use crate::message::Message;

use super::provider::{ChatMessage, ChatRequest, Purpose, Role};
use super::{BotError, SUGGESTION_CONTEXT_WINDOW, SUGGESTION_COUNT};

pub(crate) const RESEARCHER_PREFIX: &str = "Researcher";

pub const SUGGESTION_INSTRUCTION: &str = "Write exactly three alternative replies that the participant could send next. \
Put each reply on its own line, numbered 1., 2., 3. Do not add any other text.";

/// Assembles the provider request for a bot slot's next turn: the persona
/// prompt followed by the whole transcript. The bot's own messages become
/// assistant turns; everything else is a user turn prefixed with the
/// speaker's name.
pub fn build_bot_context(
    transcript: &[Message],
    bot_slot: SlotIndex,
    model: &str,
    system_prompt: &str,
) -> ChatRequest {
    let mut messages = Vec::with_capacity(transcript.len() + 1);
    messages.push(ChatMessage::new(Role::System, system_prompt));
    messages.extend(transcript.iter().map(|m| role_tagged(m, bot_slot)));
    ChatRequest {
        model: model.to_owned(),
        purpose: Purpose::Reply,
        messages,
        temperature: 0.7,
    }
}

fn role_tagged(message: &Message, speaker_slot: SlotIndex) -> ChatMessage {
    if message.injected {
        ChatMessage::new(Role::User, format!("{RESEARCHER_PREFIX}: {}", message.text))
    } else if message.slot_index == speaker_slot {
        ChatMessage::new(Role::Assistant, message.text.clone())
    } else {
        ChatMessage::new(
            Role::User,
            format!("{}: {}", message.display_name, message.text),
        )
    }
}

/// The most recent conversational messages (both sides, injections
/// excluded), capped at the suggestion context window.
pub fn suggestion_window(transcript: &[Message]) -> Vec<&Message> {
    let conversational: Vec<&Message> =
        transcript.iter().filter(|m| m.is_conversational()).collect();
    let skip = conversational.len().saturating_sub(SUGGESTION_CONTEXT_WINDOW);
    conversational.into_iter().skip(skip).collect()
}

pub fn build_suggestion_request(
    transcript: &[Message],
    target_slot: SlotIndex,
    target_name: &str,
    model: &str,
) -> Result<ChatRequest, BotError> {
    let window = suggestion_window(transcript);
    if window.is_empty() {
        return Err(BotError::EmptyContext);
    }
    let mut messages = Vec::with_capacity(window.len() + 2);
    messages.push(ChatMessage::new(
        Role::System,
        format!(
            "You suggest chat replies for {target_name}. Earlier messages written by \
             {target_name} appear as assistant turns."
        ),
    ));
    messages.extend(window.into_iter().map(|m| role_tagged(m, target_slot)));
    messages.push(ChatMessage::new(Role::User, SUGGESTION_INSTRUCTION));
    Ok(ChatRequest {
        model: model.to_owned(),
        purpose: Purpose::Suggestions,
        messages,
        temperature: 0.9,
    })
}

/// Extracts reply candidates from provider output. Accepts a JSON array of
/// strings or one candidate per line with optional `1.` / `1)` / `-` markers.
pub fn parse_candidates(raw: &str) -> Result<[String; SUGGESTION_COUNT], BotError> {
    let candidates: Vec<String> = match serde_json::from_str::<Vec<String>>(raw.trim()) {
        Ok(list) => list
            .into_iter()
            .map(|s| s.trim().to_owned())
            .filter(|s| !s.is_empty())
            .collect(),
        Err(_) => raw.lines().filter_map(clean_candidate_line).collect(),
    };
    let got = candidates.len();
    candidates
        .try_into()
        .map_err(|_| BotError::MalformedProviderOutput { got })
}

fn clean_candidate_line(line: &str) -> Option<String> {
    let mut s = line.trim();
    if let Some(rest) = s.strip_prefix(['-', '*', '•']) {
        s = rest.trim_start();
    } else {
        let digits = s.bytes().take_while(u8::is_ascii_digit).count();
        if digits > 0 {
            if let Some(rest) = s[digits..].strip_prefix(['.', ')', ':']) {
                s = rest.trim_start();
            }
        }
    }
    if s.len() >= 2 && s.starts_with('"') && s.ends_with('"') {
        s = &s[1..s.len() - 1];
    }
    let s = s.trim();
    (!s.is_empty()).then(|| s.to_owned())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::RoomId;
    use uuid::Uuid;

    fn msg(seq: u64, slot: SlotIndex, text: &str) -> Message {
        Message {
            seq,
            room_id: RoomId(Uuid::nil()),
            slot_index: slot,
            display_name: format!("Participant {}", (b'A' + slot - 1) as char),
            is_bot: slot == 2,
            injected: false,
            text: text.into(),
            timestamp_ms: seq as i64,
        }
    }

    fn injected(seq: u64, text: &str) -> Message {
        Message {
            slot_index: 0,
            display_name: "Researcher".into(),
            injected: true,
            is_bot: false,
            ..msg(seq, 1, text)
        }
    }

    #[test]
    fn empty_transcript_yields_only_system_prompt() {
        let req = build_bot_context(&[], 2, "m", "You are friendly.");
        assert_eq!(req.messages, vec![ChatMessage::new(Role::System, "You are friendly.")]);
        assert_eq!(req.purpose, Purpose::Reply);
    }

    #[test]
    fn transcript_roles_follow_replay_oracle() {
        let transcript = vec![
            msg(1, 1, "Hi, how is your evening so far?"),
            msg(2, 2, "It's going well, thanks!"),
            msg(3, 1, "Glad to hear."),
        ];
        let req = build_bot_context(&transcript, 2, "m", "sys");
        assert_eq!(req.messages.len(), 1 + transcript.len());
        // replay: independent role assignment from slot ownership
        for (m, entry) in transcript.iter().zip(&req.messages[1..]) {
            if m.slot_index == 2 {
                assert_eq!(entry.role, Role::Assistant);
                assert_eq!(entry.content, m.text);
            } else {
                assert_eq!(entry.role, Role::User);
                assert_eq!(entry.content, format!("{}: {}", m.display_name, m.text));
            }
        }
    }

    #[test]
    fn injections_enter_bot_context_with_researcher_prefix() {
        let transcript = vec![msg(1, 1, "hello"), injected(2, "Please stay on topic")];
        let req = build_bot_context(&transcript, 2, "m", "sys");
        assert_eq!(
            req.messages[2],
            ChatMessage::new(Role::User, "Researcher: Please stay on topic")
        );
    }

    #[test]
    fn window_slices_last_twenty() {
        let transcript: Vec<Message> = (1..=25).map(|i| msg(i, 1 + (i % 2) as u8, "x")).collect();
        let seqs: Vec<u64> = suggestion_window(&transcript).iter().map(|m| m.seq).collect();
        assert_eq!(seqs, (6..=25).collect::<Vec<_>>());
    }

    #[test]
    fn window_excludes_injections_and_keeps_short_histories() {
        let transcript = vec![msg(1, 1, "a"), injected(2, "b"), msg(3, 2, "c")];
        let seqs: Vec<u64> = suggestion_window(&transcript).iter().map(|m| m.seq).collect();
        assert_eq!(seqs, vec![1, 3]);
    }

    #[test]
    fn empty_history_is_empty_context() {
        assert_eq!(
            build_suggestion_request(&[injected(1, "x")], 2, "B", "m"),
            Err(BotError::EmptyContext)
        );
    }

    #[test]
    fn suggestion_request_shape() {
        let transcript = vec![msg(1, 1, "Hi, how are you doing tonight?")];
        let req = build_suggestion_request(&transcript, 2, "Participant B", "m").unwrap();
        assert_eq!(req.purpose, Purpose::Suggestions);
        assert_eq!(req.messages.len(), 3);
        assert_eq!(req.messages[1].content, "Participant A: Hi, how are you doing tonight?");
        assert_eq!(req.messages[2].content, SUGGESTION_INSTRUCTION);
    }

    #[test]
    fn candidates_parse_from_numbered_lines_and_json() {
        let numbered = "1. Hi there\n2) \"Hey\"\n\n3: Hello!\n";
        assert_eq!(parse_candidates(numbered).unwrap(), ["Hi there", "Hey", "Hello!"]);
        let json = r#"["a", "b", "c"]"#;
        assert_eq!(parse_candidates(json).unwrap(), ["a", "b", "c"]);
        assert_eq!(
            parse_candidates("only one"),
            Err(BotError::MalformedProviderOutput { got: 1 })
        );
        assert_eq!(
            parse_candidates("a\nb\nc\nd"),
            Err(BotError::MalformedProviderOutput { got: 4 })
        );
    }

    #[test]
    fn numbers_inside_text_survive() {
        assert_eq!(
            parse_candidates("1. 24/7 works\n2. 3 things\n3. ok").unwrap(),
            ["24/7 works", "3 things", "ok"]
        );
    }
}
