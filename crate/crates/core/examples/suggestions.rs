//! AI reply suggestions offered privately to one participant, using a
//! scripted candidate block.

use colloquy::sim::{self, Scenario};

const SCENARIO: &str = r#"
events = '''
at_ms,slot,action,value
0,1,join,
0,2,join,
1000,2,chat,"Hi, how are you doing tonight?"
3000,1,suggest,
'''
[room]
duration_s = 10
require_ready = false

[[slot]]
index = 1
kind = "human"
display_name = "Avery"
[slot.suggestions]
trigger = "manual"
script = """
[suggestions]
Hi! I'm doing alright, thank you for asking. How about you?
Hey! I'm managing, thank you for checking in. Hope you're doing well.
Hello! I'm getting by, thanks. How's everything on your end?
"""

[[slot]]
index = 2
kind = "human"
display_name = "Blake"
"#;

fn main() {
    let scenario = Scenario::parse(SCENARIO, std::path::Path::new(".")).unwrap();
    let report = sim::run(&scenario, None).unwrap();
    for slot in [1, 2] {
        let frames: Vec<_> = report.frames_of(slot, "suggestions").collect();
        println!("slot {slot}: {} suggestion frame(s)", frames.len());
        for f in frames {
            for c in f["payload"]["candidates"].as_array().unwrap() {
                println!("  - {}", c.as_str().unwrap());
            }
        }
    }
}
