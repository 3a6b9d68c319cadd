//! Exports a session whose messages contain commas, quotes, newlines and
//! emoji, then reads the Chat CSV back with a stock CSV parser.

use colloquy::sim::{self, Scenario};

const SCENARIO: &str = r#"
events = '''
at_ms,slot,action,value
0,1,join,
0,2,join,
1000,1,chat,"Well, that's ""one"" way to put it"
2000,2,chat,"two
lines 🍎"
3000,0,inject,Please wrap up.
'''
[room]
duration_s = 5
require_ready = false
[[slot]]
index = 1
kind = "human"
[[slot]]
index = 2
kind = "human"
"#;

fn main() {
    let scenario = Scenario::parse(SCENARIO, std::path::Path::new(".")).unwrap();
    let report = sim::run(&scenario, None).unwrap();
    println!("{}", String::from_utf8_lossy(&report.chat_csv));

    let mut reader = csv::Reader::from_reader(report.chat_csv.as_slice());
    let text = reader.headers().unwrap().iter().position(|h| h == "text").unwrap();
    for (record, message) in reader.records().zip(&report.transcript) {
        let record = record.unwrap();
        assert_eq!(&record[text], message.text);
        println!("#{} round-trips: {:?}", message.seq, &record[text]);
    }
}
