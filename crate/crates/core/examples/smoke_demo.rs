//! Runs the bundled demo scenario on a virtual clock and writes its CSVs.
//!
//!     cargo run -p colloquy --example smoke_demo -- [out_dir] [seed]

use std::path::PathBuf;

use colloquy::sim::{self, Scenario};

fn main() {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "smoke-out".into()));
    let seed = args.next().map(|s| s.parse().expect("seed must be an integer"));

    let scenario = Scenario::parse(sim::DEMO_SCENARIO, std::path::Path::new(".")).unwrap();
    let report = sim::run(&scenario, seed).unwrap();
    print!("{}", report.summary());
    report.write_outputs(&out).unwrap();
    println!("wrote {}", out.display());
    if !report.passed() {
        std::process::exit(1);
    }
}
