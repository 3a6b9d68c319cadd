//! Command line: `serve`, `smoke` and `export`.

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use colloquy::auth::Secrets;
use colloquy::clock::SystemClock;
use colloquy::export::ExportKind;
use colloquy::ids::RoomId;
use colloquy::platform::{Platform, QueuedJobs};
use colloquy::sim::{self, Scenario, SimError, DEMO_SCENARIO};

use crate::config::ServerConfig;

#[derive(Debug, Parser)]
#[command(name = "colloquy", version, about = "Text-conversation study server")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the HTTP and WebSocket service.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run a scenario headlessly and write its CSV exports.
    Smoke {
        /// Scenario file; the bundled demo when omitted.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "smoke-out")]
        out: PathBuf,
    },
    /// Export one room from the saved state.
    Export {
        #[arg(long)]
        room: RoomId,
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    Chat,
    Survey,
}

impl From<Kind> for ExportKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Chat => ExportKind::Chat,
            Kind::Survey => ExportKind::Survey,
        }
    }
}

/// Exit code for a scenario that fails to parse.
pub const EXIT_SCENARIO: u8 = 2;
/// Exit code for a run with invariant violations.
pub const EXIT_VIOLATION: u8 = 1;

fn load_config(path: Option<&PathBuf>) -> anyhow::Result<ServerConfig> {
    match path {
        Some(p) => Ok(ServerConfig::load(p)?),
        None => Ok(ServerConfig::default()),
    }
}

pub fn smoke(scenario: Option<&PathBuf>, seed: Option<u64>, out: &PathBuf) -> ExitCode {
    let parsed = match scenario {
        Some(path) => Scenario::load(path),
        None => Scenario::parse(DEMO_SCENARIO, std::path::Path::new(".")),
    };
    let report = match parsed.and_then(|s| sim::run(&s, seed)) {
        Ok(r) => r,
        Err(e @ SimError::ScenarioParse(_)) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_SCENARIO);
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    if let Err(e) = report.write_outputs(out) {
        eprintln!("error: writing {}: {e}", out.display());
        return ExitCode::FAILURE;
    }
    print!("{}", report.summary());
    for r in &report.rejections {
        println!("rejected at {} ms, slot {}: {} ({})", r.at_ms, r.slot, r.code, r.message);
    }
    println!("wrote {} and {}", out.join("chat.csv").display(), out.join("surveys.csv").display());
    if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_VIOLATION)
    }
}

fn export(config: Option<&PathBuf>, room: RoomId, kind: Kind, out: &PathBuf) -> anyhow::Result<()> {
    let config = load_config(config)?;
    let secrets = Secrets::from_env().context("reading secrets from the environment")?;
    let platform = Platform::open(
        config.platform,
        &secrets,
        Arc::new(SystemClock),
        Arc::new(QueuedJobs::default()),
        &config.data_path,
    )?;
    let bytes = platform.export_unchecked(&[room], kind.into())?;
    std::fs::write(out, bytes).with_context(|| format!("writing {}", out.display()))?;
    Ok(())
}

pub fn main_with(cli: Cli) -> ExitCode {
    let result = match &cli.command {
        Command::Smoke { scenario, seed, out } => return smoke(scenario.as_ref(), *seed, out),
        Command::Serve { config } => load_config(config.as_ref()).and_then(|c| {
            tokio::runtime::Runtime::new()
                .context("starting runtime")?
                .block_on(crate::run(c))
        }),
        Command::Export { room, kind, out, config } => export(config.as_ref(), *room, *kind, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
