//! `majorana`: run spectra, gate dynamics and logical compilation from TOML configs.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Config, Kind};
use error::{CliError, Result};
use output::Out;

#[derive(Parser)]
#[command(name = "majorana", version, about = "Majorana chain spectra, gates and logical compilation")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Seed for randomized checks, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses all cores.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// BdG spectrum and local density of states.
    Ldos,
    /// State-resolved absorption spectrum.
    Spectrum,
    /// Uniform gap equation, plus the self-consistent profile when [chain] is given.
    Gap,
    /// Evolve under an explicit pulse schedule.
    Dynamics,
    /// Schedule and run a SET, X, Y or Z gate.
    Gate,
    /// Compile logical gates to pulse sequences and verify them.
    Compile,
    /// Check every compiled gate and the block identities.
    Verify,
    /// Compare dynamics with the Fock-space oracle on random schedules.
    OracleCheck,
    /// Fan one subcommand out over several configs, or scan one chain parameter.
    Sweep,
}

fn load(cli: &Cli, required: bool) -> Result<Config> {
    match &cli.config {
        Some(p) => Config::load(p),
        None if required => Err(CliError::Config("--config is required for this command".into())),
        None => Ok(Config { schema_version: config::SCHEMA_VERSION, ..Default::default() }),
    }
}

fn run(cli: &Cli) -> Result<String> {
    let needs_config = !matches!(cli.cmd, Cmd::Compile | Cmd::Verify | Cmd::OracleCheck);
    let cfg = load(cli, needs_config)?;
    let out = Out::new(&cli.out)?;
    let go = || {
        let kind = match cli.cmd {
            Cmd::Ldos => Kind::Ldos,
            Cmd::Spectrum => Kind::Spectrum,
            Cmd::Gap => Kind::Gap,
            Cmd::Dynamics => Kind::Dynamics,
            Cmd::Gate => Kind::Gate,
            Cmd::Compile => Kind::Compile,
            Cmd::Verify => Kind::Verify,
            Cmd::OracleCheck => Kind::OracleCheck,
            Cmd::Sweep => return commands::sweep(&cfg, &out, cli.seed),
        };
        commands::run(kind, &cfg, &out, cli.seed)
    };
    if cli.threads > 0 {
        majorana_lab::par::with_threads(cli.threads, go)
    } else {
        go()
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
