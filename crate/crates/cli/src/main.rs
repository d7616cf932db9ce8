//! `isscascade` command-line tool.
//!
//! Exit status: 0 when every check passes, 1 when a check fails or the
//! dwell-time bound diverges, 2 on configuration or runtime errors.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use commands::{Outcome, Overrides};
use config::{Builtin, ScenarioConfig, SystemSection};

#[derive(Parser)]
#[command(name = "isscascade", version, about = "Dwell-time bounds, certificates and hybrid simulation for switched cascades")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the dwell-time threshold and compare it with the configured τ_a.
    Bound(Common),
    /// Solve the Lyapunov equations and write the quadratic certificates.
    SynthLinear(Common),
    /// Simulate the configured system and export the arc as CSV.
    Simulate(Common),
    /// Run the event-triggered two-mode example.
    Example(ExampleArgs),
    /// Run every verification that applies to the configuration.
    Certify(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Args)]
struct ExampleArgs {
    /// optional scenario file; defaults to the shipped example settings
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Args)]
struct Flags {
    #[arg(long)]
    seed: Option<u64>,
    /// output directory (overrides output.dir)
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long = "tau-a")]
    tau_a: Option<f64>,
    /// simulation horizon in seconds
    #[arg(long)]
    horizon: Option<f64>,
}

impl Flags {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            epsilon: self.epsilon,
            tau_a: self.tau_a,
            horizon: self.horizon,
        }
    }
}

fn run(cli: Cli) -> Result<Outcome> {
    let (cfg, flags) = match &cli.command {
        Command::Bound(c) | Command::SynthLinear(c) | Command::Simulate(c) | Command::Certify(c) => {
            (ScenarioConfig::load(&c.config)?, &c.flags)
        }
        Command::Example(e) => {
            let cfg = match &e.config {
                Some(p) => ScenarioConfig::load(p)?,
                None => ScenarioConfig::from_toml("[system]\nkind = \"builtin\"\nname = \"section5\"\n")?,
            };
            if cfg.system != (SystemSection::Builtin { name: Builtin::Section5 }) {
                anyhow::bail!("the example command runs the section5 builtin only");
            }
            (cfg, &e.flags)
        }
    };
    let ov = flags.overrides();
    let out = flags.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
    match cli.command {
        Command::Bound(_) => commands::cmd_bound(&cfg, &ov),
        Command::SynthLinear(_) => commands::cmd_synth_linear(&cfg, &ov, &out),
        Command::Simulate(_) => commands::cmd_simulate(&cfg, &ov, &out),
        Command::Example(_) => commands::cmd_example(&cfg, &ov, &out),
        Command::Certify(_) => commands::cmd_certify(&cfg, &ov),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(outcome) => {
            match serde_json::to_string_pretty(&outcome.report) {
                Ok(text) => println!("{text}"),
                Err(e) => eprintln!("error: {e}"),
            }
            if outcome.ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
