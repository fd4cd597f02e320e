//! `wgheat`: batch experiments for the waveguide heat inverse source problem.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::ExperimentConfig;
use error::CliError;
use output::RunOutput;

#[derive(Debug, Parser)]
#[command(name = "wgheat", version, about = "Forward solves, Carleman checks and inversion experiments")]
struct Cli {
    /// TOML experiment config; every key has a default.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, global = true, env = "WGHEAT_OUT")]
    out: Option<PathBuf>,
    /// Seed (overrides the top-level `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override one config key, e.g. `--set carleman.rho=8`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Solve the forward problem and write `β`, its Neumann trace and sidecar.
    Forward,
    /// Reconstruct `β` from a trace file.
    Invert,
    /// Stability sweep over noise levels.
    Sweep,
    /// Verify the weight lemma and scan the Carleman ratio over `λ`.
    Carleman,
    /// Empirical observability constant.
    Observability,
    /// Check the energy estimates for one `(β, σ)` pair.
    CheckEnergy,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Forward => "forward",
            Command::Invert => "invert",
            Command::Sweep => "sweep",
            Command::Carleman => "carleman",
            Command::Observability => "observability",
            Command::CheckEnergy => "check-energy",
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut overrides = cli.overrides;
    if let Some(seed) = cli.seed {
        overrides.push(format!("seed={seed}"));
    }
    if let Some(out) = &cli.out {
        let quoted = toml::Value::String(out.display().to_string());
        overrides.push(format!("output_dir={quoted}"));
    }
    let cfg = ExperimentConfig::load(cli.config.as_deref(), &overrides)?;
    let mut out = RunOutput::create(&cfg.output_dir, cli.command.name(), &cfg.canonical_json(), cfg.seed)?;
    out.write_bytes("config.json", format!("{}\n", cfg.canonical_json()).as_bytes())?;
    match cli.command {
        Command::Forward => commands::forward(&cfg, &mut out)?,
        Command::Invert => commands::invert(&cfg, &mut out)?,
        Command::Sweep => commands::sweep(&cfg, &mut out)?,
        Command::Carleman => commands::carleman(&cfg, &mut out)?,
        Command::Observability => commands::observability(&cfg, &mut out)?,
        Command::CheckEnergy => commands::check_energy(&cfg, &mut out)?,
    }
    let manifest = out.finish()?;
    for f in &manifest.files {
        println!("{}", cfg.output_dir.join(&f.path).display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
