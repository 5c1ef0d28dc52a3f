//! `lieham <command> --config run.toml [--out result.csv]`
//!
//! Exit status: 0 on success, 1 when a checked invariant fails, 2 on errors.

use anyhow::Context;
use clap::{Parser, ValueEnum};
use lieham::cli::{parse_config, run_command, write_table, Command};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Cmd {
    /// Algebra and commutator residuals.
    Verify,
    /// Coupling ladder and effective Hamiltonian blocks.
    Derive,
    /// Effective against exact eigenvalues.
    Spectrum,
    /// Exact against effective time evolution.
    Evolve,
    /// Error scaling over the epsilon list.
    Sweep,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Verify => Command::Verify,
            Cmd::Derive => Command::Derive,
            Cmd::Spectrum => Command::Spectrum,
            Cmd::Evolve => Command::Evolve,
            Cmd::Sweep => Command::Sweep,
        }
    }
}

#[derive(Debug, Parser)]
#[command(version, about = "Effective Hamiltonians by small unitary rotations")]
struct Args {
    #[arg(value_enum)]
    command: Cmd,
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// CSV output. The report always goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    order: Option<usize>,
    #[arg(long)]
    resonance_tol: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_steps: Option<usize>,
}

fn run(args: &Args) -> anyhow::Result<bool> {
    let text = std::fs::read_to_string(&args.config)
        .with_context(|| format!("reading {}", args.config.display()))?;
    let mut cfg = parse_config(&text).with_context(|| args.config.display().to_string())?;
    if let Some(k) = args.order {
        anyhow::ensure!(k >= 1, "--order must be at least 1");
        cfg.run.order = k;
    }
    if let Some(t) = args.resonance_tol {
        anyhow::ensure!(
            t.is_finite() && t >= 0.0,
            "--resonance-tol must be finite and nonnegative"
        );
        cfg.run.resonance_tol = Some(t);
    }
    if let Some(s) = args.seed {
        cfg.run.seed = s;
    }
    if let Some(k) = args.max_steps {
        anyhow::ensure!(k >= 1, "--max-steps must be at least 1");
        cfg.run.max_steps = k;
    }
    let out = run_command(&cfg, args.command.into())?;
    print!("{}", out.report);
    if let Some(path) = &args.out {
        write_table(&out.table, path).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(out.success)
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("invariant check failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
