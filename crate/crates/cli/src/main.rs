use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use nhcollapse::io::{execute, parse_config_with_seed, write_outputs, ScenarioKind};
use nhcollapse::Error;

/// Density-matrix dynamics under non-Hermitian measurement Hamiltonians.
#[derive(Parser)]
#[command(name = "nhcollapse", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve a state under a (possibly switched) Hamiltonian.
    Evolve(RunArgs),
    /// Windowed measurement on a two-level system.
    Collapse(RunArgs),
    /// Four-level degenerate measurement cases.
    Degeneracy(RunArgs),
    /// Superposition cases A, B, C1, C2.
    Cases(RunArgs),
    /// Incoherent sum versus dephasing master equation.
    Lindblad(RunArgs),
    /// Hidden-variable ensemble.
    Ensemble(RunArgs),
    /// Bloch-flow fixed points and their stability.
    FixedPoints(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Replaces the seed of an ensemble scenario.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, short)]
    verbose: bool,
}

impl Command {
    fn split(&self) -> (ScenarioKind, &RunArgs) {
        match self {
            Command::Evolve(a) => (ScenarioKind::Evolve, a),
            Command::Collapse(a) => (ScenarioKind::Collapse, a),
            Command::Degeneracy(a) => (ScenarioKind::Degeneracy, a),
            Command::Cases(a) => (ScenarioKind::Cases, a),
            Command::Lindblad(a) => (ScenarioKind::Lindblad, a),
            Command::Ensemble(a) => (ScenarioKind::Ensemble, a),
            Command::FixedPoints(a) => (ScenarioKind::FixedPoints, a),
        }
    }
}

fn run(kind: ScenarioKind, args: &RunArgs) -> Result<String, String> {
    let path = &args.config;
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let cfg = parse_config_with_seed(&text, args.seed).map_err(|e| located(path, e))?;
    if cfg.kind() != kind {
        return Err(format!(
            "{}: scenario kind is `{}` but the command is `{}`",
            path.display(),
            cfg.kind().name(),
            kind.name()
        ));
    }
    if args.seed.is_some() && kind != ScenarioKind::Ensemble && args.verbose {
        eprintln!("note: --seed has no effect on `{}` scenarios", kind.name());
    }
    let start = Instant::now();
    let out = execute(&cfg).map_err(|e| format!("{}: {} failed: {e}", path.display(), kind.name()))?;
    let written = write_outputs(&args.out, &cfg.output.path, cfg.output.format, &out)
        .map_err(|e| format!("writing outputs to {}: {e}", args.out.display()))?;
    if args.verbose {
        eprintln!("{} finished in {:.3} s", kind.name(), start.elapsed().as_secs_f64());
        for p in &written {
            eprintln!("wrote {}", p.display());
        }
    }
    Ok(out.summary)
}

fn located(path: &Path, e: Error) -> String {
    match e {
        Error::Config(issues) => {
            let mut msg = format!("{}: invalid configuration", path.display());
            for i in issues {
                msg.push_str(&format!("\n  {i}"));
            }
            msg
        }
        other => format!("{}: {other}", path.display()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = cli.command.split();
    match run(kind, args) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
