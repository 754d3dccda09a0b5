use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use grushin_lab::{execute, resolve_config, CliError, ENV_OUTPUT_ROOT, ENV_WORKERS};

#[derive(Parser)]
#[command(name = "grushin-lab", version, about = "Grushin-type heat equation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Eigenpairs in y and spectral-inequality constants
    Spectrum(RunArgs),
    /// First eigenvalue of the mode operators against μ
    Scaling(RunArgs),
    /// Full solve against mode solves, dissipation trials
    Evolve(RunArgs),
    /// Carleman weight margins and the weighted-estimate ratio suite
    CarlemanVerify(RunArgs),
    /// Dyadic time schedule and the constant recursion
    LrSchedule(RunArgs),
    /// Per-mode observability constants
    Observability(RunArgs),
    /// Source reconstruction from interior measurements
    Invert(RunArgs),
    /// Block-wise null control
    Control(RunArgs),
    /// Every experiment above, one subdirectory each
    FullSuite(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML configuration file
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set physics.gamma=0.25`
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Print the resolved configuration and exit
    #[arg(long)]
    print_config: bool,
}

impl Command {
    fn split(&self) -> (&'static str, &RunArgs) {
        match self {
            Command::Spectrum(a) => ("spectrum", a),
            Command::Scaling(a) => ("scaling", a),
            Command::Evolve(a) => ("evolve", a),
            Command::CarlemanVerify(a) => ("carleman-verify", a),
            Command::LrSchedule(a) => ("lr-schedule", a),
            Command::Observability(a) => ("observability", a),
            Command::Invert(a) => ("invert", a),
            Command::Control(a) => ("control", a),
            Command::FullSuite(a) => ("full-suite", a),
        }
    }
}

fn run(cli: Cli) -> Result<i32, CliError> {
    let (kind, args) = cli.command.split();
    let text = match &args.config {
        Some(p) => Some(std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?),
        None => None,
    };
    let env = |k: &str| std::env::var(k).ok();
    let cfg = resolve_config(
        kind,
        text.as_deref(),
        env(ENV_WORKERS).as_deref(),
        env(ENV_OUTPUT_ROOT).as_deref(),
        &args.sets,
    )?;
    if args.print_config {
        cfg.validate()?;
        let _ = write!(std::io::stdout(), "{}", cfg.to_toml());
        return Ok(0);
    }
    let outcome = execute(&cfg)?;
    // a closed stdout must not turn a finished run into a crash
    let mut out = std::io::stdout().lock();
    for c in &outcome.checks {
        let tag = if c.passed { "PASS" } else { "FAIL" };
        let _ = writeln!(out, "{tag} {} {}", c.name, c.detail);
    }
    if let Some(e) = &outcome.error {
        eprintln!("error: {e}");
    }
    let _ = writeln!(out, "{}", outcome.dir.display());
    Ok(outcome.exit_code())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
