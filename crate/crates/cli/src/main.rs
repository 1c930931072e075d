use abreu1d_cli::{run, Verb};
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

/// Penalized singular Abreu solver and diagnostics.
///
/// Exit codes: 0 success, 1 configuration or I/O error, 2 solver failure,
/// 3 oracle failure. Set ABREU1D_LOG to quiet, info or debug.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    verb: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `outputs` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the penalized problem at a single ε.
    Solve(Common),
    /// Continuation sweep with estimate diagnostics.
    Sweep(Common),
    /// Sweep and direct cone minimization, compared.
    Compare(Common),
    /// Weak Euler–Lagrange residual at the smallest ε.
    Verify(Common),
}

fn init_logging() {
    let level = match std::env::var("ABREU1D_LOG").as_deref() {
        Ok("quiet") => log::LevelFilter::Off,
        Ok("debug") => log::LevelFilter::Debug,
        _ => log::LevelFilter::Info,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .init();
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    init_logging();
    let (verb, common) = match cli.verb {
        Command::Solve(c) => (Verb::Solve, c),
        Command::Sweep(c) => (Verb::Sweep, c),
        Command::Compare(c) => (Verb::Compare, c),
        Command::Verify(c) => (Verb::Verify, c),
    };
    match run(verb, &common.config, common.out.as_deref()) {
        Ok(status) => {
            println!("{status}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
