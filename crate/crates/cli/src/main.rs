use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;

use commands::{classify, out_dir, Session, EXIT_CONFIG};
use config::RunConfig;

/// Entropy solutions, continuation and degree for quasilinear elliptic problems with measure data.
#[derive(Parser, Debug)]
#[command(name = "entropic", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (default `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the mesh parameter.
    #[arg(long = "mesh-n", global = true)]
    mesh_n: Option<usize>,
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Entropy solution by truncation and mollification.
    Solve,
    /// Continuation from the homogeneous limit problem.
    Continue,
    /// Property checks on computed solutions.
    Verify,
    /// Finite-dimensional degree on a region.
    Degree,
    /// Convergence or regularity sweep.
    Study,
}

fn load(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut c = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => anyhow::bail!("--config PATH is required"),
    };
    if let Some(s) = cli.seed {
        c.seed = s;
    }
    if let Some(n) = cli.mesh_n {
        c.set_mesh_n(n)?;
    }
    c.problem()?;
    Ok(c)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match load(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e:#}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let ctx = Session { config, out: out_dir(cli.out.as_deref()), quiet: cli.quiet };
    let run = match cli.command {
        Command::Solve => commands::cmd_solve(&ctx),
        Command::Continue => commands::cmd_continue(&ctx),
        Command::Verify => commands::cmd_verify(&ctx),
        Command::Degree => commands::cmd_degree(&ctx),
        Command::Study => commands::cmd_study(&ctx),
    };
    match run {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(classify(&e))
        }
    }
}
