use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use hidim_delta::experiments::StudyKind;
use hidim_delta_cli::{cmd_norms, cmd_report, cmd_study, seed_override_from_env, NormsArgs, StudyArgs};

#[derive(Debug, Parser)]
#[command(name = "hidim-delta", version, about = "Rate studies for the high-dimensional delta method")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Randomized check of the matrix-norm inequalities.
    Norms {
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        #[arg(long, default_value_t = 80)]
        max_dim: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// File receiving any violating cases.
        #[arg(long, default_value = "norm_violations.json")]
        repro: PathBuf,
    },
    /// Run a Monte Carlo rate study.
    ///
    /// The HIDIM_DELTA_SEED environment variable overrides the config seed.
    Study {
        #[arg(value_parser = parse_kind)]
        kind: StudyKind,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads (default: number of processors).
        #[arg(long)]
        workers: Option<usize>,
        /// Run even when some cells have p <= n.
        #[arg(long)]
        allow_low_dim: bool,
    },
    /// Rebuild report.json and the summary from observations.csv.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_kind(s: &str) -> Result<StudyKind, String> {
    s.parse().map_err(|e: hidim_delta::Error| e.to_string())
}

fn main() -> ExitCode {
    // clap exits with status 2 on malformed arguments
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Norms {
            trials,
            max_dim,
            seed,
            repro,
        } => cmd_norms(&NormsArgs {
            trials,
            max_dim,
            seed,
            repro,
        }),
        Command::Study {
            kind,
            config,
            out,
            workers,
            allow_low_dim,
        } => seed_override_from_env().and_then(|seed_override| {
            cmd_study(&StudyArgs {
                kind,
                config,
                out,
                workers,
                allow_low_dim,
                seed_override,
            })
        }),
        Command::Report { out } => cmd_report(&out),
    };
    let code = match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
