use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dptm::runner::{self, CliOverrides};

#[derive(Parser)]
#[command(name = "dptm", about = "Diffusion-guided source-free adaptation runs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a run described by a TOML config file.
    Run {
        config: PathBuf,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default: from config, else runs/run-<hash>).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Record the first manipulated sample's latent trajectory per round.
        #[arg(long)]
        dump_traces: bool,
    },
    /// Validate a run directory and print its summary.
    Report { dir: PathBuf },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            seed,
            out,
            dump_traces,
        } => runner::run_from_path(
            &config,
            &CliOverrides {
                seed,
                out,
                dump_traces,
            },
        )
        .map(|artifacts| {
            let last = artifacts.history.metrics.last().expect("at least baseline");
            println!(
                "run complete: {} (target accuracy {:.4} baseline -> {:.4} final, selected round {})",
                artifacts.out_dir.display(),
                artifacts.history.metrics[0].target_accuracy,
                last.target_accuracy,
                artifacts.selection.selected_round
            );
        }),
        Command::Report { dir } => runner::report(&dir).map(|summary| {
            print!("{}", summary.render());
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
