//! `ntn-doppler`: seeded Monte Carlo campaigns for multi-position Doppler
//! estimation.
//!
//! Exit codes: 0 on success, 1 on configuration errors, 2 on runtime or I/O
//! errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ntn_doppler::harness::{self, CampaignConfig, CampaignStats, Cell, SweepAxis};
use ntn_doppler::Error;

#[derive(Debug, Parser)]
#[command(
    name = "ntn-doppler",
    version,
    about = "Doppler/frequency-offset separation campaigns"
)]
struct Cli {
    /// Print per-cell progress to stderr
    #[arg(long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the full SNR x separation grid
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the campaign seed
        #[arg(long)]
        seed: Option<u64>,
        /// Override the number of trials per cell
        #[arg(long)]
        trials: Option<usize>,
        /// CSV output path (overrides `output_path` in the config)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep one axis with the other held at its fixed value
    Sweep {
        #[arg(long, value_enum)]
        axis: Axis,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Validate a config and print it with defaults filled in
    Check {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Axis {
    Snr,
    Separation,
}

fn load(path: &Path, seed: Option<u64>, trials: Option<usize>) -> Result<CampaignConfig, Error> {
    let mut cfg = CampaignConfig::load(path)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if let Some(trials) = trials {
        cfg.trials = trials;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(
    cfg: &CampaignConfig,
    cells: &[Cell],
    out: Option<PathBuf>,
    verbose: bool,
) -> Result<CampaignStats, Error> {
    let total = cells.len();
    let mut done = 0;
    let stats = harness::run_cells(cfg, cells, |c| {
        done += 1;
        if verbose {
            eprintln!(
                "[{done}/{total}] snr {:+.1} dB, separation {:.0} MHz: mean {:.1} Hz, within {:.2}%",
                c.snr_db,
                c.separation_hz / 1e6,
                c.mean_abs_error_hz,
                100.0 * c.within_threshold_fraction
            );
        }
    })?;
    if let Some(path) = out.or_else(|| cfg.output_path.clone()) {
        harness::emit_csv(&stats, &cfg.quantiles, &path)?;
        if verbose {
            eprintln!("wrote {}", path.display());
        }
    }
    print!("{}", harness::render_summary(&stats));
    Ok(stats)
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run {
            config,
            seed,
            trials,
            out,
        } => {
            let cfg = load(&config, seed, trials)?;
            execute(&cfg, &cfg.grid_cells(), out, cli.verbose)?;
        }
        Command::Sweep {
            axis,
            config,
            seed,
            trials,
            out,
        } => {
            let cfg = load(&config, seed, trials)?;
            let axis = match axis {
                Axis::Snr => SweepAxis::Snr,
                Axis::Separation => SweepAxis::Separation,
            };
            execute(&cfg, &cfg.sweep_cells(axis), out, cli.verbose)?;
        }
        Command::Check { config } => {
            let cfg = load(&config, None, None)?;
            println!("{}", cfg.to_json_pretty());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
