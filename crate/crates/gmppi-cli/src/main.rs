//! Command-line front end: closed-loop tracking runs, forest sweeps, a
//! latency benchmark, and a depth-frame dump. All commands share the same
//! resolved scenario config (file + dotted overrides), and sweeps write
//! per-run artifacts plus a deterministic aggregate.

use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};

mod commands;
mod config;

use commands::{ForestArgs, TrackArgs, Variant};

#[derive(Parser)]
#[command(name = "gmppi", version, about = "Sampling-based quadrotor flight stack")]
struct Cli {
    /// Scenario config file (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the master seed (run.seed) after config and --set.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for sweeps and the rollout pool. Default: all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output directory for artifacts.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Dotted config override, repeatable: --set controller.lambda=10.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    #[command(subcommand)]
    command: Commands,
}

#[derive(Subcommand)]
enum Commands {
    /// Fly a reference trajectory closed-loop and log tracking metrics.
    Track {
        /// hover | fig8 | hypotrochoid | line. Omitted: the configured one.
        #[arg(long)]
        traj: Option<String>,

        /// gmppi | se3
        #[arg(long, default_value = "gmppi")]
        controller: String,

        /// Ablations to run alongside, comma-separated:
        /// no_se3, const_dt, const_noise.
        #[arg(long)]
        ablate: Option<String>,

        /// Seeds: "3", "0..9" (inclusive), or "1,5,9". Default: run.seed.
        #[arg(long)]
        seeds: Option<String>,
    },

    /// Sweep straight flights through Poisson forests over speeds × seeds.
    Forest {
        /// Comma-separated speeds (m/s).
        #[arg(long, default_value = "3,5,7")]
        speeds: String,

        /// Forest/controller seeds; same forms as track.
        #[arg(long, default_value = "0..9")]
        seeds: String,
    },

    /// Measure per-iteration controller latency across thread counts.
    Bench {
        #[arg(long, default_value_t = 1000)]
        iterations: usize,
    },

    /// Render the depth frame seen from the trajectory start pose.
    RenderDebug,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        anyhow::ensure!(n > 0, "--threads must be positive");
        // Sized before first use; later calls would be ignored anyway.
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .ok();
    }
    let workers = cli
        .threads
        .or_else(|| std::thread::available_parallelism().ok().map(|n| n.get()))
        .unwrap_or(1);

    let scenario = config::load_scenario(cli.config.as_deref(), &cli.set, cli.seed)?;

    match &cli.command {
        Commands::Track {
            traj,
            controller,
            ablate,
            seeds,
        } => {
            let mut variants = vec![Variant::parse(controller)?];
            if let Some(list) = ablate {
                for name in list.split(',').filter(|s| !s.trim().is_empty()) {
                    let v = Variant::parse(name.trim())?;
                    anyhow::ensure!(
                        matches!(v, Variant::NoSe3 | Variant::ConstDt | Variant::ConstNoise),
                        "'{name}' is a controller, not an ablation"
                    );
                    if !variants.contains(&v) {
                        variants.push(v);
                    }
                }
            }
            let seeds = match seeds {
                Some(spec) => config::parse_seed_list(spec)?,
                None => vec![scenario.run.seed],
            };
            let args = TrackArgs {
                variants,
                seeds,
                traj: traj.clone(),
            };
            commands::cmd_track(&scenario, &args, &cli.out, workers)
        }
        Commands::Forest { speeds, seeds } => {
            let args = ForestArgs {
                speeds: config::parse_speed_list(speeds)?,
                seeds: config::parse_seed_list(seeds)?,
            };
            commands::cmd_forest(&scenario, &args, &cli.out, workers)
        }
        Commands::Bench { iterations } => {
            anyhow::ensure!(*iterations > 0, "--iterations must be positive");
            commands::cmd_bench(&scenario, *iterations, &cli.out)
        }
        Commands::RenderDebug => commands::cmd_render_debug(&scenario, &cli.out).map(|_| ()),
    }
}
