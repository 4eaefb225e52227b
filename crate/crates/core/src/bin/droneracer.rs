//! Command-line front end: train, eval, race and inspect.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use droneracer::geometry::{SpawnOverride, Track};
use droneracer::harness::{evaluate, race, train, Checkpoint, EvalOptions, RunConfig, TrainOptions};
use droneracer::Error;

#[derive(Parser)]
#[command(name = "droneracer", version, about = "Quadrotor gate racing with PPO")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy, writing metrics and checkpoints into --out.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Continue from this checkpoint (its embedded config is used).
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Serve metrics lines to TCP clients at host:port.
        #[arg(long)]
        metrics_addr: Option<String>,
        /// Stop after this many global steps, checkpointing on exit.
        #[arg(long)]
        stop_after: Option<u64>,
        /// Override the configured step budget.
        #[arg(long)]
        total_steps: Option<u64>,
    },
    /// Evaluate a checkpoint with frozen statistics.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        episodes: usize,
        /// Act with the policy mean instead of sampling.
        #[arg(long)]
        deterministic: bool,
        /// Evaluate on this track instead of the checkpoint's.
        #[arg(long)]
        track: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Spawn at this distance from the first gate.
        #[arg(long)]
        spawn_distance: Option<f64>,
        /// Initial yaw error magnitude in degrees, random sign.
        #[arg(long, default_value_t = 0.0)]
        yaw_error_deg: f64,
    },
    /// Race a checkpoint's policy against the pure-pursuit opponent.
    Race {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        episodes: usize,
        #[arg(long)]
        track: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print a config, track or checkpoint.
    Inspect(InspectArgs),
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct InspectArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    track: Option<PathBuf>,
    #[arg(long)]
    ckpt: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err((e, config)) => {
            eprintln!("error: {e}");
            ExitCode::from(if config || e.is_config() { 1 } else { 2 })
        }
    }
}

/// Errors carry a flag marking failures to read user configuration.
type CliResult = Result<(), (Error, bool)>;

fn config_err(e: Error) -> (Error, bool) {
    (e, true)
}

fn runtime_err(e: Error) -> (Error, bool) {
    (e, false)
}

fn load_track(path: Option<&Path>, ckpt: &Checkpoint) -> Result<Track, (Error, bool)> {
    match path {
        Some(p) => Track::load(p).map_err(config_err),
        None => Ok(ckpt.track.clone()),
    }
}

fn print_json<T: serde::Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("summary serializes"));
}

fn execute(command: Command) -> CliResult {
    match command {
        Command::Train { config, seed, out, resume, metrics_addr, stop_after, total_steps } => {
            let cfg = RunConfig::load(&config).map_err(config_err)?;
            let opts = TrainOptions { resume, metrics_addr, stop_after, total_steps };
            let s = train(cfg, seed, &out, &opts).map_err(runtime_err)?;
            println!(
                "{} steps, {} episodes, {} updates; checkpoint {}",
                s.global_step,
                s.episodes,
                s.updates,
                s.final_checkpoint.display()
            );
        }
        Command::Eval { ckpt, episodes, deterministic, track, seed, spawn_distance, yaw_error_deg } => {
            let ckpt = Checkpoint::load(&ckpt).map_err(runtime_err)?;
            let track = load_track(track.as_deref(), &ckpt)?;
            let spawn = SpawnOverride { distance: spawn_distance, yaw_error: yaw_error_deg.to_radians() };
            let opts = EvalOptions { episodes, deterministic, seed, spawn };
            let mut s = evaluate(&ckpt, &track, &opts).map_err(runtime_err)?;
            s.results.clear();
            print_json(&s);
        }
        Command::Race { ckpt, episodes, track, seed } => {
            let ckpt = Checkpoint::load(&ckpt).map_err(runtime_err)?;
            let track = load_track(track.as_deref(), &ckpt)?;
            let mut s = race(&ckpt, &track, episodes, seed).map_err(runtime_err)?;
            s.outcomes.clear();
            print_json(&s);
        }
        Command::Inspect(InspectArgs { config, track, ckpt }) => {
            if let Some(p) = config {
                print!("{}", RunConfig::load(&p).map_err(config_err)?.to_toml());
            } else if let Some(p) = track {
                print!("{}", Track::load(&p).map_err(config_err)?.to_toml());
            } else if let Some(p) = ckpt {
                let c = Checkpoint::load(&p).map_err(runtime_err)?;
                println!("# checkpoint format {}", droneracer::harness::FORMAT_VERSION);
                println!("# seed {}", c.seed);
                println!("# global_step {}  episodes {}  updates {}", c.global_step, c.episodes, c.updates);
                println!("# parameters {}  environments {}", c.params.data.len(), c.envs.len());
                println!("{}", c.config.to_toml());
                println!("# track");
                print!("{}", c.track.to_toml());
            }
        }
    }
    Ok(())
}
