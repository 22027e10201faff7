use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use epne::cli::{self, CliError, Task};
use epne::synth::SynthSpec;

/// Temporal network embedding.
#[derive(Parser)]
#[command(version, about)]
struct Args {
    /// Training threads; 1 is deterministic. EPNE_WORKERS takes precedence.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train all snapshots and write checkpoints.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Classify nodes or edges from trained checkpoints.
    Eval {
        task: TaskArg,
        #[arg(long)]
        config: PathBuf,
    },
    /// Generate a synthetic dataset with planted temporal patterns.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = SynthSpec::default().nodes)]
        nodes: usize,
        #[arg(long, default_value_t = SynthSpec::default().communities)]
        communities: usize,
        #[arg(long, default_value_t = SynthSpec::default().snapshots)]
        snapshots: usize,
        #[arg(long, default_value_t = SynthSpec::default().p_in)]
        p_in: f64,
        #[arg(long, default_value_t = SynthSpec::default().p_out)]
        p_out: f64,
        #[arg(long, default_value_t = SynthSpec::default().periodic_fraction)]
        periodic_fraction: f64,
        #[arg(long, default_value_t = SynthSpec::default().period)]
        period: usize,
        #[arg(long, default_value_t = SynthSpec::default().duty)]
        duty: f64,
        #[arg(long, default_value_t = SynthSpec::default().trend_fraction)]
        trend_fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Project one checkpoint to 2-D with PCA.
    Project {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the temporal feature vector of every node at one snapshot.
    FeaturesDump {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        snapshot: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Node,
    Edge,
}

fn workers(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    match std::env::var("EPNE_WORKERS") {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Input(format!("EPNE_WORKERS must be a positive integer, got {v:?}"))),
        Err(_) => Ok(flag),
    }
}

fn run(args: Args) -> Result<(), CliError> {
    let workers = workers(args.workers)?;
    match args.command {
        Command::Train { config } => {
            let trained = cli::cmd_train(&config, workers)?;
            let dir = cli::output_dir(&config)?;
            log::info!(
                "trained {} snapshots; checkpoints in {}",
                trained.reports.len(),
                dir.display()
            );
        }
        Command::Eval { task, config } => {
            let task = match task {
                TaskArg::Node => Task::Node,
                TaskArg::Edge => Task::Edge,
            };
            let results = cli::cmd_eval(&config, task)?;
            epne::eval::write_results(io::stdout().lock(), &results)?;
        }
        Command::Synth {
            out,
            nodes,
            communities,
            snapshots,
            p_in,
            p_out,
            periodic_fraction,
            period,
            duty,
            trend_fraction,
            seed,
        } => {
            let spec = SynthSpec {
                nodes,
                communities,
                snapshots,
                p_in,
                p_out,
                periodic_fraction,
                period,
                duty,
                trend_fraction,
                seed,
            };
            cli::cmd_synth(&spec, &out)?;
        }
        Command::Project { checkpoint, labels, out } => {
            cli::cmd_project(&checkpoint, labels.as_deref(), &out)?;
        }
        Command::FeaturesDump { config, snapshot } => {
            cli::cmd_features_dump(&config, snapshot, io::stdout().lock())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
