mod commands;
mod manifest;
mod options;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hyfi::experiment::AblationGrid;
use hyfi::HyfiError;

use crate::options::{ConfigArgs, EvalArgs};

#[derive(Parser, Debug)]
#[command(
    name = "hyfi",
    version,
    about = "Hypergraph contrastive learning with feature-noise views"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train an encoder without labels and write a checkpoint and loss log.
    Train {
        /// Dataset directory.
        #[arg(long)]
        data: PathBuf,
        /// Run directory to create.
        #[arg(long)]
        out: PathBuf,
        /// Also write a checkpoint every N epochs.
        #[arg(long)]
        checkpoint_every: Option<usize>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Score a checkpoint with the linear probe.
    Evaluate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        eval: EvalArgs,
    },
    /// Average raw-feature similarity by number of shared hyperedges.
    Analyze {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Largest shared-hyperedge count to report.
        #[arg(long, default_value_t = 10)]
        max_c: u32,
    },
    /// Train and evaluate every cell of an ablation grid.
    Ablate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Grid to run: loss, augmentation or views.
        #[arg(long)]
        grid: AblationGrid,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Export origin-view node embeddings of a checkpoint as CSV.
    Embed {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        representation: Option<hyfi::Representation>,
    },
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<HyfiError>() {
        Some(HyfiError::Config(_)) => 2,
        Some(
            HyfiError::MissingFile(_)
            | HyfiError::Parse { .. }
            | HyfiError::NodeOutOfRange { .. }
            | HyfiError::DuplicateMember { .. }
            | HyfiError::EmptyHyperedge { .. }
            | HyfiError::RowCountMismatch { .. }
            | HyfiError::IdOutOfRange { .. },
        ) => 3,
        Some(HyfiError::Checkpoint { .. } | HyfiError::Dimension(_)) => 4,
        Some(
            HyfiError::Diverged { .. }
            | HyfiError::NonFinite(_)
            | HyfiError::ZeroNorm { .. }
            | HyfiError::CorruptOverlap { .. },
        ) => 5,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train {
            data,
            out,
            checkpoint_every,
            config,
        } => commands::train(&data, &out, checkpoint_every, &config),
        Command::Evaluate {
            data,
            checkpoint,
            out,
            eval,
        } => commands::evaluate(&data, &checkpoint, &out, &eval),
        Command::Analyze { data, out, max_c } => commands::analyze(&data, &out, max_c),
        Command::Ablate {
            data,
            out,
            grid,
            config,
        } => commands::ablate(&data, &out, grid, &config),
        Command::Embed {
            data,
            checkpoint,
            out,
            representation,
        } => commands::embed(&data, &checkpoint, &out, representation),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
