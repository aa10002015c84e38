mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Variational barycentric coordinates: prune, train, deform, verify.
#[derive(Debug, Parser)]
#[command(name = "vbc", version)]
struct Cli {
    /// Worker threads for data-parallel stages (default: all cores).
    #[arg(long, global = true, env = "VBC_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Select the virtual simplices of a cage.
    Prune(PruneArgs),
    /// Train a coordinate field.
    Train(TrainArgs),
    /// Fine-tune a trained field for a deformed cage.
    FinetuneArap(ArapArgs),
    /// Recover a deformed cage from a target mesh.
    Inverse(InverseArgs),
    /// Sample a trained field at query points.
    Bake(BakeArgs),
    /// Apply baked weights to a deformed cage.
    Deform(DeformArgs),
    /// Run the correctness oracles on a cage and field.
    Verify(VerifyArgs),
    /// Summarize run outputs as JSON or CSV.
    Report(ReportArgs),
}

/// Inputs shared by every command that loads a trained field.
#[derive(Debug, Args)]
pub struct FieldInputs {
    /// Cage JSON.
    #[arg(long)]
    pub cage: Option<PathBuf>,
    /// Virtual simplex set from `prune`.
    #[arg(long)]
    pub simplices: Option<PathBuf>,
    /// Parameter checkpoint from `train`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PruneArgs {
    #[arg(long)]
    pub cage: Option<PathBuf>,
    /// JSON config (pruning settings and paths).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// OBJ whose vertices must all be covered.
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Manifest path (default: `<out>.manifest.json`).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LossArg {
    Tv,
    Wtv,
    Dirichlet,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub cage: Option<PathBuf>,
    #[arg(long)]
    pub simplices: Option<PathBuf>,
    /// JSON config (training settings, a `field` section, and paths).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub loss: Option<LossArg>,
    /// Constant `c` of the weighting function for `--loss wtv`.
    #[arg(long)]
    pub weight_c: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory for checkpoints, the loss log and the manifest.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ArapArgs {
    #[command(flatten)]
    pub field: FieldInputs,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Rest mesh OBJ inside the cage.
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    /// Deformed cage JSON.
    #[arg(long)]
    pub deformed_cage: Option<PathBuf>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Fine-tuned checkpoint.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Deformed mesh OBJ produced by the fine-tuned field.
    #[arg(long)]
    pub out_mesh: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InverseArgs {
    #[command(flatten)]
    pub field: FieldInputs,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Rest mesh OBJ inside the cage.
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    /// Target mesh OBJ with the rest mesh's connectivity.
    #[arg(long)]
    pub target: Option<PathBuf>,
    /// Keep the network fixed and optimize only the cage.
    #[arg(long)]
    pub cage_only: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Recovered deformed cage JSON.
    #[arg(long)]
    pub out_cage: Option<PathBuf>,
    /// Fine-tuned checkpoint.
    #[arg(long)]
    pub out_checkpoint: Option<PathBuf>,
    /// Deformed mesh OBJ.
    #[arg(long)]
    pub out_mesh: Option<PathBuf>,
    /// Per-vertex error CSV.
    #[arg(long)]
    pub errors: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BakeArgs {
    #[command(flatten)]
    pub field: FieldInputs,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// OBJ whose vertices are the query points.
    #[arg(long)]
    pub points: Option<PathBuf>,
    /// Weights file; `.json` selects the JSON form, anything else binary.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DeformArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Baked weights (binary or `.json`).
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long)]
    pub deformed_cage: Option<PathBuf>,
    /// Mesh supplying faces for the output (its vertices are replaced).
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub field: FieldInputs,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Random interior test points.
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Summary JSON (also printed).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Loss CSV from `train`.
    #[arg(long)]
    pub loss: Option<PathBuf>,
    /// Run manifests to include.
    #[arg(long)]
    pub manifest: Vec<PathBuf>,
    /// Summary JSON from `verify`.
    #[arg(long)]
    pub verify: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: ReportFormat,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // usage errors are malformed input; help and version are not errors
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match &cli.command {
        Command::Prune(a) => commands::prune(a),
        Command::Train(a) => commands::train(a),
        Command::FinetuneArap(a) => commands::finetune_arap(a),
        Command::Inverse(a) => commands::inverse(a),
        Command::Bake(a) => commands::bake(a),
        Command::Deform(a) => commands::deform(a),
        Command::Verify(a) => commands::verify(a),
        Command::Report(a) => commands::report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
