//! Experiment CLI: every subcommand reads a TOML config, writes its
//! artifacts atomically into the output directory and records a run
//! manifest. Exit codes: 0 success, 1 runtime error, 2 config error,
//! 3 validation error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use doakit::runner::{run_plot, run_subcommand, Overrides};
use doakit::ErrorCategory;

#[derive(Parser)]
#[command(name = "doakit", version, about = "Sparse-array design and direction-finding toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Experiment config (TOML).
    #[arg(short, long)]
    config: PathBuf,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory (falls back to the config value,
    /// then $DOAKIT_OUT, then ./out).
    #[arg(short, long)]
    output_dir: Option<PathBuf>,
    /// Dataset file to read or write (default <out>/dataset.dkds).
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Model file to read or write (default <out>/model.dkmd).
    #[arg(long)]
    model: Option<PathBuf>,
    /// Source model for transfer learning (default <out>/model.dkmd).
    #[arg(long)]
    source_model: Option<PathBuf>,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            output_dir: self.output_dir.clone(),
            dataset_path: self.dataset.clone(),
            model_path: self.model.clone(),
            source_model_path: self.source_model.clone(),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled training dataset (Algorithm-style corpus).
    GenData(RunArgs),
    /// Collapse the subarray candidates to the ever-optimal classes.
    ReduceClasses(RunArgs),
    /// Train the classifier on a generated dataset.
    Train(RunArgs),
    /// Transfer a trained network to a scarce target corpus.
    Transfer(RunArgs),
    /// Selection accuracy of a saved model on a dataset file.
    EvalAcc(RunArgs),
    /// One-shot subarray selection comparison at a fixed bearing.
    Select(RunArgs),
    /// Simulated-annealing 2-D sparse candidate generation.
    SaDesign(RunArgs),
    /// Monte-Carlo RMSE sweeps across selection policies.
    Evaluate(RunArgs),
    /// Cognitive scan loop over a drifting target.
    ScanLoop(RunArgs),
    /// Compare the FIM bound against the literal per-angle expressions.
    CrbDiff(RunArgs),
    /// Render a result CSV as a standalone SVG.
    Plot {
        /// Input CSV produced by another subcommand.
        #[arg(short, long)]
        csv: PathBuf,
        /// One of: rmse_vs_snr, rmse_vs_snapshots, accuracy_vs_size,
        /// selection_histogram, array_layout.
        #[arg(short, long)]
        kind: String,
        /// Output path (default: input with .svg extension).
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

fn dispatch(cli: Cli) -> doakit::Result<String> {
    let run = |name: &str, args: &RunArgs| -> doakit::Result<String> {
        let outcome = run_subcommand(name, &args.config, &args.overrides())?;
        let mut lines = vec![format!("{name}: {}", outcome.summary)];
        for a in &outcome.artifacts {
            lines.push(format!("  wrote {}", a.display()));
        }
        Ok(lines.join("\n"))
    };
    match &cli.command {
        Command::GenData(a) => run("gen-data", a),
        Command::ReduceClasses(a) => run("reduce-classes", a),
        Command::Train(a) => run("train", a),
        Command::Transfer(a) => run("transfer", a),
        Command::EvalAcc(a) => run("eval-acc", a),
        Command::Select(a) => run("select", a),
        Command::SaDesign(a) => run("sa-design", a),
        Command::Evaluate(a) => run("evaluate", a),
        Command::ScanLoop(a) => run("scan-loop", a),
        Command::CrbDiff(a) => run("crb-diff", a),
        Command::Plot { csv, kind, out } => {
            let written = run_plot(csv, kind, out.clone())?;
            Ok(format!("plot: wrote {}", written.display()))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(message) => {
            println!("{message}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let (category, code) = match e.category() {
                ErrorCategory::Config => ("config", 2),
                ErrorCategory::Validation => ("validation", 3),
                ErrorCategory::Runtime => ("runtime", 1),
            };
            eprintln!("error: category={category} message={e}");
            ExitCode::from(code)
        }
    }
}
