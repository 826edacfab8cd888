//! `fliplab`: build flip-noise datasets, enumerate training plans, construct
//! probe suites, and score model responses flip-aware.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand, ValueEnum};

use fliplab_core::noise::FlipKind;

use config::Settings;

#[derive(Parser)]
#[command(name = "fliplab", version, about = "Corpus-noise toolkit and experiment harness")]
struct Cli {
    /// Path to the JSON config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides the config file.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Root seed; every stage derives its own labeled seed from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FlipArg {
    Word,
    Char,
}

impl From<FlipArg> for FlipKind {
    fn from(arg: FlipArg) -> Self {
        match arg {
            FlipArg::Word => FlipKind::Word,
            FlipArg::Char => FlipKind::Char,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the dataset construction pipeline from the configured sources.
    Build {
        /// Backend spec for the counterfactual generator (enables cfact_train).
        #[arg(long)]
        generator: Option<String>,
        /// Backend spec for the counterfactual validator.
        #[arg(long)]
        validator: Option<String>,
    },
    /// Flip one dataset into positive/negative pairs.
    Flip {
        #[arg(long)]
        input: String,
        #[arg(long, value_enum)]
        kind: FlipArg,
        #[arg(long)]
        name: Option<String>,
    },
    /// Re-pair questions with deranged answers.
    Irrelevant {
        #[arg(long)]
        input: String,
        #[arg(long)]
        name: Option<String>,
    },
    /// Generate validated counterfactual answers for a dataset.
    Counterfactual {
        #[arg(long)]
        input: String,
        #[arg(long)]
        generator: String,
        #[arg(long)]
        validator: String,
        #[arg(long)]
        name: Option<String>,
        #[arg(long)]
        queue: Option<PathBuf>,
    },
    /// Build the test, wtest, and ctest suites from the test set.
    Probes {
        /// Sample shots per item instead of the fixed shot set.
        #[arg(long)]
        per_item: bool,
        /// JSON file of {question, answer} shots for per-item sampling.
        #[arg(long)]
        shot_pool: Option<PathBuf>,
        /// Shots per probe.
        #[arg(long, default_value_t = 5)]
        k: usize,
    },
    /// List the plan catalog or emit plan files.
    Plan {
        #[arg(long)]
        list: bool,
        /// Emit one named plan.
        #[arg(long)]
        emit: Option<String>,
        /// Emit every plan in the catalog.
        #[arg(long)]
        emit_all: bool,
        /// Directory holding dataset manifests (defaults to the output data dir).
        #[arg(long)]
        data_dir: Option<PathBuf>,
        /// Run-state file to advance.
        #[arg(long)]
        advance: Option<PathBuf>,
        /// Stage index to complete (with --advance).
        #[arg(long)]
        stage: Option<usize>,
        /// Artifact reference for the completed stage (with --advance).
        #[arg(long)]
        artifact: Option<String>,
    },
    /// Evaluate a suite with a model backend.
    Eval {
        /// Suite name under the output suites directory (test, wtest, ctest).
        #[arg(long)]
        suite: String,
        /// echo | gold-oracle | flip-oracle:word | flip-oracle:char | scripted:<path> | http
        #[arg(long)]
        backend: String,
        #[arg(long)]
        label: Option<String>,
    },
    /// Retention probe for an unlearning plan.
    Retention {
        #[arg(long)]
        plan: String,
        /// wtest or ctest.
        #[arg(long)]
        suite: String,
        #[arg(long)]
        backend: String,
        #[arg(long)]
        label: Option<String>,
    },
    /// Spot-check training replication on sampled records.
    Replication {
        #[arg(long)]
        dataset: String,
        #[arg(long)]
        backend: String,
        #[arg(long, default_value_t = 50)]
        n: usize,
        #[arg(long)]
        label: Option<String>,
    },
    /// Tokenization-divergence report for flipped text.
    Tokscan {
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        merges: PathBuf,
        #[arg(long)]
        text: Option<String>,
        #[arg(long)]
        file: Option<PathBuf>,
        /// Also write a plot-ready TSV table.
        #[arg(long)]
        tsv: Option<PathBuf>,
        /// Leading-space convention: prefix or none.
        #[arg(long, default_value = "prefix")]
        marker: String,
        #[arg(long)]
        byte_fallback: bool,
    },
    /// Merge evaluation reports into one summary table.
    Report {
        #[arg(long)]
        out: Option<PathBuf>,
        /// Report JSON files.
        inputs: Vec<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<i32> {
    let settings = Settings::resolve(cli.config.as_deref(), cli.output_dir, cli.seed)?;
    match cli.command {
        Command::Build { generator, validator } => {
            commands::build::cmd_build(&settings, generator.as_deref(), validator.as_deref())
        }
        Command::Flip { input, kind, name } => {
            commands::build::cmd_flip(&settings, &input, kind.into(), name.as_deref())
        }
        Command::Irrelevant { input, name } => {
            commands::build::cmd_irrelevant(&settings, &input, name.as_deref())
        }
        Command::Counterfactual {
            input,
            generator,
            validator,
            name,
            queue,
        } => commands::build::cmd_counterfactual(
            &settings,
            &input,
            &generator,
            &validator,
            name.as_deref(),
            queue,
        ),
        Command::Probes { per_item, shot_pool, k } => {
            commands::probes::cmd_probes(&settings, per_item, shot_pool.as_deref(), k)
        }
        Command::Plan {
            list,
            emit,
            emit_all,
            data_dir,
            advance,
            stage,
            artifact,
        } => {
            if let Some(state_path) = advance {
                let stage = stage.ok_or_else(|| anyhow::anyhow!("--advance requires --stage"))?;
                let artifact =
                    artifact.ok_or_else(|| anyhow::anyhow!("--advance requires --artifact"))?;
                commands::plan::cmd_plan_advance(&state_path, stage, &artifact)
            } else if let Some(name) = emit {
                commands::plan::cmd_plan_emit(&settings, &name, data_dir.as_deref())
            } else if emit_all {
                commands::plan::cmd_plan_emit_all(&settings, data_dir.as_deref())
            } else {
                // default and --list both print the catalog
                let _ = list;
                commands::plan::cmd_plan_list()
            }
        }
        Command::Eval { suite, backend, label } => {
            commands::eval::cmd_eval(&settings, &suite, &backend, label.as_deref())
        }
        Command::Retention {
            plan,
            suite,
            backend,
            label,
        } => commands::eval::cmd_retention(&settings, &plan, &suite, &backend, label.as_deref()),
        Command::Replication {
            dataset,
            backend,
            n,
            label,
        } => commands::eval::cmd_replication(&settings, &dataset, &backend, n, label.as_deref()),
        Command::Tokscan {
            vocab,
            merges,
            text,
            file,
            tsv,
            marker,
            byte_fallback,
        } => commands::tokscan::cmd_tokscan(
            &settings,
            &vocab,
            &merges,
            text.as_deref(),
            file.as_deref(),
            tsv.as_deref(),
            &marker,
            byte_fallback,
        ),
        Command::Report { out, inputs } => {
            commands::eval::cmd_report(&settings, &inputs, out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(error) => {
            eprintln!("error: {error:#}");
            ExitCode::from(1)
        }
    }
}
