//! `odr`: generate corpora, train and evaluate dispute-outcome models,
//! explain predictions, run the behavioral analyses and serve the API.
//!
//! Every command writes a run manifest next to its outputs. Failures print
//! one JSON line `{"error":{"code","message"}}` to stderr; usage errors exit
//! with 2, everything else with 1.

mod commands;
mod error;
mod manifest;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "odr", version, about = "Dispute outcome prediction and analysis")]
struct Cli {
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,

    /// Root seed for every random choice of the command.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic corpus with planted rules.
    Gen(GenArgs),
    /// Cross-validate then train a model on the whole corpus.
    Train(TrainArgs),
    /// Cross-validate several learners on shared folds.
    Eval(EvalArgs),
    /// Randomized hyperparameter search.
    Search(SearchArgs),
    /// Feature and family ablations.
    Ablate(AblateArgs),
    /// Explain one case as the API would.
    Explain(ExplainArgs),
    /// Politeness correlations and trajectories.
    AnalyzePoliteness(PolitenessArgs),
    /// Purchasing before and after disputes.
    AnalyzeChurn(ChurnArgs),
    /// Where predictions go wrong.
    ErrorAnalysis(ErrorArgs),
    /// Run the HTTP API.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub n: Option<usize>,
    /// Label flip probability.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Generator configuration JSON; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Planted-rule manifest; defaults next to the corpus.
    #[arg(long)]
    pub rules_out: Option<PathBuf>,
    /// Also write buyer purchase timelines as JSONL.
    #[arg(long)]
    pub timelines_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Learner: gbdt, majority, nb, knn, dt, rf, mlp.
    #[arg(long, default_value = "gbdt")]
    pub model: String,
    /// Learner parameters as JSON, e.g. `{"n_trees": 200}`.
    #[arg(long)]
    pub params: Option<String>,
    #[arg(long)]
    pub corpus: PathBuf,
    /// Cross-validation folds before the final fit; 0 skips them.
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Per-fold metrics CSV; defaults next to the model.
    #[arg(long)]
    pub report_out: Option<PathBuf>,
    #[arg(long)]
    pub roc_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Comma-separated learners, or `all`.
    #[arg(long, default_value = "all")]
    pub models: String,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    /// JSON report; a CSV is written next to it.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub roc_out: Option<PathBuf>,
    /// Also evaluate gbdt per claim-type/seller-type segment.
    #[arg(long)]
    pub segment: bool,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long, default_value = "gbdt")]
    pub model: String,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub trials: usize,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long, default_value = "gbdt")]
    pub model: String,
    #[arg(long)]
    pub params: Option<String>,
    #[arg(long)]
    pub corpus: PathBuf,
    /// family, single, lofo, combination, or `all` for the first three.
    #[arg(long, default_value = "all")]
    pub mode: String,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    /// Model file written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub case_id: String,
    /// Payload destination; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Shapley summary CSV over the first labeled cases of the corpus.
    #[arg(long)]
    pub shap_out: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub shap_cases: usize,
    #[arg(long, default_value_t = 50)]
    pub background: usize,
    #[arg(long, default_value_t = 200)]
    pub permutations: usize,
    /// Gain importance CSV.
    #[arg(long)]
    pub importance_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PolitenessArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub bins: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ChurnArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Timelines JSONL; generated from the corpus and seed when absent.
    #[arg(long)]
    pub timelines: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ErrorArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Score with this model; without it predictions are out-of-fold.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, default_value = "gbdt")]
    pub learner: String,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Overrides ODR_DATA_DIR.
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Overrides ODR_MODEL_PATH.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Overrides ODR_PORT.
    #[arg(long)]
    pub port: Option<u16>,
}

fn run(cli: Cli) -> error::Result<()> {
    if cli.jobs == 0 {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build_global()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let seed = cli.seed;
    match cli.command {
        Command::Gen(a) => commands::gen(&a, seed),
        Command::Train(a) => commands::train(&a, seed),
        Command::Eval(a) => commands::eval(&a, seed),
        Command::Search(a) => commands::search(&a, seed),
        Command::Ablate(a) => commands::ablate(&a, seed),
        Command::Explain(a) => commands::explain(&a, seed),
        Command::AnalyzePoliteness(a) => commands::analyze_politeness(&a, seed),
        Command::AnalyzeChurn(a) => commands::analyze_churn(&a, seed),
        Command::ErrorAnalysis(a) => commands::error_analysis(&a, seed),
        Command::Serve(a) => commands::serve(&a, cli.jobs),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let first = e.to_string().lines().next().unwrap_or("invalid usage").trim_start_matches("error: ").to_string();
            eprintln!("{}", CliError::Usage(first).to_line());
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
