//! `maxrm`: simulate data, fit and evaluate forests, run benchmark configs.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use maxrm_core::data::Setting;
use maxrm_core::harness::ModelKind;
use maxrm_core::minimax::SolverMethod;
use maxrm_core::risk::RiskKind;
use maxrm_core::Error;

#[derive(Parser, Debug)]
#[command(name = "maxrm", version, about = "Maximum-risk minimizing random forests")]
struct Cli {
    /// Worker threads for trees and repetitions (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw train and test samples from a simulation setting.
    Simulate(SimulateArgs),
    /// Fit a model on a CSV file and write it as JSON.
    Fit(FitArgs),
    /// Evaluate a saved model on a CSV file.
    Eval(EvalArgs),
    /// Run an experiment config and write CSV tables and SVG plots.
    Benchmark(BenchmarkArgs),
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// pwl, gp-noshift, gp-shift, gp-identical or mixture.
    #[arg(long, value_parser = parse_with::<Setting>)]
    setting: Setting,
    #[arg(long)]
    seed: u64,
    /// Output directory for train.csv and test.csv.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    n_per_env: Option<usize>,
    /// Total sample size split evenly over environments.
    #[arg(long)]
    n_total: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    noise_sd: Option<f64>,
}

#[derive(Args, Debug, Clone)]
struct TreeArgs {
    #[arg(long, default_value_t = 15)]
    min_leaf: usize,
    #[arg(long)]
    max_depth: Option<usize>,
    /// Features tried per split (default: all).
    #[arg(long)]
    mtry: Option<usize>,
}

#[derive(Args, Debug)]
struct FitArgs {
    /// Training CSV with columns x1..xp, y, env.
    #[arg(long)]
    train: PathBuf,
    /// Output model JSON. The fit report goes next to it as `<stem>.report.json`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// rf, maxrm, maxrm-tree or magging.
    #[arg(long, default_value = "maxrm", value_parser = parse_model)]
    model: ModelKind,
    /// posthoc, local, global, global-nondfs or weights, optionally with `-w`.
    #[arg(long, default_value = "posthoc")]
    strategy: String,
    #[arg(long, default_value = "mse", value_parser = parse_with::<RiskKind>)]
    risk: RiskKind,
    #[arg(long, default_value = "kkt", value_parser = parse_with::<SolverMethod>)]
    solver: SolverMethod,
    #[arg(long, default_value_t = 100)]
    trees: usize,
    #[command(flatten)]
    tree: TreeArgs,
    /// Leaf size of magging's per-environment forests.
    #[arg(long)]
    env_min_leaf: Option<usize>,
    /// Reset leaves without observations from the worst-case environments.
    #[arg(long)]
    revert_indeterminate: bool,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    test: PathBuf,
    /// Comma-separated risk kinds; MSE is always reported.
    #[arg(long, default_value = "mse", value_delimiter = ',', value_parser = parse_with::<RiskKind>)]
    risk: Vec<RiskKind>,
    /// Metrics CSV; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Leaf size of the per-environment forests behind regret offsets.
    #[command(flatten)]
    tree: TreeArgs,
}

#[derive(Args, Debug)]
struct BenchmarkArgs {
    /// Experiment config (JSON).
    config: PathBuf,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Overrides the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's repetition count.
    #[arg(long)]
    repetitions: Option<usize>,
}

fn parse_with<T: std::str::FromStr<Err = Error>>(s: &str) -> Result<T, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_model(s: &str) -> Result<ModelKind, String> {
    match s {
        "rf" => Ok(ModelKind::Rf),
        "maxrm" => Ok(ModelKind::Maxrm),
        "maxrm-tree" => Ok(ModelKind::MaxrmTree),
        "magging" => Ok(ModelKind::Magging),
        _ => Err(format!("unknown model `{s}` (expected rf, maxrm, maxrm-tree or magging)")),
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 1,
        Error::Solver(_) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MAXRM_LOG", "warn")).init();
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} workers: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Fit(a) => commands::fit(a),
        Command::Eval(a) => commands::eval(a),
        Command::Benchmark(a) => commands::benchmark(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
