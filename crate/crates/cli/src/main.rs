//! `pmtp`: proximal estimation of counterfactual means under modified
//! treatment policies.
//!
//! Exit codes: 0 success, 2 bad input (arguments, schema, unknown scenario),
//! 3 numerical failure.

mod commands;
mod policy_spec;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use report::Format;

pub const EXIT_INPUT: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "pmtp", version, about = "Proximal estimation under modified treatment policies")]
struct Cli {
    /// Worker threads for folds, grids and replications.
    #[arg(long, global = true, env = "PMTP_THREADS")]
    threads: Option<usize>,

    /// More diagnostics on stderr (repeat for debug output).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Cross-fitted doubly-robust estimates for one or more policies.
    Estimate(EstimateArgs),
    /// Simulate replications of a scenario and estimate on each.
    Simulate(SimulateArgs),
    /// Monte Carlo ground truth for a scenario.
    Truth(TruthArgs),
    /// List registered scenarios.
    Scenarios(ScenariosArgs),
}

#[derive(Debug, Args)]
pub struct GridArgs {
    /// Outer penalty scales for h.
    #[arg(long = "lm-h-list", value_delimiter = ',')]
    pub lm_h_list: Option<Vec<f64>>,
    /// Outer penalty scales for g.
    #[arg(long = "lm-g-list", value_delimiter = ',')]
    pub lm_g_list: Option<Vec<f64>>,
    /// Inner penalty scales in the estimation of h.
    #[arg(long = "lm-gh-list", value_delimiter = ',')]
    pub lm_gh_list: Option<Vec<f64>>,
    /// Inner penalty scales in the estimation of g.
    #[arg(long = "lm-hg-list", value_delimiter = ',')]
    pub lm_hg_list: Option<Vec<f64>>,
    /// Base distance for the (A,L,W) kernels instead of the median heuristic.
    #[arg(long = "bw0-h")]
    pub bw0_h: Option<f64>,
    /// Base distance for the (A,L,Z) kernels.
    #[arg(long = "bw0-g")]
    pub bw0_g: Option<f64>,
    /// Inner kernel bandwidth scale.
    #[arg(long = "bw-int-scale")]
    pub bw_int_scale: Option<f64>,
    /// Outer kernel bandwidth scales.
    #[arg(long = "bw-ext-scale-list", value_delimiter = ',')]
    pub bw_ext_scale_list: Option<Vec<f64>>,
    /// Bandwidth scale of the validation risk kernels.
    #[arg(long = "bw-int-fixed-scale")]
    pub bw_int_fixed_scale: Option<f64>,
    /// Scale of the validation risk penalty.
    #[arg(long)]
    pub theta: Option<f64>,
    /// RKHS norm bound for both bridges.
    #[arg(long = "norm-bound")]
    pub norm_bound: Option<f64>,
    /// Start from the reduced grid instead of the full default grid.
    #[arg(long)]
    pub reduced_grid: bool,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Input CSV with header.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "A")]
    pub trt: String,
    #[arg(long, default_value = "Y")]
    pub outcome: String,
    /// Covariate columns (comma separated); may be empty.
    #[arg(long, value_delimiter = ',', default_value = "L")]
    pub covariates: Vec<String>,
    /// Negative control treatment columns.
    #[arg(long, value_delimiter = ',', default_value = "Z")]
    pub nct: Vec<String>,
    /// Negative control outcome columns.
    #[arg(long, value_delimiter = ',', default_value = "W")]
    pub nco: Vec<String>,
    /// Sampling weights column; enables missing treatments (two-phase data).
    #[arg(long)]
    pub weights: Option<String>,
    /// Policy, e.g. `taper:delta=0.4,eps=1,r=0,c=-2,d=2` or `shift:delta=0.4,c=-2,d=2`. Repeatable.
    #[arg(long = "policy", required = true)]
    pub policies: Vec<String>,
    /// Target population: `all` or a 0/1 column name.
    #[arg(long = "ind-s", default_value = "all")]
    pub ind_s: String,
    #[arg(long = "k-folds", default_value_t = 3)]
    pub k_folds: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Include per-row influence values in JSON output.
    #[arg(long)]
    pub emit_influence: bool,
    /// Progress messages on stderr.
    #[arg(long)]
    pub show_progress: bool,
    /// Stratify fold assignment on the treatment.
    #[arg(long)]
    pub control_folds: bool,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SimEstimator {
    /// Grid search with cross-fitting (kernel bridges).
    Cv,
    /// One grid point per bridge, cross-fitted.
    Fixed,
    /// Correctly specified parametric bridges, DR with sandwich SE.
    Parametric,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Registered scenario; see `pmtp scenarios`.
    #[arg(long)]
    pub scenario: Option<String>,
    /// Structural coefficients b1..b12 (comma separated) replacing the scenario's.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub beta: Option<Vec<f64>>,
    #[arg(long, allow_negative_numbers = true)]
    pub c: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub d: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub mu: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub gamma: Option<f64>,
    /// Policy replacing the scenario's.
    #[arg(long)]
    pub policy: Option<String>,
    /// Restrict the target to A in S.
    #[arg(long)]
    pub s_only: bool,
    /// Ground truth for the coverage column; computed by Monte Carlo when a
    /// custom model has none.
    #[arg(long, allow_negative_numbers = true)]
    pub truth: Option<f64>,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub reps: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Also write each simulated dataset as CSV.
    #[arg(long)]
    pub write_data: bool,
    /// Case-cohort second phase keeping every case and this share of non-cases.
    #[arg(long)]
    pub missing_p0: Option<f64>,
    #[arg(long, value_enum, default_value_t = SimEstimator::Cv)]
    pub estimator: SimEstimator,
    #[arg(long = "k-folds", default_value_t = 3)]
    pub k_folds: usize,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug, Args)]
pub struct TruthArgs {
    #[arg(long)]
    pub scenario: String,
    #[arg(long = "n-mc", default_value_t = 10_000_000)]
    pub n_mc: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct ScenariosArgs {
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
}

fn init_logging(verbose: u8, progress: bool) {
    let level = match (verbose, progress) {
        (0, false) => "warn",
        (0, true) | (1, _) => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .init();
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let progress = matches!(&cli.command, Command::Estimate(a) if a.show_progress);
    init_logging(cli.verbose, progress);
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    let outcome = match cli.command {
        Command::Estimate(a) => commands::estimate(&a),
        Command::Simulate(a) => commands::simulate(&a),
        Command::Truth(a) => commands::truth(&a),
        Command::Scenarios(a) => commands::scenarios(&a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &pmtp_core::Error) -> u8 {
    if e.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_INPUT
    }
}
