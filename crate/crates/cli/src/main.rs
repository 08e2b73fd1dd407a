//! `sscopic` command-line front end.
//!
//! Exit codes: 0 on success (a violated criterion is a result, not a
//! failure), 1 for usage and input errors, 2 when the numerics fail
//! (truncation or convergence checks, underpopulated sample bins).

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Seed used by `simulate` and the randomized oracles when `--seed` is absent.
pub const DEFAULT_SEED: u64 = 7;

#[derive(Parser, Debug)]
#[command(name = "sscopic", version, about = "Uncertainty-relation criteria for S-scopic superpositions and EPR paradoxes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate one criterion analytically and print the report as JSON.
    Criterion(CriterionArgs),
    /// Evaluate a criterion over a range of one state parameter.
    Sweep(SweepArgs),
    /// Sample measurement records from a state and estimate a criterion from them.
    Simulate(SimulateArgs),
    /// Run a brute-force check of one of the bounds.
    Oracle(OracleArgs),
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
struct StateArgs {
    /// State in the `name:key=value,...` form, e.g. `tmss:r=0.8,cutoff=40`.
    #[arg(long)]
    state: Option<String>,
    /// JSON file holding a state spec.
    #[arg(long)]
    state_file: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BinningArgs {
    /// Number of bins for continuous B outcomes (needs --range).
    #[arg(long, requires = "range")]
    bins: Option<usize>,
    /// Bin range `LO,HI` for continuous B outcomes (needs --bins).
    #[arg(long, requires = "bins", value_parser = parse_range, allow_hyphen_values = true)]
    range: Option<(f64, f64)>,
    /// What happens to B outcomes outside the bin range.
    #[arg(long, value_enum, default_value_t = Tails::Clip, requires = "bins")]
    tails: Tails,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Tails {
    Clip,
    Drop,
}

#[derive(Args, Debug)]
struct CriterionArgs {
    #[command(flatten)]
    state: StateArgs,
    /// Criterion id, e.g. `epr_product_cv`.
    #[arg(long)]
    id: String,
    /// B observables, comma separated (`x`, `p`, `x@THETA`, `n`, `jx`, `jy`, `jz`).
    #[arg(long, value_delimiter = ',')]
    b_settings: Option<Vec<String>>,
    #[command(flatten)]
    binning: BinningArgs,
    /// Size S for `mr_bound`, bound D for `epr_sum_spin`.
    #[arg(long)]
    bound: Option<f64>,
    /// Write here instead of standard output.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    criterion: CriterionArgs,
    /// State parameter to sweep (`r`, `alpha`, `n`, `j`, `theta`, `phi`, `cutoff`).
    #[arg(long)]
    param: String,
    #[arg(long, allow_hyphen_values = true)]
    from: f64,
    #[arg(long, allow_hyphen_values = true)]
    to: f64,
    /// Number of evenly spaced points, endpoints included.
    #[arg(long)]
    steps: usize,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    state: StateArgs,
    #[arg(long)]
    id: String,
    /// Pairs sampled per record.
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Standard deviation of Gaussian noise added to A outcomes.
    #[arg(long, default_value_t = 0.0)]
    noise_a: f64,
    /// Standard deviation of Gaussian noise added to B outcomes.
    #[arg(long, default_value_t = 0.0)]
    noise_b: f64,
    /// Width of the bins used to condition on B outcomes.
    #[arg(long)]
    bin_width: Option<f64>,
    /// Size S for `mr_bound`, bound D for `epr_sum_spin`.
    #[arg(long)]
    bound: Option<f64>,
    /// Directory for `record_<k>.txt` files and `report.json`.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
#[value(rename_all = "snake_case")]
enum OracleId {
    SupportMinP,
    Theorem1Sweep,
    SpinWindow,
}

#[derive(Args, Debug)]
struct OracleArgs {
    #[arg(long, value_enum)]
    id: OracleId,
    /// Superposition size (support width, or window length for `spin_window`).
    #[arg(long = "S")]
    s: Option<f64>,
    /// Spin quantum number for `spin_window`.
    #[arg(long)]
    j: Option<f64>,
    /// Random states drawn by `theorem1_sweep`.
    #[arg(long, default_value_t = 500)]
    n: usize,
    /// Inequality checked by `theorem1_sweep`: `theorem1_cv`, `theorem1_spin`, `robertson`, or `all`.
    #[arg(long, default_value = "all")]
    check: String,
    /// Grid points for `support_min_p`.
    #[arg(long, default_value_t = sscopic::oracles::DEFAULT_GRID_POINTS)]
    grid: usize,
    /// Half-width of the `support_min_p` grid (defaults to S).
    #[arg(long)]
    half_range: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long)]
    output: Option<PathBuf>,
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(',').ok_or("expected LO,HI")?;
    let parse = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("`{v}`: {e}"));
    Ok((parse(lo)?, parse(hi)?))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Criterion(a) => commands::criterion(&a),
        Command::Sweep(a) => commands::sweep(&a),
        Command::Simulate(a) => commands::simulate(&a),
        Command::Oracle(a) => commands::oracle(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
