use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;
use sscopic::criteria::{evaluate, CriterionId, CriterionReport, EvalOptions};
use sscopic::exec::{map_slice, Execution};
use sscopic::inference::{Binning, BinningSpec, TailPolicy};
use sscopic::oracles::{
    min_p_variance_on_support, min_spin_ratio_on_window, random_state_sweep, SweepCheck,
};
use sscopic::sampling::{simulate_criterion, Noise, SampledOptions};
use sscopic::states::StateSpec;

use crate::{BinningArgs, CriterionArgs, Format, OracleArgs, OracleId, SimulateArgs, StateArgs, SweepArgs, Tails};

/// Header of `sweep --format csv`. `parameter` holds the swept value; `s_min`
/// is empty for criteria without one; an infinite ratio is written `inf`.
pub const SWEEP_CSV_HEADER: &str = "parameter,lhs,rhs,ratio,s_min,method,violated";

/// Slack below which `theorem1_sweep` fails.
const SWEEP_SLACK_FLOOR: f64 = -1e-8;
/// Value below which `spin_window` fails.
const SPIN_WINDOW_FLOOR: f64 = -1e-6;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] sscopic::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_numerical() => 2,
            _ => 1,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

fn load_state(args: &StateArgs) -> Result<StateSpec> {
    match (&args.state, &args.state_file) {
        (Some(text), None) => Ok(text.parse()?),
        (None, Some(path)) => {
            let text = fs::read_to_string(path).map_err(io_err(path))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Usage(format!("{}: not a state spec: {e}", path.display())))
        }
        _ => Err(CliError::Usage("give exactly one of --state and --state-file".into())),
    }
}

fn binning(args: &BinningArgs) -> Result<Binning> {
    match (args.bins, args.range) {
        (Some(n), Some((lo, hi))) => {
            let policy = match args.tails {
                Tails::Clip => TailPolicy::ClipToEdgeBins,
                Tails::Drop => TailPolicy::Drop,
            };
            Ok(Binning::Fixed(BinningSpec::new(lo, hi, n)?.with_tail_policy(policy)))
        }
        _ => Ok(Binning::Auto),
    }
}

fn emit(text: &str, output: Option<&Path>) -> Result<()> {
    match output {
        Some(path) => fs::write(path, text).map_err(io_err(path)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn json_line<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("outputs always serialize");
    s.push('\n');
    s
}

fn eval_options(args: &CriterionArgs) -> Result<EvalOptions> {
    Ok(EvalOptions {
        b_settings: args.b_settings.clone(),
        binning: binning(&args.binning)?,
        bound: args.bound,
    })
}

fn evaluate_spec(spec: &StateSpec, id: CriterionId, opts: &EvalOptions) -> Result<CriterionReport> {
    let state = spec.build()?;
    let mut report = evaluate(id, &state, opts)?;
    report.metadata.state = Some(spec.to_string());
    if report.metadata.cutoffs.is_none() {
        report.metadata.cutoffs = state.space().cutoffs();
    }
    Ok(report)
}

pub fn criterion(args: &CriterionArgs) -> Result<()> {
    let spec = load_state(&args.state)?;
    let id: CriterionId = args.id.parse()?;
    let report = evaluate_spec(&spec, id, &eval_options(args)?)?;
    emit(&json_line(&report), args.output.as_deref())
}

fn sweep_values(from: f64, to: f64, steps: usize) -> Result<Vec<f64>> {
    match steps {
        0 => Err(CliError::Usage("--steps must be at least 1".into())),
        1 => Ok(vec![from]),
        _ => {
            // Snapped to 1e-12 so `0.2` is written as 0.2, not 0.19999999999999998.
            let step = (to - from) / (steps - 1) as f64;
            Ok((0..steps).map(|i| ((from + step * i as f64) * 1e12).round() / 1e12).collect())
        }
    }
}

pub fn sweep(args: &SweepArgs) -> Result<()> {
    let c = &args.criterion;
    let spec = load_state(&c.state)?;
    let id: CriterionId = c.id.parse()?;
    let opts = eval_options(c)?;
    let values = sweep_values(args.from, args.to, args.steps)?;
    let specs: Vec<StateSpec> =
        values.iter().map(|&v| spec.with_param(&args.param, v)).collect::<sscopic::Result<_>>()?;
    let reports: Vec<CriterionReport> = map_slice(Execution::Parallel, &specs, |s| evaluate_spec(s, id, &opts))
        .into_iter()
        .collect::<Result<_>>()?;
    let text = match args.format {
        Format::Json => json_line(&reports),
        Format::Csv => {
            let mut out = String::from(SWEEP_CSV_HEADER);
            out.push('\n');
            for (v, r) in values.iter().zip(&reports) {
                let s_min = r.s_min.map(|s| s.to_string()).unwrap_or_default();
                let method = serde_json::to_value(r.method).expect("method serializes");
                let method = method.as_str().unwrap_or_default();
                writeln!(out, "{v},{},{},{},{s_min},{method},{}", r.lhs, r.rhs, r.ratio, r.violated)
                    .expect("writing to a string");
            }
            out
        }
    };
    emit(&text, c.output.as_deref())
}

pub fn simulate(args: &SimulateArgs) -> Result<()> {
    let spec = load_state(&args.state)?;
    let id: CriterionId = args.id.parse()?;
    let state = spec.build()?;
    let noise = Noise::new(args.noise_a, args.noise_b)?;
    let opts = SampledOptions { bin_width: args.bin_width, bound: args.bound, exec: Execution::Parallel };
    let (records, mut report) = simulate_criterion(&state, id, args.n, args.seed, noise, &opts)?;
    report.metadata.state = Some(spec.to_string());
    fs::create_dir_all(&args.out_dir).map_err(io_err(&args.out_dir))?;
    for (k, record) in records.iter().enumerate() {
        let path = args.out_dir.join(format!("record_{k}.txt"));
        fs::write(&path, record.to_text()).map_err(io_err(&path))?;
    }
    let json = json_line(&report);
    let path = args.out_dir.join("report.json");
    fs::write(&path, &json).map_err(io_err(&path))?;
    emit(&json, None)
}

#[derive(Serialize)]
struct OracleReport {
    oracle: &'static str,
    parameters: serde_json::Value,
    value: f64,
    /// Value the oracle result must not fall below.
    bound: f64,
    pass: bool,
    details: serde_json::Value,
}

fn require(v: Option<f64>, flag: &str, oracle: &str) -> Result<f64> {
    v.ok_or_else(|| CliError::Usage(format!("{oracle} needs {flag}")))
}

pub fn oracle(args: &OracleArgs) -> Result<()> {
    let report = match args.id {
        OracleId::SupportMinP => {
            let s = require(args.s, "--S", "support_min_p")?;
            let half = args.half_range.unwrap_or(s);
            let m = min_p_variance_on_support(s, half, args.grid)?;
            let bound = 4.0 / (s * s);
            OracleReport {
                oracle: "support_min_p",
                parameters: json!({ "S": s, "half_range": half, "grid": args.grid }),
                value: m.value,
                bound,
                pass: m.value >= bound,
                details: json!({
                    "coarse_value": m.coarse_value,
                    "grid_points": m.grid_points,
                    "infinite_well_value": 4.0 * std::f64::consts::PI.powi(2) / (s * s),
                }),
            }
        }
        OracleId::Theorem1Sweep => {
            let checks: Vec<SweepCheck> = if args.check == "all" {
                vec![SweepCheck::Theorem1Cv, SweepCheck::Theorem1Spin]
            } else {
                vec![args.check.parse()?]
            };
            let results = checks
                .iter()
                .map(|&c| random_state_sweep(args.n, args.seed, c))
                .collect::<sscopic::Result<Vec<_>>>()?;
            let worst = results.iter().map(|r| r.worst_slack).fold(f64::INFINITY, f64::min);
            OracleReport {
                oracle: "theorem1_sweep",
                parameters: json!({ "n": args.n, "seed": args.seed, "check": args.check }),
                value: worst,
                bound: SWEEP_SLACK_FLOOR,
                pass: worst >= SWEEP_SLACK_FLOOR,
                details: json!(results),
            }
        }
        OracleId::SpinWindow => {
            let j = require(args.j, "--j", "spin_window")?;
            let s = require(args.s, "--S", "spin_window")?;
            if !(s >= 1.0 && s.fract() == 0.0) {
                return Err(CliError::Usage(format!("spin_window needs a positive integer --S, got {s}")));
            }
            let m = min_spin_ratio_on_window(j, s as usize, args.seed)?;
            OracleReport {
                oracle: "spin_window",
                parameters: json!({ "j": j, "S": s, "seed": args.seed }),
                value: m.value,
                bound: SPIN_WINDOW_FLOOR,
                pass: m.value >= SPIN_WINDOW_FLOOR,
                details: json!(m),
            }
        }
    };
    emit(&json_line(&report), args.output.as_deref())
}
