//! Command-line front end: configuration loading, presets, CSV output and
//! the `run`, `sweep` and `compare` subcommands.
//!
//! Exit codes: 0 on success, 2 for configuration or usage errors, 3 when the
//! output directory cannot be written.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::config::{AlgorithmKind, ExperimentConfig};
use crate::error::{Error, Result};
use crate::experiment::{
    convergence_threshold, convergence_time, emse_db, moving_average, run_monte_carlo,
    AlgorithmResult, MonteCarloResult,
};

pub const MANIFEST_VERSION: &str = "combofilter-manifest/1";
pub const MANIFEST_FILE: &str = "manifest.toml";
/// Width of the optional moving-average smoothing.
pub const SMOOTHING_WIDTH: usize = 100;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_OUTPUT: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "combofilter",
    version,
    about = "Convex-combination NSA filter experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a Monte Carlo experiment and write learning curves and a report.
    Run(RunArgs),
    /// Repeat an experiment over values of one combiner parameter.
    Sweep(SweepArgs),
    /// Run two or more algorithms on shared signals and write their EMSE difference.
    Compare(CompareArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Built-in configuration (example1 or example2).
    #[arg(long, env = "COMBOFILTER_PRESET", conflicts_with = "config")]
    pub preset: Option<String>,
    /// TOML experiment configuration or a manifest written by a previous run.
    #[arg(long, env = "COMBOFILTER_CONFIG")]
    pub config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, env = "COMBOFILTER_OUT")]
    pub out: PathBuf,
    /// Override the number of Monte Carlo trials.
    #[arg(long, env = "COMBOFILTER_TRIALS")]
    pub trials: Option<u64>,
    /// Override the master seed.
    #[arg(long, env = "COMBOFILTER_SEED")]
    pub seed: Option<u64>,
    /// Worker threads. Results do not depend on this.
    #[arg(long, env = "COMBOFILTER_JOBS")]
    pub jobs: Option<usize>,
    /// Also write 100-sample moving-average curves.
    #[arg(long, env = "COMBOFILTER_SMOOTH")]
    pub smooth: bool,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    /// Transfer window length.
    #[value(name = "N0", alias = "n0", alias = "window")]
    N0,
    /// Sign-rule mixing step-size.
    #[value(name = "rho_a", alias = "rho-a")]
    RhoA,
}

impl SweepParam {
    fn label(self) -> &'static str {
        match self {
            SweepParam::N0 => "N0",
            SweepParam::RhoA => "rho_a",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_enum)]
    pub param: SweepParam,
    /// Comma-separated parameter values.
    #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
    pub values: Vec<f64>,
    /// Combination algorithm to sweep; defaults to the first one configured.
    #[arg(long)]
    pub algorithm: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Two algorithm names `a,b`; the delta is `emse_a − emse_b`. Defaults to
    /// the first two configured algorithms.
    #[arg(long, value_delimiter = ',', num_args = 1..=2)]
    pub pair: Option<Vec<String>>,
}

/// Everything needed to reproduce a run's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub format_version: String,
    pub command: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_source: Option<String>,
    pub output_dir: String,
    #[serde(default)]
    pub smooth: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compare_pair: Option<Vec<String>>,
    pub experiment: ExperimentConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepRecord {
    pub param: SweepParam,
    pub algorithm: String,
    pub values: Vec<f64>,
}

impl RunManifest {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest is always representable in TOML")
    }

    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            path: path.to_owned(),
            message: e.to_string(),
        })
    }
}

/// Reads an experiment configuration or a manifest, without validating it.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|source| Error::Input {
        path: path.to_owned(),
        source,
    })?;
    parse_config(&text, path)
}

pub fn parse_config(text: &str, path: &Path) -> Result<ExperimentConfig> {
    let parse_err = |e: toml::de::Error| Error::Parse {
        path: path.to_owned(),
        message: e.to_string(),
    };
    let table: toml::Table = text.parse().map_err(parse_err)?;
    if table.contains_key("format_version") {
        let manifest = RunManifest::from_toml(text, path)?;
        if manifest.format_version != MANIFEST_VERSION {
            return Err(Error::invalid(
                "format_version",
                format!(
                    "unsupported manifest version {:?}, expected {MANIFEST_VERSION:?}",
                    manifest.format_version
                ),
            ));
        }
        Ok(manifest.experiment)
    } else {
        toml::from_str(text).map_err(parse_err)
    }
}

/// Resolves preset or file, applies flag overrides and validates.
pub fn resolve_config(args: &CommonArgs) -> Result<(ExperimentConfig, Option<String>)> {
    let (mut config, source) = match (&args.preset, &args.config) {
        (Some(name), None) => (
            ExperimentConfig::preset(name)?,
            Some(format!("preset:{name}")),
        ),
        (None, Some(path)) => (load_config(path)?, Some(path.display().to_string())),
        (Some(_), Some(_)) => {
            return Err(Error::invalid(
                "config",
                "give either --preset or --config, not both",
            ))
        }
        (None, None) => {
            return Err(Error::invalid(
                "config",
                "one of --preset or --config is required",
            ))
        }
    };
    if let Some(trials) = args.trials {
        config.trials = trials;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    config.validate()?;
    Ok((config, source))
}

fn jobs(args: &CommonArgs) -> usize {
    args.jobs.unwrap_or_else(|| {
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
    })
}

/// Locale-independent rendering with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".to_owned()
    } else if v == f64::INFINITY {
        "inf".to_owned()
    } else if v == f64::NEG_INFINITY {
        "-inf".to_owned()
    } else {
        format!("{v:.16e}")
    }
}

fn fmt_time(t: Option<usize>) -> String {
    t.map_or_else(|| "-1".to_owned(), |t| t.to_string())
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|source| Error::Output { path, source })
}

fn prepare_out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Output {
        path: dir.to_owned(),
        source,
    })
}

pub fn curve_csv(result: &AlgorithmResult) -> String {
    let mut out = String::from("n,emse_db,emse_raw\n");
    for (n, &raw) in result.curve.mean_sq.iter().enumerate() {
        let _ = writeln!(out, "{n},{},{}", fmt_f64(emse_db(raw)), fmt_f64(raw));
    }
    out
}

pub fn smoothed_curve_csv(result: &AlgorithmResult) -> String {
    let smooth = moving_average(&result.curve.mean_sq, SMOOTHING_WIDTH);
    let mut out = String::from("n,emse_db,emse_raw\n");
    for (n, &raw) in smooth.iter().enumerate() {
        let _ = writeln!(out, "{n},{},{}", fmt_f64(emse_db(raw)), fmt_f64(raw));
    }
    out
}

pub fn mixing_csv(result: &AlgorithmResult) -> Option<String> {
    let mixing = result.mixing.as_ref()?;
    let mut out = String::from("n,lambda_mean,a_mean\n");
    for (n, (l, a)) in mixing.lambda_mean.iter().zip(&mixing.a_mean).enumerate() {
        let _ = writeln!(out, "{n},{},{}", fmt_f64(*l), fmt_f64(*a));
    }
    Some(out)
}

pub const REPORT_HEADER: &str = "algorithm,j_ex_1,j_ex_2,j_ex_12,j_ex,j_ex_u,lambda_bar,lambda_var,steady_state_db,convergence_time,verdict";

pub fn report_csv(config: &ExperimentConfig, result: &MonteCarloResult) -> String {
    let mut out = format!("{REPORT_HEADER}\n");
    for alg in &result.algorithms {
        let t = convergence_time(&alg.curve.db(), convergence_threshold(config, alg));
        let fields = match &alg.report {
            Some(r) => [
                r.j_fast,
                r.j_slow,
                r.j_cross,
                r.j_combined,
                r.j_reported,
                r.lambda_bar,
                r.lambda_var,
            ]
            .map(fmt_f64)
            .join(","),
            None => {
                let j = fmt_f64(alg.steady_state);
                format!(",,,{j},,,")
            }
        };
        let verdict = alg.report.map_or("n/a", |r| r.verdict.as_str());
        let _ = writeln!(
            out,
            "{},{fields},{},{},{verdict}",
            alg.name,
            fmt_f64(alg.steady_state_db()),
            fmt_time(t)
        );
    }
    out
}

fn write_curves(dir: &Path, result: &AlgorithmResult, smooth: bool) -> Result<()> {
    write_file(
        dir,
        &format!("curve_{}.csv", result.name),
        &curve_csv(result),
    )?;
    if smooth {
        write_file(
            dir,
            &format!("curve_{}_smoothed.csv", result.name),
            &smoothed_curve_csv(result),
        )?;
    }
    if let Some(csv) = mixing_csv(result) {
        write_file(dir, &format!("mixing_{}.csv", result.name), &csv)?;
    }
    Ok(())
}

fn manifest(
    command: &str,
    config: &ExperimentConfig,
    source: Option<String>,
    out: &Path,
    smooth: bool,
) -> RunManifest {
    RunManifest {
        format_version: MANIFEST_VERSION.to_owned(),
        command: command.to_owned(),
        config_source: source,
        output_dir: out.display().to_string(),
        smooth,
        sweep: None,
        compare_pair: None,
        experiment: config.clone(),
    }
}

pub fn cmd_run(args: &RunArgs) -> Result<MonteCarloResult> {
    let common = &args.common;
    let (config, source) = resolve_config(common)?;
    prepare_out_dir(&common.out)?;
    let result = run_monte_carlo(&config, jobs(common))?;
    for alg in &result.algorithms {
        write_curves(&common.out, alg, common.smooth)?;
    }
    write_file(&common.out, "report.csv", &report_csv(&config, &result))?;
    let m = manifest("run", &config, source, &common.out, common.smooth);
    write_file(&common.out, MANIFEST_FILE, &m.to_toml())?;
    Ok(result)
}

/// One row of `sweep_summary.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub steady_state_db: f64,
    pub convergence_time: Option<usize>,
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<Vec<SweepRow>> {
    let common = &args.common;
    let (base, source) = resolve_config(common)?;
    if args.values.is_empty() {
        return Err(Error::invalid("values", "at least one value is required"));
    }
    let target = match &args.algorithm {
        Some(name) => base
            .algorithms
            .iter()
            .position(|a| &a.name == name)
            .ok_or_else(|| Error::invalid("algorithm", format!("no algorithm named {name:?}")))?,
        None => base
            .algorithms
            .iter()
            .position(|a| a.is_combination())
            .ok_or_else(|| Error::invalid("algorithms", "sweeps need a combination algorithm"))?,
    };
    if !base.algorithms[target].is_combination() {
        return Err(Error::invalid(
            "algorithm",
            format!(
                "{:?} is not a combination algorithm",
                base.algorithms[target].name
            ),
        ));
    }

    let mut configs = Vec::with_capacity(args.values.len());
    for (i, &value) in args.values.iter().enumerate() {
        let mut config = base.clone();
        let mut alg = config.algorithms[target].clone();
        if let AlgorithmKind::Combination { combiner, .. } = &mut alg.kind {
            match args.param {
                SweepParam::N0 => {
                    if !(value >= 1.0 && value.fract() == 0.0 && value <= u32::MAX as f64) {
                        return Err(Error::invalid(
                            format!("values[{i}]"),
                            format!("N0 must be a positive integer, got {value}"),
                        ));
                    }
                    combiner.window = value as u64;
                }
                SweepParam::RhoA => combiner.rho_a = value,
            }
        }
        alg.name = format!("{}_{}", args.param.label(), value);
        config.algorithms = vec![alg];
        config.validate().map_err(|e| match e {
            Error::InvalidConfig { reason, .. } => Error::invalid(format!("values[{i}]"), reason),
            other => other,
        })?;
        configs.push(config);
    }

    prepare_out_dir(&common.out)?;
    let mut rows = Vec::with_capacity(configs.len());
    let mut summary = String::from("value,steady_state_db,convergence_time\n");
    for (config, &value) in configs.iter().zip(&args.values) {
        let result = run_monte_carlo(config, jobs(common))?;
        let alg = &result.algorithms[0];
        write_curves(&common.out, alg, common.smooth)?;
        let row = SweepRow {
            value,
            steady_state_db: alg.steady_state_db(),
            convergence_time: convergence_time(&alg.curve.db(), convergence_threshold(config, alg)),
        };
        let _ = writeln!(
            summary,
            "{},{},{}",
            value,
            fmt_f64(row.steady_state_db),
            fmt_time(row.convergence_time)
        );
        rows.push(row);
    }
    write_file(&common.out, "sweep_summary.csv", &summary)?;
    let mut m = manifest("sweep", &base, source, &common.out, common.smooth);
    m.sweep = Some(SweepRecord {
        param: args.param,
        algorithm: base.algorithms[target].name.clone(),
        values: args.values.clone(),
    });
    write_file(&common.out, MANIFEST_FILE, &m.to_toml())?;
    Ok(rows)
}

/// `emse_a − emse_b` in dB; equal values (including matching infinities) give 0.
pub fn delta_db(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let (dx, dy) = (emse_db(x), emse_db(y));
            if dx == dy {
                0.0
            } else {
                dx - dy
            }
        })
        .collect()
}

pub fn cmd_compare(args: &CompareArgs) -> Result<Vec<f64>> {
    let common = &args.common;
    let (config, source) = resolve_config(common)?;
    if config.algorithms.len() < 2 {
        return Err(Error::invalid(
            "algorithms",
            format!(
                "compare needs at least 2 algorithms, got {}",
                config.algorithms.len()
            ),
        ));
    }
    let pair = match &args.pair {
        Some(p) if p.len() == 2 => p.clone(),
        Some(p) => {
            return Err(Error::invalid(
                "pair",
                format!("expected 2 names, got {}", p.len()),
            ));
        }
        None => vec![
            config.algorithms[0].name.clone(),
            config.algorithms[1].name.clone(),
        ],
    };
    for name in &pair {
        if config.algorithm(name).is_none() {
            return Err(Error::invalid(
                "pair",
                format!("no algorithm named {name:?}"),
            ));
        }
    }
    prepare_out_dir(&common.out)?;
    let result = run_monte_carlo(&config, jobs(common))?;
    for alg in &result.algorithms {
        write_curves(&common.out, alg, common.smooth)?;
    }
    let a = result.get(&pair[0]).expect("checked above");
    let b = result.get(&pair[1]).expect("checked above");
    let delta = delta_db(&a.curve.mean_sq, &b.curve.mean_sq);
    let mut csv = String::from("n,delta_db\n");
    for (n, d) in delta.iter().enumerate() {
        let _ = writeln!(csv, "{n},{}", fmt_f64(*d));
    }
    write_file(&common.out, "delta.csv", &csv)?;
    write_file(&common.out, "report.csv", &report_csv(&config, &result))?;
    let mut m = manifest("compare", &config, source, &common.out, common.smooth);
    m.compare_pair = Some(pair);
    write_file(&common.out, MANIFEST_FILE, &m.to_toml())?;
    Ok(delta)
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Output { .. } => EXIT_OUTPUT,
        Error::InvalidConfig { .. } | Error::Parse { .. } | Error::Input { .. } => EXIT_CONFIG,
    }
}

/// Dispatches a parsed command line and maps errors to exit codes.
pub fn execute(cli: Cli) -> i32 {
    let outcome = match &cli.command {
        Command::Run(args) => cmd_run(args).map(|_| ()),
        Command::Sweep(args) => cmd_sweep(args).map(|_| ()),
        Command::Compare(args) => cmd_compare(args).map(|_| ()),
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code(&err)
        }
    }
}
