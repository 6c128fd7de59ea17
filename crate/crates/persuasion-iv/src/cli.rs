//! Command-line front end: reproducible runs over CSV inputs with JSON
//! (and CSV) outputs.
//!
//! Every run echoes its resolved configuration back into the output for
//! provenance, serializes objects with sorted keys and shortest
//! round-trip floats, and is byte-identical across runs given the same
//! seed and input. Validation failures exit with code 1 and numerical
//! failures (weak first stage, zero-mass targets, non-convergence) with
//! code 2, both with machine-readable JSON on stderr.
//!
//! Subsampling and grid inversion parallelize internally; set
//! `RAYON_NUM_THREADS` to pin the thread count.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::estimands::{self, estimand_components, PersuasionTarget, WaldEstimand};
use crate::falsifier::{self, Restrictions};
use crate::inference::{
    ar_confidence_set, ar_p_value, ar_statistic, delta_inference, ArResult, GridSpec,
};
use crate::moments::wald_ratio;
use crate::oracle::LatentDgp;
use crate::sample::{self, BinningSpec, CsvSchema, ObservedSample};
use crate::sensitivity;

#[derive(Debug, Parser)]
#[command(
    name = "persuasion-iv",
    version,
    about = "Complier analysis for binary-instrument persuasion experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Joint and marginal potential-outcome distributions among
    /// compliers, persuasion rates, and both kinds of confidence
    /// intervals.
    Estimate(EstimateArgs),
    /// Profile the persuasion types with a covariate.
    Profile(ProfileArgs),
    /// Sharp falsification test of the identifying assumptions with
    /// subsampling critical values.
    Falsify(FalsifyArgs),
    /// Sensitivity of the joint distribution to the monotone-response
    /// assumption.
    Sensitivity(SensitivityArgs),
    /// Draw a synthetic sample from a latent-type process.
    Simulate(SimulateArgs),
    /// Weak-identification-robust confidence set for a named estimand.
    ArCi(ArCiArgs),
}

#[derive(Debug, Args)]
struct InputArgs {
    /// Input CSV with columns y,t,z and covariates.
    #[arg(long)]
    input: PathBuf,
    /// Restrict a multi-valued instrument to this pair, e.g. `0,2`;
    /// the pair is recoded to 0/1 with the higher take-up arm as 1.
    #[arg(long, value_parser = parse_pair)]
    pair: Option<(i64, i64)>,
    /// Output path for the JSON result (stdout when omitted).
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Confidence level is 1 - alpha.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Also report estimates within each cell of these covariates
    /// (comma-separated names).
    #[arg(long, value_delimiter = ',')]
    by_cell: Vec<String>,
    /// Truncate reported probabilities to [0, 1] (estimates are raw by
    /// default; truncation breaks the exact sum-to-one identity).
    #[arg(long)]
    clamp: bool,
}

#[derive(Debug, Args)]
struct ProfileArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Covariate to profile with.
    #[arg(long)]
    covariate: String,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RestrictionsArg {
    /// Instrument validity plus monotone treatment response.
    Mtr,
    /// Instrument validity only.
    IvOnly,
}

#[derive(Debug, Args)]
struct FalsifyArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Subsample size; `auto` resolves to ceil(n^(2/3)).
    #[arg(long, default_value = "auto")]
    b: String,
    /// Number of subsamples.
    #[arg(long = "M", default_value_t = 200)]
    m: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Covariate cells: `auto` (all covariates), `none`, or a
    /// comma-separated list of covariate names.
    #[arg(long, default_value = "auto")]
    cells: String,
    #[arg(long, value_enum, default_value_t = RestrictionsArg::Mtr)]
    restrictions: RestrictionsArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Json,
    Csv,
}

#[derive(Debug, Args)]
struct SensitivityArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Explicit sensitivity parameters (comma-separated); default is an
    /// even grid over the admissible interval.
    #[arg(long, value_delimiter = ',')]
    deltas: Vec<f64>,
    /// Grid size when no explicit deltas are given.
    #[arg(long, default_value_t = 6)]
    count: usize,
    #[arg(long, value_enum, default_value_t = OutputFormat::Json)]
    format: OutputFormat,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Latent-type process specification (JSON).
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    dgp: Option<PathBuf>,
    /// Built-in process: `dgp1` or `dgp1-mtr-violating`.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV path (stdout when omitted).
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EstimandArg {
    ThetaLocal,
    P11,
    P00,
    P01,
    /// P[Y(0)=1 | complier].
    MarginalY0,
    /// P[Y(1)=1 | complier].
    MarginalY1,
}

impl EstimandArg {
    fn to_estimand(self) -> WaldEstimand {
        match self {
            EstimandArg::ThetaLocal => WaldEstimand::ThetaLocal,
            EstimandArg::P11 => WaldEstimand::P11,
            EstimandArg::P00 => WaldEstimand::P00,
            EstimandArg::P01 => WaldEstimand::P01,
            EstimandArg::MarginalY0 => WaldEstimand::MarginalY0One,
            EstimandArg::MarginalY1 => WaldEstimand::MarginalY1One,
        }
    }
}

#[derive(Debug, Args)]
struct ArCiArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_enum)]
    estimand: EstimandArg,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Explicit inversion grid lower bound.
    #[arg(long)]
    grid_lo: Option<f64>,
    /// Explicit inversion grid upper bound.
    #[arg(long)]
    grid_hi: Option<f64>,
    #[arg(long, default_value_t = 2001)]
    grid_points: usize,
}

fn parse_pair(s: &str) -> std::result::Result<(i64, i64), String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err("expected two comma-separated integer levels, e.g. `0,2`".into());
    }
    let lo = parts[0]
        .trim()
        .parse()
        .map_err(|_| format!("bad level `{}`", parts[0]))?;
    let hi = parts[1]
        .trim()
        .parse()
        .map_err(|_| format!("bad level `{}`", parts[1]))?;
    Ok((lo, hi))
}

/// Entry point for the binary.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        // a closed pipe downstream is not our failure
        Err(Error::Io(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(err) => {
            let payload = json!({
                "error": {
                    "kind": err.kind(),
                    "message": err.to_string(),
                }
            });
            eprintln!("{payload}");
            if err.is_numerical() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Estimate(args) => run_estimate(args),
        Command::Profile(args) => run_profile(args),
        Command::Falsify(args) => run_falsify(args),
        Command::Sensitivity(args) => run_sensitivity(args),
        Command::Simulate(args) => run_simulate(args),
        Command::ArCi(args) => run_ar_ci(args),
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "alpha must lie in (0,1), got {alpha}"
        )))
    }
}

/// Loads the input and applies the pair restriction; the returned value
/// documents the resolved instrument handling.
fn load_input(args: &InputArgs) -> Result<(ObservedSample, Value)> {
    let sample = sample::load_csv(&args.input, &CsvSchema::default())?;
    match args.pair {
        Some((lo, hi)) => {
            let (restricted, swapped) = sample::restrict_pair(&sample, lo, hi)?;
            let config = json!({"pair": [lo, hi], "pair_swapped": swapped});
            Ok((restricted, config))
        }
        None => {
            sample.require_binary()?;
            Ok((sample, json!({"pair": Value::Null, "pair_swapped": false})))
        }
    }
}

fn write_output(path: &Option<PathBuf>, text: &str) -> Result<()> {
    match path {
        Some(p) => {
            let mut file = std::fs::File::create(p)?;
            file.write_all(text.as_bytes())?;
            file.write_all(b"\n")?;
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.write_all(b"\n")?;
        }
    }
    Ok(())
}

fn emit_json(path: &Option<PathBuf>, value: &Value) -> Result<()> {
    write_output(path, &serde_json::to_string_pretty(value)?)
}

fn merge(base: Value, extra: Value) -> Value {
    let mut map = match base {
        Value::Object(m) => m,
        _ => Map::new(),
    };
    if let Value::Object(extra) = extra {
        for (k, v) in extra {
            map.insert(k, v);
        }
    }
    Value::Object(map)
}

fn ar_ci_value(ar: &ArResult) -> Value {
    Value::Array(ar.ci.iter().map(|i| json!([i.lo, i.hi])).collect())
}

/// Point estimate, delta CI, and robust CI for one named estimand.
/// A degenerate robust inversion (zero standard error leaves no
/// default grid) reports `null` instead of failing the whole summary.
fn named_inference(
    sample: &ObservedSample,
    which: WaldEstimand,
    alpha: f64,
) -> Result<(f64, Value, Value, f64)> {
    let components = estimand_components(sample, which)?;
    let estimate = wald_ratio(&components)?;
    let delta = delta_inference(&components, alpha)?;
    let ar = match ar_confidence_set(&components, alpha, None) {
        Ok(ar) => ar_ci_value(&ar),
        Err(e) if e.is_numerical() => Value::Null,
        Err(e) => return Err(e),
    };
    Ok((estimate, json!([delta.ci_lo, delta.ci_hi]), ar, delta.se))
}

fn estimate_body(sample: &ObservedSample, alpha: f64, clamp: bool) -> Result<Value> {
    let mut joint = estimands::joint_po(sample)?;
    let mut marginal = estimands::marginal_po(sample)?;
    let clamp_applied = clamp && (!joint.is_proper() || marginal != marginal.clamped());
    if clamp {
        joint = joint.clamped();
        marginal = marginal.clamped();
    }
    let rates = estimands::persuasion_rates(sample)?;
    let diagnostic = estimands::compare_dk_local(sample)?;

    let mut ci = Map::new();
    let mut ar_ci = Map::new();
    let mut se = Map::new();
    for which in [
        WaldEstimand::ThetaLocal,
        WaldEstimand::P11,
        WaldEstimand::P00,
        WaldEstimand::P01,
        WaldEstimand::MarginalY0One,
        WaldEstimand::MarginalY1One,
    ] {
        let (_, delta, ar, stderr) = named_inference(sample, which, alpha)?;
        ci.insert(which.label().to_string(), delta);
        ar_ci.insert(which.label().to_string(), ar);
        se.insert(which.label().to_string(), json!(stderr));
    }

    Ok(json!({
        "n": sample.n(),
        "first_stage": joint.first_stage,
        "theta_local": rates.theta_local,
        "clamp_applied": clamp_applied,
        "marginal": {
            "y0": marginal.p_y0,
            "y1": marginal.p_y1,
        },
        "joint": {
            "p11": joint.p11,
            "p00": joint.p00,
            "p01": joint.p01,
        },
        "persuasion": {
            "theta_dk": rates.theta_dk,
            "theta_local_untreated": rates.theta_local_untreated,
            "dk_local_gap": diagnostic.gap,
        },
        "ci": Value::Object(ci),
        "ar_ci": Value::Object(ar_ci),
        "se": Value::Object(se),
    }))
}

fn run_estimate(args: EstimateArgs) -> Result<()> {
    check_alpha(args.alpha)?;
    let (sample, pair_config) = load_input(&args.input)?;
    let mut body = estimate_body(&sample, args.alpha, args.clamp)?;

    if !args.by_cell.is_empty() {
        let covariates: Vec<usize> = args
            .by_cell
            .iter()
            .map(|name| sample.covariate_index(name))
            .collect::<Result<_>>()?;
        let partition = sample::partition_cells(&sample, &BinningSpec::Discrete { covariates })?;
        let mut cells = Map::new();
        for (k, id) in partition.cell_ids().iter().enumerate() {
            let indices: Vec<usize> = sample
                .rows()
                .iter()
                .enumerate()
                .filter(|(_, r)| partition.cell_of(&r.x) == Some(k))
                .map(|(i, _)| i)
                .collect();
            let value = if indices.is_empty() {
                json!({"error": {"kind": "empty_cell"}})
            } else {
                let cell_sample = sample.subset(&indices)?;
                match estimate_body(&cell_sample, args.alpha, args.clamp) {
                    Ok(v) => v,
                    Err(e) => json!({"error": {"kind": e.kind(), "message": e.to_string()}}),
                }
            };
            cells.insert((*id).to_string(), value);
        }
        body = merge(body, json!({"cells": Value::Object(cells)}));
    }

    let config = merge(
        pair_config,
        json!({
            "alpha": args.alpha,
            "input": args.input.input.display().to_string(),
            "by_cell": args.by_cell,
            "clamp": args.clamp,
        }),
    );
    let out = merge(body, json!({"command": "estimate", "config": config}));
    emit_json(&args.input.output, &out)
}

fn profile_entry(profile: &estimands::TypeProfile, alpha: f64) -> Result<Value> {
    let delta = delta_inference(&profile.components, alpha)?;
    let ar = ar_confidence_set(&profile.components, alpha, None)?;
    Ok(json!({
        "estimate": profile.value,
        "se": delta.se,
        "ci": [delta.ci_lo, delta.ci_hi],
        "ar_ci": ar_ci_value(&ar),
    }))
}

fn run_profile(args: ProfileArgs) -> Result<()> {
    check_alpha(args.alpha)?;
    let (sample, pair_config) = load_input(&args.input)?;
    let j = sample.covariate_index(&args.covariate)?;

    let complier = estimands::kappa_moment_inference(&sample, move |_, _, x| x[j], 1)?;
    let untreated_zero = estimands::profile_marginal_inference(&sample, move |_, x| x[j], 0, 0)?;
    let always = estimands::profile_persuasion_inference(
        &sample,
        move |_, x| x[j],
        PersuasionTarget::Always,
    )?;
    let never = estimands::profile_persuasion_inference(
        &sample,
        move |_, x| x[j],
        PersuasionTarget::Never,
    )?;
    let mobilised = estimands::profile_persuasion_inference(
        &sample,
        move |_, x| x[j],
        PersuasionTarget::Mobilised,
    )?;

    let targets = json!({
        "complier": profile_entry(&complier, args.alpha)?,
        "marginal_y0_0": profile_entry(&untreated_zero, args.alpha)?,
        "always_voter": profile_entry(&always, args.alpha)?,
        "never_voter": profile_entry(&never, args.alpha)?,
        "mobilised": profile_entry(&mobilised, args.alpha)?,
    });
    let config = merge(
        pair_config,
        json!({
            "alpha": args.alpha,
            "covariate": args.covariate,
            "input": args.input.input.display().to_string(),
        }),
    );
    let out = json!({
        "command": "profile",
        "config": config,
        "covariate": args.covariate,
        "n": sample.n(),
        "targets": targets,
    });
    emit_json(&args.input.output, &out)
}

fn run_falsify(args: FalsifyArgs) -> Result<()> {
    check_alpha(args.alpha)?;
    let (sample, pair_config) = load_input(&args.input)?;
    let n = sample.n();
    let b = match args.b.as_str() {
        "auto" => falsifier::default_subsample_size(n),
        other => other.parse().map_err(|_| {
            Error::InvalidConfig(format!("--b must be `auto` or an integer, got `{other}`"))
        })?,
    };
    let spec = match args.cells.as_str() {
        "auto" => BinningSpec::Discrete {
            covariates: (0..sample.covariate_names().len()).collect(),
        },
        "none" => BinningSpec::None,
        list => {
            let covariates: Vec<usize> = list
                .split(',')
                .map(|name| sample.covariate_index(name.trim()))
                .collect::<Result<_>>()?;
            BinningSpec::Discrete { covariates }
        }
    };
    let partition = sample::partition_cells(&sample, &spec)?;
    let restrictions = match args.restrictions {
        RestrictionsArg::Mtr => Restrictions::IaIvPlusMtr,
        RestrictionsArg::IvOnly => Restrictions::IaIvOnly,
    };
    let result = falsifier::subsample_test(
        &sample,
        &partition,
        restrictions,
        args.alpha,
        b,
        args.m,
        args.seed,
    )?;
    let config = merge(
        pair_config,
        json!({
            "alpha": args.alpha,
            "b": b,
            "M": args.m,
            "seed": args.seed,
            "cells": args.cells,
            "restrictions": restrictions,
            "input": args.input.input.display().to_string(),
            "k": partition.k(),
        }),
    );
    let out = merge(
        serde_json::to_value(&result)?,
        json!({"command": "falsify", "config": config}),
    );
    emit_json(&args.input.output, &out)
}

fn run_sensitivity(args: SensitivityArgs) -> Result<()> {
    let (sample, pair_config) = load_input(&args.input)?;
    let marginals = estimands::marginal_po(&sample)?;
    let deltas = if args.deltas.is_empty() {
        sensitivity::default_deltas(&marginals, args.count)
    } else {
        args.deltas.clone()
    };
    let points = sensitivity::sensitivity_curve(&marginals, &deltas)?;

    if args.format == OutputFormat::Csv {
        let mut text = String::from("delta,p11,p00,p01,out_of_range\n");
        for p in &points {
            text.push_str(&format!(
                "{},{},{},{},{}\n",
                p.delta, p.p11, p.p00, p.p01, p.out_of_range
            ));
        }
        return write_output(&args.input.output, text.trim_end());
    }

    let config = merge(
        pair_config,
        json!({
            "deltas": deltas,
            "format": "json",
            "input": args.input.input.display().to_string(),
        }),
    );
    let out = json!({
        "command": "sensitivity",
        "config": config,
        "marginals": {
            "y0_1": marginals.y0_one(),
            "y1_1": marginals.y1_one(),
        },
        "max_delta": sensitivity::max_delta(&marginals),
        "points": serde_json::to_value(&points)?,
    });
    emit_json(&args.input.output, &out)
}

fn run_simulate(args: SimulateArgs) -> Result<()> {
    let dgp = match (&args.dgp, &args.preset) {
        (Some(path), None) => {
            let text = std::fs::read_to_string(path)?;
            LatentDgp::from_json(&text)?
        }
        (None, Some(name)) => match name.as_str() {
            "dgp1" => LatentDgp::dgp1(),
            "dgp1-mtr-violating" => LatentDgp::dgp1_mtr_violating(),
            other => {
                return Err(Error::InvalidConfig(format!(
                    "unknown preset `{other}`; available: dgp1, dgp1-mtr-violating"
                )))
            }
        },
        _ => {
            return Err(Error::InvalidConfig(
                "exactly one of --dgp and --preset is required".into(),
            ))
        }
    };
    let sample = dgp.draw_sample(args.n, args.seed)?;
    match &args.output {
        Some(path) => sample::write_csv(&sample, path)?,
        None => {
            let mut buf = Vec::new();
            sample::write_csv_writer(&sample, &mut buf)?;
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(&buf)?;
        }
    }
    Ok(())
}

fn run_ar_ci(args: ArCiArgs) -> Result<()> {
    check_alpha(args.alpha)?;
    let (sample, pair_config) = load_input(&args.input)?;
    let which = args.estimand.to_estimand();
    let components = estimand_components(&sample, which)?;
    let estimate = wald_ratio(&components)?;
    let delta = delta_inference(&components, args.alpha)?;
    let grid = match (args.grid_lo, args.grid_hi) {
        (Some(lo), Some(hi)) => Some(GridSpec {
            lo,
            hi,
            points: args.grid_points,
        }),
        (None, None) => None,
        _ => {
            return Err(Error::InvalidConfig(
                "--grid-lo and --grid-hi must be given together".into(),
            ))
        }
    };
    let ar = ar_confidence_set(&components, args.alpha, grid)?;
    let config = merge(
        pair_config,
        json!({
            "alpha": args.alpha,
            "estimand": which.label(),
            "grid_points": args.grid_points,
            "input": args.input.input.display().to_string(),
        }),
    );
    let out = json!({
        "command": "ar-ci",
        "config": config,
        "estimand": which.label(),
        "estimate": estimate,
        "se": delta.se,
        "delta_ci": [delta.ci_lo, delta.ci_hi],
        "ar_ci": ar_ci_value(&ar),
        "statistic": ar_statistic(&components, 0.0).ok(),
        "p_value": ar_p_value(&components, 0.0).ok(),
    });
    emit_json(&args.input.output, &out)
}
