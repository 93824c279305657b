//! `divlate`: simulate data, estimate distributional IV-LATE curves and run
//! Monte Carlo studies.
//!
//! Every subcommand accepts `--config PATH`, a JSON object whose keys mirror
//! the long flag names. Flags given on the command line win over the file.
//! The resolved configuration is printed to stderr as JSON.
//!
//! Exit codes: 0 success, 2 usage or validation error, 3 runtime failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use divlate::data::{build_ygrid, load_csv, write_csv, ColumnSchema};
use divlate::dgp::{generate, Dgp, DGP_DIM};
use divlate::estimator::{estimate_with, ScoreForm};
use divlate::forest::ForestConfig;
use divlate::kan::KanConfig;
use divlate::montecarlo::{run_montecarlo, summarize, write_summary_csv, McBackend, McConfig};
use divlate::nuisance::NuisanceBackend;
use divlate::Error;

#[derive(Parser)]
#[command(name = "divlate", version, about = "Distributional IV-LATE estimation with KAN and forest nuisances")]
struct Cli {
    /// Worker threads (default: all cores). Output does not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a simulated dataset.
    Simulate(SimulateArgs),
    /// Estimate the curve on a CSV dataset.
    Estimate(EstimateArgs),
    /// Monte Carlo bias and RMSE study.
    Montecarlo(MontecarloArgs),
}

#[derive(Args, Deserialize, Default)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct SimulateArgs {
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    dgp: Option<u8>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Sidecar CSV of latent variables (complier flag, potential outcomes).
    #[arg(long)]
    latents: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

#[derive(Args, Deserialize, Default)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct EstimateArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    outcome: Option<String>,
    #[arg(long)]
    treatment: Option<String>,
    #[arg(long)]
    instrument: Option<String>,
    /// Comma-separated covariate columns.
    #[arg(long)]
    covariates: Option<String>,
    /// `kan` or `rf`.
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    ygrid_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// `orthogonal` (default) or `published`.
    #[arg(long)]
    score_form: Option<String>,
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

#[derive(Args, Deserialize, Default)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct MontecarloArgs {
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    dgp: Option<u8>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    reps: Option<usize>,
    /// Comma-separated list of `kan`, `rf`, `oracle`.
    #[arg(long)]
    backends: Option<String>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    ygrid_size: Option<usize>,
    /// Oracle sample size for the true curve.
    #[arg(long)]
    oracle_m: Option<usize>,
    /// Optional JSON dump of every replication curve.
    #[arg(long)]
    json: Option<PathBuf>,
    #[arg(long)]
    score_form: Option<String>,
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

/// Failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure { code: if e.is_usage() { 2 } else { 3 }, message: e.to_string() }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { code: 2, message: message.into() }
}

fn read_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, Failure> {
    let Some(path) = path else { return Ok(T::default()) };
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| usage(format!("invalid config {}: {e}", path.display())))
}

fn required<T>(value: Option<T>, flag: &str) -> Result<T, Failure> {
    value.ok_or_else(|| usage(format!("missing required --{flag}")))
}

fn echo<T: Serialize>(resolved: &T) {
    eprintln!("{}", serde_json::to_string(resolved).expect("config serializes"));
}

fn parse_dgp(id: u8) -> Result<Dgp, Failure> {
    Dgp::try_from(id).map_err(|e| usage(e.to_string()))
}

#[derive(Serialize)]
struct ResolvedSimulate<'a> {
    command: &'a str,
    dgp: u8,
    n: usize,
    seed: u64,
    out: &'a Path,
    latents: Option<&'a Path>,
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), Failure> {
    let file: SimulateArgs = read_config(args.config.as_deref())?;
    let dgp = args.dgp.or(file.dgp).unwrap_or(2);
    let n = required(args.n.or(file.n), "n")?;
    let seed = args.seed.or(file.seed).unwrap_or(0);
    let out = required(args.out.or(file.out), "out")?;
    let latents = args.latents.or(file.latents);
    echo(&ResolvedSimulate { command: "simulate", dgp, n, seed, out: &out, latents: latents.as_deref() });

    let dgp = parse_dgp(dgp)?;
    if n == 0 {
        return Err(usage("--n must be at least 1"));
    }
    let (data, lat) = generate(dgp, n, seed)?;
    write_csv(&data, &out, &ColumnSchema::simulated(DGP_DIM))?;
    if let Some(path) = latents {
        lat.write_csv(path)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct ResolvedEstimate<'a> {
    command: &'a str,
    data: &'a Path,
    outcome: &'a str,
    treatment: &'a str,
    instrument: &'a str,
    covariates: &'a [String],
    backend: &'a NuisanceBackend,
    folds: usize,
    ygrid_size: usize,
    ygrid_percentiles: (f64, f64),
    seed: u64,
    score_form: ScoreForm,
    out: &'a Path,
}

fn backend_named(name: &str, seed: u64) -> Result<NuisanceBackend, Failure> {
    match name {
        "kan" => Ok(NuisanceBackend::Kan(KanConfig { seed, ..Default::default() })),
        "rf" | "forest" => Ok(NuisanceBackend::Forest(ForestConfig { seed, ..Default::default() })),
        other => Err(usage(format!("unknown backend '{other}', expected kan or rf"))),
    }
}

fn cmd_estimate(args: EstimateArgs) -> Result<(), Failure> {
    let file: EstimateArgs = read_config(args.config.as_deref())?;
    let data_path = required(args.data.or(file.data), "data")?;
    let outcome = args.outcome.or(file.outcome).unwrap_or_else(|| "y".into());
    let treatment = args.treatment.or(file.treatment).unwrap_or_else(|| "w".into());
    let instrument = args.instrument.or(file.instrument).unwrap_or_else(|| "z".into());
    let covariates: Vec<String> = required(args.covariates.or(file.covariates), "covariates")?
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect();
    let seed = args.seed.or(file.seed).unwrap_or(0);
    let backend = backend_named(&args.backend.or(file.backend).unwrap_or_else(|| "rf".into()), seed)?;
    let folds = args.folds.or(file.folds).unwrap_or(5);
    let ygrid_size = args.ygrid_size.or(file.ygrid_size).unwrap_or(30);
    let score_form: ScoreForm = args.score_form.or(file.score_form).as_deref().unwrap_or("orthogonal").parse()?;
    let out = required(args.out.or(file.out), "out")?;
    let percentiles = (1.0, 99.0);
    echo(&ResolvedEstimate {
        command: "estimate",
        data: &data_path,
        outcome: &outcome,
        treatment: &treatment,
        instrument: &instrument,
        covariates: &covariates,
        backend: &backend,
        folds,
        ygrid_size,
        ygrid_percentiles: percentiles,
        seed,
        score_form,
        out: &out,
    });

    if covariates.is_empty() {
        return Err(usage("--covariates must name at least one column"));
    }
    let schema = ColumnSchema { outcome, treatment, instrument, covariates };
    let data = load_csv::<f64>(&data_path, &schema)?;
    let grid = build_ygrid(data.y(), ygrid_size, percentiles.0, percentiles.1)?;
    let est = estimate_with(&data, &grid, &backend, score_form, folds, seed)?;
    est.curve.write_csv(&out)?;
    Ok(())
}

fn cmd_montecarlo(args: MontecarloArgs) -> Result<(), Failure> {
    let file: MontecarloArgs = read_config(args.config.as_deref())?;
    let defaults = McConfig::default();
    let dgp = parse_dgp(args.dgp.or(file.dgp).unwrap_or(2))?;
    let backends = McBackend::parse_list(&args.backends.or(file.backends).unwrap_or_else(|| "kan,rf".into()))?;
    let score_form: ScoreForm = args.score_form.or(file.score_form).as_deref().unwrap_or("orthogonal").parse()?;
    let config = McConfig {
        dgp,
        n: args.n.or(file.n).unwrap_or(defaults.n),
        reps: args.reps.or(file.reps).unwrap_or(defaults.reps),
        folds: args.folds.or(file.folds).unwrap_or(defaults.folds),
        backends,
        ygrid_size: args.ygrid_size.or(file.ygrid_size).unwrap_or(defaults.ygrid_size),
        seed: args.seed.or(file.seed).unwrap_or(0),
        oracle_m: args.oracle_m.or(file.oracle_m).unwrap_or(defaults.oracle_m),
        score_form,
        ..defaults
    };
    let out = required(args.out.or(file.out), "out")?;
    let json = args.json.or(file.json);

    #[derive(Serialize)]
    struct Resolved<'a> {
        command: &'a str,
        #[serde(flatten)]
        config: &'a McConfig,
        out: &'a Path,
        json: Option<&'a Path>,
    }
    echo(&Resolved { command: "montecarlo", config: &config, out: &out, json: json.as_deref() });

    let result = run_montecarlo(&config)?;
    for run in &result.runs {
        if !run.failures.is_empty() {
            eprintln!("{}: {} of {} replications failed and were excluded", run.backend, run.failures.len(), config.reps);
        }
    }
    write_summary_csv(&summarize(&result)?, &out)?;
    if let Some(path) = json {
        result.write_json(path)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if threads == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: cannot start thread pool: {e}");
            return ExitCode::from(3);
        }
    }
    let outcome = match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Montecarlo(a) => cmd_montecarlo(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
