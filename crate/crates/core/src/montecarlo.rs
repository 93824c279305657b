//! Monte Carlo replication of the cross-fitted estimator on the simulation
//! designs, reporting average bias and RMSE per backend and grid level.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{build_ygrid, YGrid};
use crate::dgp::{generate, true_divlate, Dgp, Dgp2OracleNuisance};
use crate::error::{Error, Result};
use crate::estimator::{estimate_with, CrossFitEstimate, ScoreForm};
use crate::forest::ForestConfig;
use crate::kan::KanConfig;
use crate::nuisance::NuisanceBackend;
use crate::numeric::compensated_sum;
use crate::rng::derive_seed;

/// Largest tolerated share of failed replications per backend.
pub const MAX_FAILURE_RATE: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum McBackend {
    Kan(KanConfig),
    Forest(ForestConfig),
    /// True design-2 nuisances.
    Oracle,
}

impl McBackend {
    pub fn label(&self) -> &'static str {
        match self {
            McBackend::Kan(_) => "kan",
            McBackend::Forest(_) => "rf",
            McBackend::Oracle => "oracle",
        }
    }

    pub fn parse_list(s: &str) -> Result<Vec<McBackend>> {
        s.split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(|t| match t {
                "kan" => Ok(McBackend::Kan(KanConfig::default())),
                "rf" | "forest" => Ok(McBackend::Forest(ForestConfig::default())),
                "oracle" => Ok(McBackend::Oracle),
                other => Err(Error::Config(format!("unknown backend '{other}'"))),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McConfig {
    pub dgp: Dgp,
    pub n: usize,
    pub reps: usize,
    pub folds: usize,
    pub backends: Vec<McBackend>,
    pub ygrid_size: usize,
    /// Percentile bounds of the reference draw used for the grid.
    pub grid_percentiles: (f64, f64),
    /// Explicit grid levels; overrides the reference-draw grid.
    pub levels: Option<Vec<f64>>,
    pub seed: u64,
    pub oracle_m: usize,
    pub reference_n: usize,
    pub score_form: ScoreForm,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            dgp: Dgp::Two,
            n: 2000,
            reps: 50,
            folds: 3,
            backends: vec![McBackend::Kan(KanConfig::default()), McBackend::Forest(ForestConfig::default())],
            ygrid_size: 30,
            grid_percentiles: (0.0, 100.0),
            levels: None,
            seed: 0,
            oracle_m: 100_000,
            reference_n: 20_000,
            score_form: ScoreForm::Orthogonal,
        }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::Config("reps must be at least 1".into()));
        }
        if self.folds < 2 {
            return Err(Error::Config(format!("need at least 2 folds, got {}", self.folds)));
        }
        if self.n < 2 * self.folds {
            return Err(Error::Config(format!("n = {} is below 2K = {}", self.n, 2 * self.folds)));
        }
        if self.backends.is_empty() {
            return Err(Error::Config("no backends requested".into()));
        }
        let mut labels: Vec<_> = self.backends.iter().map(McBackend::label).collect();
        labels.sort_unstable();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("duplicate backend".into()));
        }
        if self.dgp != Dgp::Two && self.backends.contains(&McBackend::Oracle) {
            return Err(Error::Config("oracle nuisances exist only for dgp 2".into()));
        }
        if self.oracle_m == 0 || self.reference_n == 0 {
            return Err(Error::Config("oracle_m and reference_n must be positive".into()));
        }
        for b in &self.backends {
            match b {
                McBackend::Kan(c) => c.validate()?,
                McBackend::Forest(c) => {
                    c.resolved_mtry(crate::dgp::DGP_DIM)?;
                }
                McBackend::Oracle => {}
            }
        }
        Ok(())
    }

    /// Grid shared by every replication.
    pub fn ygrid(&self) -> Result<YGrid<f64>> {
        if let Some(levels) = &self.levels {
            return YGrid::new(levels.clone());
        }
        let (reference, _) = generate(self.dgp, self.reference_n, derive_seed(self.seed, "reference", &[]))?;
        build_ygrid(reference.y(), self.ygrid_size, self.grid_percentiles.0, self.grid_percentiles.1)
    }
}

/// One replication's curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepCurve {
    pub rep: usize,
    pub delta: Vec<f64>,
    pub se: Vec<f64>,
    pub ci_lo: Vec<f64>,
    pub ci_hi: Vec<f64>,
    pub beta_hat: f64,
    pub max_moment_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepFailure {
    pub rep: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BackendRuns {
    pub backend: String,
    /// Successful replications in replication order.
    pub curves: Vec<RepCurve>,
    pub failures: Vec<RepFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McResult {
    pub config: McConfig,
    pub levels: Vec<f64>,
    pub truth: Vec<f64>,
    pub runs: Vec<BackendRuns>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub backend: String,
    pub y: f64,
    pub avg_bias: f64,
    pub rmse: f64,
    pub n_reps_effective: usize,
}

/// `(mean(e), sqrt(mean(e^2)))`, summed in sorted order so the result does
/// not depend on the order of `errors`.
pub fn bias_rmse(errors: &[f64]) -> (f64, f64) {
    let mut e = errors.to_vec();
    e.sort_by(f64::total_cmp);
    let r = e.len() as f64;
    let bias = compensated_sum(e.iter().copied()) / r;
    let ms = compensated_sum(e.iter().map(|v| v * v)) / r;
    (bias, ms.sqrt())
}

impl BackendRuns {
    /// `(avg_bias, rmse)` at level `g`.
    pub fn cell(&self, g: usize, truth: f64) -> (f64, f64) {
        let errors: Vec<f64> = self.curves.iter().map(|c| c.delta[g] - truth).collect();
        bias_rmse(&errors)
    }

    /// Share of replications whose interval at level `g` contains `truth`.
    pub fn coverage(&self, g: usize, truth: f64) -> f64 {
        let hits = self.curves.iter().filter(|c| c.ci_lo[g] <= truth && truth <= c.ci_hi[g]).count();
        hits as f64 / self.curves.len() as f64
    }
}

impl McResult {
    pub fn backend(&self, label: &str) -> Option<&BackendRuns> {
        self.runs.iter().find(|r| r.backend == label)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer_pretty(f, self)?;
        Ok(())
    }
}

/// Rows sorted by backend, then y.
pub fn summarize(result: &McResult) -> Result<Vec<SummaryRow>> {
    if result.runs.is_empty() || result.levels.is_empty() {
        return Err(Error::Input("empty Monte Carlo result".into()));
    }
    let mut rows = Vec::new();
    for run in &result.runs {
        if run.curves.is_empty() {
            continue;
        }
        for (g, (&y, &truth)) in result.levels.iter().zip(&result.truth).enumerate() {
            let (avg_bias, rmse) = run.cell(g, truth);
            rows.push(SummaryRow { backend: run.backend.clone(), y, avg_bias, rmse, n_reps_effective: run.curves.len() });
        }
    }
    rows.sort_by(|a, b| a.backend.cmp(&b.backend).then(a.y.total_cmp(&b.y)));
    Ok(rows)
}

pub fn write_summary_csv(rows: &[SummaryRow], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["backend", "y", "avg_bias", "rmse", "n_reps_effective"])?;
    for r in rows {
        w.write_record([
            r.backend.clone(),
            r.y.to_string(),
            r.avg_bias.to_string(),
            r.rmse.to_string(),
            r.n_reps_effective.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn run_rep(config: &McConfig, backend: &McBackend, grid: &YGrid<f64>, rep: usize) -> Result<RepCurve> {
    let (data, _) = generate(config.dgp, config.n, derive_seed(config.seed, "rep", &[rep as u64]))?;
    let fit_seed = derive_seed(config.seed, "fit", &[rep as u64]);
    let (k, form) = (config.folds, config.score_form);
    let est: CrossFitEstimate<f64> = match backend {
        McBackend::Kan(c) => estimate_with(&data, grid, &NuisanceBackend::Kan(c.clone()).with_seed(fit_seed), form, k, fit_seed)?,
        McBackend::Forest(c) => {
            estimate_with(&data, grid, &NuisanceBackend::Forest(c.clone()).with_seed(fit_seed), form, k, fit_seed)?
        }
        McBackend::Oracle => estimate_with(&data, grid, &Dgp2OracleNuisance, form, k, fit_seed)?,
    };
    let c = est.curve;
    Ok(RepCurve {
        rep,
        delta: c.delta,
        se: c.se,
        ci_lo: c.ci_lo,
        ci_hi: c.ci_hi,
        beta_hat: c.beta_hat,
        max_moment_residual: c.max_moment_residual,
    })
}

/// Groups replication outcomes per backend and enforces the failure limit.
fn collect_runs(labels: &[&str], reps: usize, outcomes: Vec<((usize, usize), Result<RepCurve>)>) -> Result<Vec<BackendRuns>> {
    let mut by_backend: BTreeMap<usize, BackendRuns> = labels
        .iter()
        .enumerate()
        .map(|(b, l)| (b, BackendRuns { backend: l.to_string(), curves: Vec::new(), failures: Vec::new() }))
        .collect();
    let mut outcomes = outcomes;
    outcomes.sort_by_key(|(key, _)| *key);
    for ((b, r), outcome) in outcomes {
        let entry = by_backend.get_mut(&b).expect("backend index in range");
        match outcome {
            Ok(c) => entry.curves.push(c),
            Err(e) => entry.failures.push(RepFailure { rep: r, message: e.to_string() }),
        }
    }
    let runs: Vec<BackendRuns> = by_backend.into_values().collect();
    for run in &runs {
        let rate = run.failures.len() as f64 / reps as f64;
        if rate > MAX_FAILURE_RATE {
            let first = run.failures.first().map(|f| f.message.as_str()).unwrap_or("");
            return Err(Error::MonteCarlo(format!(
                "backend {}: {} of {} replications failed (first: {first})",
                run.backend,
                run.failures.len(),
                reps
            )));
        }
    }
    Ok(runs)
}

/// Runs every (backend, replication) pair. Replication `r` draws its data
/// from a seed derived from `(seed, r)`, shared by all backends.
pub fn run_montecarlo(config: &McConfig) -> Result<McResult> {
    config.validate()?;
    let grid = config.ygrid()?;
    let truth = true_divlate(config.dgp, &grid, config.oracle_m, derive_seed(config.seed, "truth", &[]))?;

    let jobs: Vec<(usize, usize)> =
        (0..config.backends.len()).flat_map(|b| (0..config.reps).map(move |r| (b, r))).collect();
    let outcomes: Vec<((usize, usize), Result<RepCurve>)> = jobs
        .into_par_iter()
        .map(|(b, r)| ((b, r), run_rep(config, &config.backends[b], &grid, r)))
        .collect();

    let labels: Vec<&str> = config.backends.iter().map(McBackend::label).collect();
    let runs = collect_runs(&labels, config.reps, outcomes)?;
    Ok(McResult { config: config.clone(), levels: grid.levels().to_vec(), truth, runs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;

    fn run_with(curves: Vec<Vec<f64>>) -> BackendRuns {
        BackendRuns {
            backend: "x".into(),
            curves: curves
                .into_iter()
                .enumerate()
                .map(|(rep, delta)| RepCurve {
                    rep,
                    se: vec![0.0; delta.len()],
                    ci_lo: delta.clone(),
                    ci_hi: delta.clone(),
                    delta,
                    beta_hat: 1.0,
                    max_moment_residual: 0.0,
                })
                .collect(),
            failures: vec![],
        }
    }

    #[test]
    fn hand_fixture() {
        let run = run_with(vec![vec![0.6], vec![0.4]]);
        let (b, r) = run.cell(0, 0.5);
        assert!(b.abs() < 1e-15);
        assert!((r - 0.1).abs() < 1e-12);
    }

    #[test]
    fn single_rep_rmse_is_abs_bias() {
        let run = run_with(vec![vec![0.3, -0.2, 0.05]]);
        for (g, t) in [0.1, 0.0, 0.05].iter().enumerate() {
            let (b, r) = run.cell(g, *t);
            assert_eq!(r, b.abs());
        }
        let same = run_with(vec![vec![0.3]; 5]);
        let (b, r) = same.cell(0, 0.1);
        assert!((r - b.abs()).abs() < 1e-15);
    }

    #[test]
    fn rmse_decomposes_into_bias_and_variance() {
        let errors = [0.12, -0.3, 0.07, 0.5, -0.01, 0.2, 0.33];
        let (b, r) = bias_rmse(&errors);
        let var = errors.iter().map(|e| (e - b) * (e - b)).sum::<f64>() / errors.len() as f64;
        assert!((r * r - (b * b + var)).abs() < 1e-10);
        assert!(r >= b.abs());
    }

    #[test]
    fn aggregation_ignores_order() {
        let mut errors: Vec<f64> = (0..97).map(|i| ((i * 37 % 101) as f64 - 50.0) * 1e-3 + 1e-17 * i as f64).collect();
        let base = bias_rmse(&errors);
        let mut rng = crate::rng::stream(1, "perm", &[]);
        for _ in 0..5 {
            errors.shuffle(&mut rng);
            assert_eq!(bias_rmse(&errors), base);
        }
    }

    fn oracle_config() -> McConfig {
        McConfig {
            n: 1000,
            reps: 2,
            backends: vec![McBackend::Oracle, McBackend::Forest(ForestConfig { n_trees: 10, ..Default::default() })],
            ygrid_size: 5,
            oracle_m: 20_000,
            reference_n: 5000,
            seed: 3,
            ..Default::default()
        }
    }

    #[test]
    fn run_is_deterministic_and_summarized() {
        let cfg = oracle_config();
        let a = run_montecarlo(&cfg).unwrap();
        assert_eq!(a, run_montecarlo(&cfg).unwrap());
        let rows = summarize(&a).unwrap();
        assert_eq!(rows.len(), 10);
        assert_eq!(rows[0].backend, "oracle");
        assert_eq!(rows[5].backend, "rf");
        assert!(rows.windows(2).all(|w| w[0].backend != w[1].backend || w[0].y < w[1].y));
        for r in &rows {
            assert!(r.rmse >= r.avg_bias.abs() && r.n_reps_effective == 2);
        }
        for run in &a.runs {
            assert!(run.curves.iter().all(|c| c.max_moment_residual <= 1e-10));
        }
        let dir = tempfile::tempdir().unwrap();
        write_summary_csv(&rows, dir.path().join("s.csv")).unwrap();
        a.write_json(dir.path().join("r.json")).unwrap();
        let text = std::fs::read_to_string(dir.path().join("s.csv")).unwrap();
        assert!(text.starts_with("backend,y,avg_bias,rmse,n_reps_effective\n"));
    }

    #[test]
    fn config_validation() {
        let bad = [
            McConfig { reps: 0, ..Default::default() },
            McConfig { n: 5, folds: 3, ..Default::default() },
            McConfig { backends: vec![], ..Default::default() },
            McConfig { dgp: Dgp::One, backends: vec![McBackend::Oracle], ..Default::default() },
            McConfig { backends: vec![McBackend::Oracle, McBackend::Oracle], ..Default::default() },
        ];
        for c in bad {
            assert!(matches!(run_montecarlo(&c), Err(Error::Config(_))));
        }
        assert_eq!(McBackend::parse_list("kan,rf").unwrap().len(), 2);
        assert!(McBackend::parse_list("svm").is_err());
    }

    #[test]
    fn failed_replications_are_excluded_up_to_the_limit() {
        let curve = |rep| Ok(run_with(vec![vec![0.5]]).curves[0].clone()).map(|c: RepCurve| RepCurve { rep, ..c });
        let fail = || Err(Error::WeakFirstStage { beta: 0.0, threshold: 1e-6 });
        let mut outcomes: Vec<_> = (0..10).map(|r| ((0, r), if r < 2 { fail() } else { curve(r) })).collect();
        let runs = collect_runs(&["rf"], 10, outcomes).unwrap();
        assert_eq!(runs[0].curves.len(), 8);
        assert_eq!(runs[0].failures.iter().map(|f| f.rep).collect::<Vec<_>>(), vec![0, 1]);

        outcomes = (0..10).map(|r| ((0, r), if r < 3 { fail() } else { curve(r) })).collect();
        assert!(matches!(collect_runs(&["rf"], 10, outcomes), Err(Error::MonteCarlo(_))));
    }
}
