//! Cross-fitted ratio estimator of the distributional IV-LATE curve
//! `Delta(y) = F_{Y(1)|C}(y) - F_{Y(0)|C}(y)`, with its sample variance,
//! normal confidence intervals and the plug-in Wald baseline.

use std::path::Path;

use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{kfold_split, Dataset, YGrid};
use crate::error::{Error, Result};
use crate::nuisance::{FoldNuisance, NuisanceBackend, NuisanceProvider};
use crate::numeric::compensated_mean;
use crate::Scalar;

pub const WEAK_FIRST_STAGE_THRESHOLD: f64 = 1e-6;
pub const Z_CRITICAL: f64 = 1.96;

/// Which pair of scores the estimator uses.
///
/// `Orthogonal` conditions `mu` on the instrument and adds the first-stage
/// contrast `p(1,x) - p(0,x)` to the treatment score. `Published` conditions
/// `mu` on the treatment and uses the bare weighted residual for the
/// treatment score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreForm {
    #[default]
    Orthogonal,
    Published,
}

impl std::str::FromStr for ScoreForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "orthogonal" => Ok(ScoreForm::Orthogonal),
            "published" => Ok(ScoreForm::Published),
            other => Err(Error::Config(format!("unknown score form '{other}'"))),
        }
    }
}

fn instrument_weight<T: Scalar>(z: u8, pi: T) -> T {
    (T::lit(f64::from(z)) - pi) / (pi * (T::one() - pi))
}

/// `(z - pi) / (pi (1 - pi)) * (w - p)`.
pub fn score_beta<T: Scalar>(z: u8, w: u8, pi_hat: T, p_hat: T) -> T {
    instrument_weight(z, pi_hat) * (T::lit(f64::from(w)) - p_hat)
}

/// `(z - pi) / (pi (1 - pi)) * (1{Y <= y} - mu_obs) + mu1 - mu0`.
pub fn score_alpha<T: Scalar>(indicator: u8, z: u8, pi_hat: T, mu_at_obs: T, mu1: T, mu0: T) -> T {
    instrument_weight(z, pi_hat) * (T::lit(f64::from(indicator)) - mu_at_obs) + (mu1 - mu0)
}

/// Per-observation scores; `psi_alpha` is n x G.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable<T> {
    psi_beta: Vec<T>,
    psi_alpha: Array2<T>,
}

impl<T: Scalar> ScoreTable<T> {
    pub fn new(psi_beta: Vec<T>, psi_alpha: Array2<T>) -> Result<Self> {
        if psi_alpha.nrows() != psi_beta.len() {
            return Err(Error::Shape(format!(
                "psi_alpha has {} rows, psi_beta has {}",
                psi_alpha.nrows(),
                psi_beta.len()
            )));
        }
        if psi_beta.iter().chain(psi_alpha.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite score".into()));
        }
        Ok(Self { psi_beta, psi_alpha })
    }

    pub fn psi_beta(&self) -> &[T] {
        &self.psi_beta
    }

    pub fn psi_alpha(&self) -> &Array2<T> {
        &self.psi_alpha
    }

    pub fn len(&self) -> usize {
        self.psi_beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.psi_beta.is_empty()
    }

    /// `mean_i(psi_alpha_i(y) - delta(y) psi_beta_i)` per level.
    pub fn moment_residuals(&self, delta: &[T]) -> Vec<T> {
        self.psi_alpha
            .axis_iter(Axis(1))
            .zip(delta)
            .map(|(col, &d)| {
                let r: Vec<T> = col.iter().zip(&self.psi_beta).map(|(&a, &b)| a - d * b).collect();
                compensated_mean(&r)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DivLateCurve<T> {
    pub levels: YGrid<T>,
    pub delta: Vec<T>,
    pub variance: Vec<T>,
    pub se: Vec<T>,
    pub ci_lo: Vec<T>,
    pub ci_hi: Vec<T>,
    pub beta_hat: T,
    /// Largest `|mean(psi_alpha - delta psi_beta)|` over the grid; zero for
    /// the Wald baseline.
    pub max_moment_residual: T,
}

impl<T: Scalar> DivLateCurve<T> {
    pub fn len(&self) -> usize {
        self.delta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delta.is_empty()
    }

    /// Columns `y, delta, se, ci_lo, ci_hi, beta_hat`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["y", "delta", "se", "ci_lo", "ci_hi", "beta_hat"])?;
        for g in 0..self.len() {
            w.write_record([
                self.levels.levels()[g].to_string(),
                self.delta[g].to_string(),
                self.se[g].to_string(),
                self.ci_lo[g].to_string(),
                self.ci_hi[g].to_string(),
                self.beta_hat.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// True when `ci_lo <= truth <= ci_hi` at level `g`.
    pub fn covers(&self, g: usize, truth: T) -> bool {
        self.ci_lo[g] <= truth && truth <= self.ci_hi[g]
    }
}

/// Output of a cross-fitted run.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossFitEstimate<T> {
    pub curve: DivLateCurve<T>,
    pub scores: ScoreTable<T>,
    /// Fold index of every observation.
    pub folds: Vec<usize>,
}

fn check_weak<T: Scalar>(beta: T) -> Result<()> {
    let b = beta.as_f64();
    if !b.is_finite() || b.abs() < WEAK_FIRST_STAGE_THRESHOLD {
        return Err(Error::WeakFirstStage { beta: b, threshold: WEAK_FIRST_STAGE_THRESHOLD });
    }
    Ok(())
}

/// Ratio estimate, variance and intervals from a complete score table.
pub fn curve_from_scores<T: Scalar>(scores: &ScoreTable<T>, levels: &YGrid<T>) -> Result<DivLateCurve<T>> {
    if scores.is_empty() {
        return Err(Error::Input("empty score table".into()));
    }
    if scores.psi_alpha.ncols() != levels.len() {
        return Err(Error::Shape(format!(
            "score table has {} levels, grid has {}",
            scores.psi_alpha.ncols(),
            levels.len()
        )));
    }
    let n = T::from_count(scores.len());
    let beta_hat = compensated_mean(&scores.psi_beta);
    check_weak(beta_hat)?;
    let z = T::lit(Z_CRITICAL);
    let g_count = levels.len();
    let mut curve = DivLateCurve {
        levels: levels.clone(),
        delta: Vec::with_capacity(g_count),
        variance: Vec::with_capacity(g_count),
        se: Vec::with_capacity(g_count),
        ci_lo: Vec::with_capacity(g_count),
        ci_hi: Vec::with_capacity(g_count),
        beta_hat,
        max_moment_residual: T::zero(),
    };
    for col in scores.psi_alpha.axis_iter(Axis(1)) {
        let alpha: Vec<T> = col.to_vec();
        let delta = compensated_mean(&alpha) / beta_hat;
        let sq: Vec<T> = alpha
            .iter()
            .zip(&scores.psi_beta)
            .map(|(&a, &b)| {
                let r = a - delta * b;
                r * r
            })
            .collect();
        let variance = compensated_mean(&sq) / (beta_hat * beta_hat);
        let se = (variance / n).sqrt();
        curve.delta.push(delta);
        curve.variance.push(variance);
        curve.se.push(se);
        curve.ci_lo.push(delta - z * se);
        curve.ci_hi.push(delta + z * se);
    }
    curve.max_moment_residual = scores
        .moment_residuals(&curve.delta)
        .into_iter()
        .fold(T::zero(), |m, r| m.max(r.abs()));
    Ok(curve)
}

fn check_inputs<T: Scalar>(data: &Dataset<T>, k: usize) -> Result<()> {
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {k}")));
    }
    if data.len() < k {
        return Err(Error::Input(format!("{} observations cannot fill {k} folds", data.len())));
    }
    let ones = data.z().iter().filter(|&&z| z == 1).count();
    if ones == 0 || ones == data.len() {
        return Err(Error::WeakFirstStage { beta: 0.0, threshold: WEAK_FIRST_STAGE_THRESHOLD });
    }
    Ok(())
}

fn fold_scores<T: Scalar, F: FoldNuisance<T>>(
    data: &Dataset<T>,
    rows: &[usize],
    fit: &F,
    ygrid: &YGrid<T>,
    form: ScoreForm,
) -> Result<(Vec<T>, Array2<T>)> {
    let x = data.x().select(Axis(0), rows);
    let m = rows.len();
    let pi = fit.pi(&x)?;
    let p1 = fit.p(1, &x)?;
    let p0 = fit.p(0, &x)?;
    for v in [&pi, &p1, &p0] {
        if v.len() != m {
            return Err(Error::Shape(format!("nuisance returned {} predictions for {m} rows", v.len())));
        }
    }
    let (z, w, y) = (data.z(), data.w(), data.y());
    let beta: Vec<T> = (0..m)
        .map(|j| {
            let i = rows[j];
            let p_obs = if z[i] == 1 { p1[j] } else { p0[j] };
            let residual = score_beta(z[i], w[i], pi[j], p_obs);
            match form {
                ScoreForm::Orthogonal => p1[j] - p0[j] + residual,
                ScoreForm::Published => residual,
            }
        })
        .collect();
    let mut alpha = Array2::zeros((m, ygrid.len()));
    for (g, &level) in ygrid.levels().iter().enumerate() {
        let mu1 = fit.mu(g, 1, &x)?;
        let mu0 = fit.mu(g, 0, &x)?;
        if mu1.len() != m || mu0.len() != m {
            return Err(Error::Shape(format!("nuisance returned wrong prediction count for {m} rows")));
        }
        for j in 0..m {
            let i = rows[j];
            let arm = match form {
                ScoreForm::Orthogonal => z[i],
                ScoreForm::Published => w[i],
            };
            let mu_obs = if arm == 1 { mu1[j] } else { mu0[j] };
            alpha[[j, g]] = score_alpha(u8::from(y[i] <= level), z[i], pi[j], mu_obs, mu1[j], mu0[j]);
        }
    }
    Ok((beta, alpha))
}

/// K-fold cross-fitted estimate with an arbitrary nuisance provider. Folds
/// come from `kfold_split(n, k, seed)`; observation `i` is scored by models
/// fitted without its fold.
pub fn estimate_with<T: Scalar, P: NuisanceProvider<T>>(
    data: &Dataset<T>,
    ygrid: &YGrid<T>,
    provider: &P,
    form: ScoreForm,
    k: usize,
    seed: u64,
) -> Result<CrossFitEstimate<T>> {
    check_inputs(data, k)?;
    let folds = kfold_split(data.len(), k, seed)?;
    let per_fold = (0..k)
        .into_par_iter()
        .map(|f| {
            let rows = folds.members(f);
            let fit = provider.fit(data, &folds.complement(f), ygrid, form, f)?;
            let (beta, alpha) = fold_scores(data, &rows, &fit, ygrid, form)?;
            Ok((rows, beta, alpha))
        })
        .collect::<Result<Vec<_>>>()?;

    let n = data.len();
    let mut psi_beta = vec![T::zero(); n];
    let mut psi_alpha = Array2::zeros((n, ygrid.len()));
    for (rows, beta, alpha) in per_fold {
        for (j, &i) in rows.iter().enumerate() {
            psi_beta[i] = beta[j];
            psi_alpha.row_mut(i).assign(&alpha.row(j));
        }
    }
    let scores = ScoreTable::new(psi_beta, psi_alpha)?;
    let curve = curve_from_scores(&scores, ygrid)?;
    Ok(CrossFitEstimate { curve, scores, folds: folds.fold_of().to_vec() })
}

/// Cross-fitted estimate with the orthogonal scores. `seed` drives both the
/// fold split and the nuisance models, replacing the backend's own seed.
pub fn estimate<T: Scalar>(
    data: &Dataset<T>,
    ygrid: &YGrid<T>,
    backend: &NuisanceBackend,
    k: usize,
    seed: u64,
) -> Result<DivLateCurve<T>> {
    let seeded = backend.with_seed(seed);
    Ok(estimate_with(data, ygrid, &seeded, ScoreForm::Orthogonal, k, seed)?.curve)
}

/// Plug-in ratio of instrument-arm mean differences; variance fields are
/// zero.
pub fn wald_estimate<T: Scalar>(data: &Dataset<T>, ygrid: &YGrid<T>) -> Result<DivLateCurve<T>> {
    let arm = |a: u8| -> Vec<usize> { (0..data.len()).filter(|&i| data.z()[i] == a).collect() };
    let (treated, control) = (arm(1), arm(0));
    if treated.is_empty() || control.is_empty() {
        return Err(Error::Input("both instrument arms must be non-empty".into()));
    }
    let mean_of = |rows: &[usize], f: &dyn Fn(usize) -> T| -> T {
        let v: Vec<T> = rows.iter().map(|&i| f(i)).collect();
        compensated_mean(&v)
    };
    let w = |i: usize| T::lit(f64::from(data.w()[i]));
    let beta_hat = mean_of(&treated, &w) - mean_of(&control, &w);
    check_weak(beta_hat)?;
    let delta: Vec<T> = ygrid
        .levels()
        .iter()
        .map(|&level| {
            let ind = |i: usize| if data.y()[i] <= level { T::one() } else { T::zero() };
            (mean_of(&treated, &ind) - mean_of(&control, &ind)) / beta_hat
        })
        .collect();
    let zeros = vec![T::zero(); ygrid.len()];
    Ok(DivLateCurve {
        levels: ygrid.clone(),
        ci_lo: delta.clone(),
        ci_hi: delta.clone(),
        delta,
        variance: zeros.clone(),
        se: zeros,
        beta_hat,
        max_moment_residual: T::zero(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nuisance::DegenerateNuisance;
    use crate::rng;
    use rand::Rng;

    fn fixture(n: usize, seed: u64) -> Dataset<f64> {
        let mut r = rng::stream(seed, "est-fixture", &[]);
        let x = Array2::from_shape_fn((n, 2), |_| r.random_range(-1.0..1.0));
        let z: Vec<u8> = (0..n).map(|i| if i < 2 { i as u8 } else { u8::from(r.random_bool(0.5)) }).collect();
        let w: Vec<u8> = z.iter().map(|&z| u8::from(r.random_bool(if z == 1 { 0.8 } else { 0.2 }))).collect();
        let y: Vec<f64> = (0..n).map(|i| x[[i, 0]] + 2.0 * f64::from(w[i]) + r.random_range(-1.0..1.0)).collect();
        Dataset::new(y, w, z, x).unwrap()
    }

    #[test]
    fn score_examples() {
        assert_eq!(score_beta(1, 1, 0.5, 0.5), 1.0);
        assert_eq!(score_beta(0, 1, 0.4, 1.0), 0.0);
        assert!((score_beta(0, 1, 0.8, 0.6) - (-2.0f64)).abs() < 1e-12);
        assert!((score_alpha(1, 1, 0.5, 0.5, 0.7, 0.2) - 1.5f64).abs() < 1e-12);
        assert!((score_alpha(0, 0, 0.3, 0.0, 0.9, 0.4) - 0.5f64).abs() < 1e-12);
        assert_eq!(score_alpha(1, 1, 0.5, 1.0, 0.3, 0.3), 0.0);
    }

    #[test]
    fn degenerate_nuisances_reproduce_wald_under_both_forms() {
        let d = fixture(200, 1);
        let grid = crate::data::build_ygrid(d.y(), 12, 1.0, 99.0).unwrap();
        let wald = wald_estimate(&d, &grid).unwrap();
        for form in [ScoreForm::Orthogonal, ScoreForm::Published] {
            let est = estimate_with(&d, &grid, &DegenerateNuisance, form, 3, 9).unwrap();
            assert!((est.curve.beta_hat - wald.beta_hat).abs() < 1e-12);
            for g in 0..grid.len() {
                assert!((est.curve.delta[g] - wald.delta[g]).abs() < 1e-10);
            }
            assert!(est.curve.max_moment_residual < 1e-10);
        }
    }

    #[test]
    fn sharp_design_has_unit_first_stage() {
        let d = fixture(100, 2);
        let d = Dataset::new(d.y().to_vec(), d.z().to_vec(), d.z().to_vec(), d.x().clone()).unwrap();
        let grid = YGrid::new(vec![0.0, 1.0]).unwrap();
        let est = estimate_with(&d, &grid, &DegenerateNuisance, ScoreForm::Orthogonal, 2, 0).unwrap();
        assert!((est.curve.beta_hat - 1.0).abs() < 1e-12);
        assert!((wald_estimate(&d, &grid).unwrap().beta_hat - 1.0).abs() < 1e-12);
    }

    #[test]
    fn wald_examples() {
        let x = Array2::zeros((2, 1));
        let d = Dataset::new(vec![0.0, 10.0], vec![1, 0], vec![1, 0], x).unwrap();
        let c = wald_estimate(&d, &YGrid::new(vec![5.0]).unwrap()).unwrap();
        assert_eq!(c.delta, vec![1.0]);

        // same outcomes in both arms, first stage 0.5
        let y = vec![1.0, 2.0, 3.0, 4.0, 1.0, 2.0, 3.0, 4.0];
        let z = vec![1, 1, 1, 1, 0, 0, 0, 0];
        let w = vec![1, 1, 1, 0, 1, 0, 0, 0];
        let d = Dataset::new(y, w, z, Array2::zeros((8, 1))).unwrap();
        let c = wald_estimate(&d, &YGrid::new(vec![0.5, 2.5, 4.5]).unwrap()).unwrap();
        assert!((c.beta_hat - 0.5f64).abs() < 1e-15);
        assert!(c.delta.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn wald_matches_group_by_oracle() {
        // n = 10 by hand: arm 1 rows 0..5, arm 0 rows 5..10
        let y = vec![0.3, 1.7, -0.2, 2.4, 0.9, 1.1, 3.0, -1.0, 0.5, 2.2];
        let z = vec![1, 1, 1, 1, 1, 0, 0, 0, 0, 0];
        let w = vec![1, 1, 0, 1, 1, 0, 1, 0, 0, 0];
        let d = Dataset::new(y.clone(), w.clone(), z.clone(), Array2::zeros((10, 1))).unwrap();
        let levels = vec![0.0, 1.0, 2.0];
        let c = wald_estimate(&d, &YGrid::new(levels.clone()).unwrap()).unwrap();
        let group = |arm: u8, f: &dyn Fn(usize) -> f64| {
            let idx: Vec<usize> = (0..10).filter(|&i| z[i] == arm).collect();
            idx.iter().map(|&i| f(i)).sum::<f64>() / idx.len() as f64
        };
        let den = group(1, &|i| f64::from(w[i])) - group(0, &|i| f64::from(w[i]));
        assert!((den - 0.6).abs() < 1e-15);
        for (g, &lv) in levels.iter().enumerate() {
            let ind = |i: usize| if y[i] <= lv { 1.0 } else { 0.0 };
            let expect = (group(1, &ind) - group(0, &ind)) / den;
            assert!((c.delta[g] - expect).abs() < 1e-15);
        }
        // frozen: level 1.0 -> (3/5 - 2/5) / 0.6
        assert!((c.delta[1] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn weak_first_stage_is_reported() {
        let d = fixture(60, 3);
        let d = Dataset::new(d.y().to_vec(), vec![1; 60], d.z().to_vec(), d.x().clone()).unwrap();
        let grid = YGrid::new(vec![0.0]).unwrap();
        assert!(matches!(wald_estimate(&d, &grid), Err(Error::WeakFirstStage { .. })));
        let r = estimate_with(&d, &grid, &DegenerateNuisance, ScoreForm::Orthogonal, 3, 0);
        assert!(matches!(r, Err(Error::WeakFirstStage { .. })));

        let constant_z = Dataset::new(d.y().to_vec(), d.w().to_vec(), vec![1; 60], d.x().clone()).unwrap();
        let r = estimate_with(&constant_z, &grid, &DegenerateNuisance, ScoreForm::Orthogonal, 3, 0);
        assert!(matches!(r, Err(Error::WeakFirstStage { .. })));
    }

    #[test]
    fn input_errors() {
        let d = fixture(10, 4);
        let grid = YGrid::new(vec![0.0]).unwrap();
        assert!(matches!(estimate_with(&d, &grid, &DegenerateNuisance, ScoreForm::Orthogonal, 1, 0), Err(Error::Config(_))));
        assert!(matches!(estimate_with(&d, &grid, &DegenerateNuisance, ScoreForm::Orthogonal, 11, 0), Err(Error::Input(_))));
    }

    #[test]
    fn forest_run_satisfies_moment_condition_and_interval_order() {
        let d = fixture(400, 5);
        let grid = crate::data::build_ygrid(d.y(), 6, 5.0, 95.0).unwrap();
        let backend = NuisanceBackend::Forest(crate::forest::ForestConfig { n_trees: 20, ..Default::default() });
        let a = estimate(&d, &grid, &backend, 3, 11).unwrap();
        assert!(a.max_moment_residual <= 1e-10);
        for g in 0..grid.len() {
            assert!(a.variance[g] >= 0.0 && a.se[g].is_finite());
            assert!(a.ci_lo[g] <= a.delta[g] && a.delta[g] <= a.ci_hi[g]);
        }
        assert_eq!(a, estimate(&d, &grid, &backend, 3, 11).unwrap());
    }

    #[test]
    fn curve_csv_has_expected_columns() {
        let d = fixture(50, 6);
        let grid = YGrid::new(vec![-0.5, 0.5, 1.5]).unwrap();
        let c = estimate_with(&d, &grid, &DegenerateNuisance, ScoreForm::Orthogonal, 2, 0).unwrap().curve;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("curve.csv");
        c.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("y,delta,se,ci_lo,ci_hi,beta_hat"));
        assert_eq!(lines.count(), 3);
    }

    struct Recording {
        train_sets: std::sync::Mutex<Vec<(usize, Vec<usize>)>>,
    }

    /// Predicts mu as the training-fold mean of the level indicator, so any
    /// training outcome leaks into every prediction from that fit.
    struct MeanFit {
        mu: Vec<f64>,
    }

    impl NuisanceProvider<f64> for Recording {
        type Fit = MeanFit;

        fn fit(&self, data: &Dataset<f64>, train: &[usize], ygrid: &YGrid<f64>, _: ScoreForm, fold: usize) -> Result<MeanFit> {
            self.train_sets.lock().unwrap().push((fold, train.to_vec()));
            let mu = ygrid
                .levels()
                .iter()
                .map(|&l| train.iter().filter(|&&i| data.y()[i] <= l).count() as f64 / train.len() as f64)
                .collect();
            Ok(MeanFit { mu })
        }
    }

    impl FoldNuisance<f64> for MeanFit {
        fn pi(&self, x: &Array2<f64>) -> Result<Vec<f64>> {
            Ok(vec![0.5; x.nrows()])
        }
        fn p(&self, z: u8, x: &Array2<f64>) -> Result<Vec<f64>> {
            Ok(vec![0.3 + 0.4 * f64::from(z); x.nrows()])
        }
        fn mu(&self, g: usize, _: u8, x: &Array2<f64>) -> Result<Vec<f64>> {
            Ok(vec![self.mu[g]; x.nrows()])
        }
    }

    #[test]
    fn cross_fitting_never_trains_on_scored_rows() {
        let d = fixture(90, 7);
        let grid = YGrid::new(vec![0.0, 1.0]).unwrap();
        let rec = Recording { train_sets: Default::default() };
        let est = estimate_with(&d, &grid, &rec, ScoreForm::Orthogonal, 3, 5).unwrap();
        let sets = rec.train_sets.into_inner().unwrap();
        assert_eq!(sets.len(), 3);
        for (fold, train) in &sets {
            assert!(train.iter().all(|&i| est.folds[i] != *fold));
            assert_eq!(train.len() + est.folds.iter().filter(|&&f| f == *fold).count(), 90);
        }

        // moving a tagged outcome changes only its own score, within its fold
        let tagged = 17;
        let mut y = d.y().to_vec();
        y[tagged] = if y[tagged] <= 0.0 { 5.0 } else { -5.0 };
        let moved = Dataset::new(y, d.w().to_vec(), d.z().to_vec(), d.x().clone()).unwrap();
        let rec2 = Recording { train_sets: Default::default() };
        let est2 = estimate_with(&moved, &grid, &rec2, ScoreForm::Orthogonal, 3, 5).unwrap();
        let own = est.folds[tagged];
        for i in 0..90 {
            let same = est.scores.psi_alpha().row(i) == est2.scores.psi_alpha().row(i);
            if i == tagged {
                assert!(!same);
            } else if est.folds[i] == own {
                assert!(same, "row {i} in the tagged fold changed");
            }
        }
    }
}
