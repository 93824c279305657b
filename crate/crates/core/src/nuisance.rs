//! Fitting and evaluating the three nuisance functions on a training fold:
//! the instrument propensity `pi(x)`, the first stage `p(z, x)` and the
//! outcome CDFs `mu(y, arm, x)`, one per y-grid level.
//!
//! The `arm` that `mu` conditions on is the instrument for
//! [`ScoreForm::Orthogonal`] and the treatment for [`ScoreForm::Published`].
//! Any binary problem whose minority class has fewer than
//! [`MIN_MINORITY_COUNT`] training rows is not fitted; it predicts the
//! majority class (clipped) instead.

use ndarray::{concatenate, Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, YGrid};
use crate::error::{Error, Result};
use crate::estimator::ScoreForm;
use crate::forest::{forest_fit, forest_predict_proba, ForestConfig, ForestModel};
use crate::kan::{kan_fit, kan_predict_proba, FittedKan, KanConfig};
use crate::numeric::clip_probability;
use crate::rng::derive_seed;
use crate::Scalar;

pub const MIN_MINORITY_COUNT: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NuisanceBackend {
    Kan(KanConfig),
    Forest(ForestConfig),
}

impl NuisanceBackend {
    pub fn label(&self) -> &'static str {
        match self {
            NuisanceBackend::Kan(_) => "kan",
            NuisanceBackend::Forest(_) => "rf",
        }
    }

    /// Copy of the backend with its model seed replaced.
    pub fn with_seed(&self, seed: u64) -> Self {
        match self {
            NuisanceBackend::Kan(c) => NuisanceBackend::Kan(KanConfig { seed, ..c.clone() }),
            NuisanceBackend::Forest(c) => NuisanceBackend::Forest(ForestConfig { seed, ..c.clone() }),
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            NuisanceBackend::Kan(c) => c.seed,
            NuisanceBackend::Forest(c) => c.seed,
        }
    }
}

/// One fitted binary-probability model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum FittedModel<T> {
    Kan(FittedKan<T>),
    Forest(ForestModel<T>),
    /// Minority-class fallback: the clipped majority-class indicator.
    Constant(T),
}

impl<T: Scalar> FittedModel<T> {
    pub fn is_fallback(&self) -> bool {
        matches!(self, FittedModel::Constant(_))
    }

    pub fn predict(&self, features: &Array2<T>) -> Result<Vec<T>> {
        match self {
            FittedModel::Kan(m) => kan_predict_proba(m, features),
            FittedModel::Forest(m) => forest_predict_proba(m, features),
            FittedModel::Constant(c) => Ok(vec![*c; features.nrows()]),
        }
    }
}

fn fit_binary<T: Scalar>(features: &Array2<T>, targets: &[u8], backend: &NuisanceBackend) -> Result<FittedModel<T>> {
    let ones = targets.iter().filter(|&&t| t == 1).count();
    let zeros = targets.len() - ones;
    if ones.min(zeros) < MIN_MINORITY_COUNT {
        let majority = if ones > zeros { T::one() } else { T::zero() };
        return Ok(FittedModel::Constant(clip_probability(majority)));
    }
    match backend {
        NuisanceBackend::Kan(cfg) => Ok(FittedModel::Kan(kan_fit(features, targets, cfg)?)),
        NuisanceBackend::Forest(cfg) => Ok(FittedModel::Forest(forest_fit(features, targets, cfg)?)),
    }
}

/// Prepends a constant binary column to `x`.
pub fn with_arm<T: Scalar>(arm: u8, x: &Array2<T>) -> Array2<T> {
    let col = Array2::from_elem((x.nrows(), 1), T::from_u8(arm).expect("0 or 1"));
    concatenate![Axis(1), col, x.view()]
}

/// Prepends a per-row binary column to `x`.
pub fn with_arm_column<T: Scalar>(arm: &[u8], x: &Array2<T>) -> Array2<T> {
    let col = Array2::from_shape_fn((x.nrows(), 1), |(i, _)| T::from_u8(arm[i]).expect("0 or 1"));
    concatenate![Axis(1), col, x.view()]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldNuisanceFit<T> {
    pi_model: FittedModel<T>,
    p_model: FittedModel<T>,
    mu_models: Vec<FittedModel<T>>,
    form: ScoreForm,
    n_covariates: usize,
}

impl<T: Scalar> FoldNuisanceFit<T> {
    pub fn pi_model(&self) -> &FittedModel<T> {
        &self.pi_model
    }

    pub fn p_model(&self) -> &FittedModel<T> {
        &self.p_model
    }

    pub fn mu_models(&self) -> &[FittedModel<T>] {
        &self.mu_models
    }

    pub fn form(&self) -> ScoreForm {
        self.form
    }

    /// `(pi, p, mu per level)` fallback flags.
    pub fn fallback_flags(&self) -> (bool, bool, Vec<bool>) {
        (
            self.pi_model.is_fallback(),
            self.p_model.is_fallback(),
            self.mu_models.iter().map(FittedModel::is_fallback).collect(),
        )
    }

    fn check_width(&self, x: &Array2<T>) -> Result<()> {
        if x.ncols() != self.n_covariates {
            return Err(Error::Shape(format!(
                "rows have {} covariates, nuisance models were fitted on {}",
                x.ncols(),
                self.n_covariates
            )));
        }
        Ok(())
    }
}

/// Fits `pi`, `p` and one `mu` per grid level on `train`. Model seeds are
/// derived from the backend seed, `stream` (the fold) and the problem.
pub fn fit_fold<T: Scalar>(
    train: &Dataset<T>,
    ygrid: &YGrid<T>,
    backend: &NuisanceBackend,
    form: ScoreForm,
    stream: u64,
) -> Result<FoldNuisanceFit<T>> {
    if train.is_empty() {
        return Err(Error::Input("nuisance training fold is empty".into()));
    }
    let base = backend.seed();
    let seeded = |problem: u64, level: u64| backend.with_seed(derive_seed(base, "nuisance", &[stream, problem, level]));

    let pi_model = fit_binary(train.x(), train.z(), &seeded(0, 0))?;
    let p_model = fit_binary(&with_arm_column(train.z(), train.x()), train.w(), &seeded(1, 0))?;
    let arm = match form {
        ScoreForm::Orthogonal => train.z(),
        ScoreForm::Published => train.w(),
    };
    let mu_features = with_arm_column(arm, train.x());
    let mu_models = ygrid
        .levels()
        .par_iter()
        .enumerate()
        .map(|(g, &level)| {
            let target: Vec<u8> = train.y().iter().map(|&v| u8::from(v <= level)).collect();
            fit_binary(&mu_features, &target, &seeded(2, g as u64))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FoldNuisanceFit { pi_model, p_model, mu_models, form, n_covariates: train.dim() })
}

pub fn predict_pi<T: Scalar>(fit: &FoldNuisanceFit<T>, x: &Array2<T>) -> Result<Vec<T>> {
    fit.check_width(x)?;
    fit.pi_model.predict(x)
}

pub fn predict_p<T: Scalar>(fit: &FoldNuisanceFit<T>, z: u8, x: &Array2<T>) -> Result<Vec<T>> {
    fit.check_width(x)?;
    fit.p_model.predict(&with_arm(z, x))
}

/// `mu(y_index, arm, x)` for a counterfactual arm value shared by all rows.
pub fn predict_mu<T: Scalar>(fit: &FoldNuisanceFit<T>, y_index: usize, arm: u8, x: &Array2<T>) -> Result<Vec<T>> {
    fit.check_width(x)?;
    let model = fit
        .mu_models
        .get(y_index)
        .ok_or_else(|| Error::Input(format!("y-grid index {y_index} out of range ({} levels)", fit.mu_models.len())))?;
    model.predict(&with_arm(arm, x))
}

/// Produces the per-fold nuisance predictions the estimator consumes.
/// Implemented by the real backends and by test doubles (oracle or
/// degenerate nuisances).
pub trait NuisanceProvider<T: Scalar>: Sync {
    type Fit: FoldNuisance<T> + Send;

    /// `train` indexes rows of `data`; `fold` identifies the held-out fold.
    fn fit(&self, data: &Dataset<T>, train: &[usize], ygrid: &YGrid<T>, form: ScoreForm, fold: usize) -> Result<Self::Fit>;
}

pub trait FoldNuisance<T: Scalar> {
    fn pi(&self, x: &Array2<T>) -> Result<Vec<T>>;
    fn p(&self, z: u8, x: &Array2<T>) -> Result<Vec<T>>;
    fn mu(&self, y_index: usize, arm: u8, x: &Array2<T>) -> Result<Vec<T>>;
}

impl<T: Scalar> NuisanceProvider<T> for NuisanceBackend {
    type Fit = FoldNuisanceFit<T>;

    fn fit(&self, data: &Dataset<T>, train: &[usize], ygrid: &YGrid<T>, form: ScoreForm, fold: usize) -> Result<Self::Fit> {
        fit_fold(&data.subset(train), ygrid, self, form, fold as u64)
    }
}

impl<T: Scalar> FoldNuisance<T> for FoldNuisanceFit<T> {
    fn pi(&self, x: &Array2<T>) -> Result<Vec<T>> {
        predict_pi(self, x)
    }

    fn p(&self, z: u8, x: &Array2<T>) -> Result<Vec<T>> {
        predict_p(self, z, x)
    }

    fn mu(&self, y_index: usize, arm: u8, x: &Array2<T>) -> Result<Vec<T>> {
        predict_mu(self, y_index, arm, x)
    }
}

/// `pi` equal to the full-sample mean of Z, `p` and `mu` identically zero.
/// Under these nuisances the cross-fitted ratio equals the Wald ratio.
#[derive(Debug, Clone, Copy, Default)]
pub struct DegenerateNuisance;

#[derive(Debug, Clone, Copy)]
pub struct DegenerateFit<T> {
    z_mean: T,
}

impl<T: Scalar> NuisanceProvider<T> for DegenerateNuisance {
    type Fit = DegenerateFit<T>;

    fn fit(&self, data: &Dataset<T>, _train: &[usize], _ygrid: &YGrid<T>, _form: ScoreForm, _fold: usize) -> Result<Self::Fit> {
        let z: Vec<T> = data.z().iter().map(|&v| T::lit(f64::from(v))).collect();
        Ok(DegenerateFit { z_mean: crate::numeric::compensated_mean(&z) })
    }
}

impl<T: Scalar> FoldNuisance<T> for DegenerateFit<T> {
    fn pi(&self, x: &Array2<T>) -> Result<Vec<T>> {
        Ok(vec![self.z_mean; x.nrows()])
    }

    fn p(&self, _z: u8, x: &Array2<T>) -> Result<Vec<T>> {
        Ok(vec![T::zero(); x.nrows()])
    }

    fn mu(&self, _y_index: usize, _arm: u8, x: &Array2<T>) -> Result<Vec<T>> {
        Ok(vec![T::zero(); x.nrows()])
    }
}
