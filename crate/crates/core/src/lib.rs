//! Double machine learning estimation of distributional local average
//! treatment effects with instrumental variables, using Kolmogorov-Arnold
//! networks or random forests for the nuisance functions.

pub mod data;
pub mod dgp;
pub mod error;
pub mod estimator;
pub mod forest;
pub mod kan;
pub mod montecarlo;
pub mod numeric;
pub mod nuisance;
pub mod rng;
mod scalar;
pub mod spline;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Dataset64 = data::Dataset<f64>;
pub type Dataset32 = data::Dataset<f32>;
pub type YGrid64 = data::YGrid<f64>;
pub type YGrid32 = data::YGrid<f32>;
pub type KanModel64 = kan::KanModel<f64>;
pub type KanModel32 = kan::KanModel<f32>;
pub type FittedKan64 = kan::FittedKan<f64>;
pub type FittedKan32 = kan::FittedKan<f32>;
pub type ForestModel64 = forest::ForestModel<f64>;
pub type ForestModel32 = forest::ForestModel<f32>;
pub type DivLateCurve64 = estimator::DivLateCurve<f64>;
pub type DivLateCurve32 = estimator::DivLateCurve<f32>;
