//! Global and local Fréchet regression for Laplacian-valued responses.
//!
//! Predictions are weighted Euclidean means of the responses (or of their
//! power-map images) mapped back into the Laplacian space by projection.

mod dataset;
mod model;
mod validation;
mod weights;

pub use dataset::{validate_squared, Dataset, ResponseSpace};
pub use model::{fit, frechet_mean, frechet_r2, FittedModel, Mode, PredictionDiagnostics};
pub use validation::{
    cv_folds, default_bandwidth_grid, fit_with_config, mspe_cv, select_bandwidth_loocv, BandwidthRule,
    BandwidthSelection, FitConfig,
};
pub use weights::{global_weights, local_weights, GlobalMoments, KernelFamily, KernelSpec, MAX_CONDITION};

use thiserror::Error;

use crate::graph::GraphError;
use crate::metric::MetricError;
use crate::projection::ProjectionError;
use crate::spectral::SpectralError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RegressionError {
    #[error("{predictors} predictors but {responses} responses")]
    LengthMismatch { predictors: usize, responses: usize },
    #[error("need at least 2 observations, got {0}")]
    TooFewObservations(usize),
    #[error("predictor has dimension {got}, expected {expected}")]
    PredictorDimension { expected: usize, got: usize },
    #[error("predictor {0} has a non-finite entry")]
    NonFinitePredictor(usize),
    #[error("response {index} has size {got}, expected {expected}")]
    ResponseSize { index: usize, expected: usize, got: usize },
    #[error("response {index} has bound {got}, expected {expected}")]
    ResponseBound { index: usize, expected: f64, got: f64 },
    #[error("response {index} is invalid: {source}")]
    InvalidResponse { index: usize, source: GraphError },
    #[error("predictor covariance is singular or ill-conditioned (condition number {condition:e})")]
    SingularDesign { condition: f64 },
    #[error("LocalNeedsScalarPredictor: local regression needs p = 1, got p = {0}")]
    LocalNeedsScalarPredictor(usize),
    #[error("local regression needs a kernel")]
    MissingKernel,
    #[error("bandwidth must be finite and positive, got {0}")]
    InvalidBandwidth(f64),
    #[error("bandwidth {bandwidth} too small at x = {x}: no effective neighbours")]
    BandwidthTooSmall { bandwidth: f64, x: f64 },
    #[error("bandwidth grid is empty")]
    EmptyGrid,
    #[error("every bandwidth in the grid failed at some held-out point")]
    AllBandwidthsFailed,
    #[error("all responses are identical; Fréchet variance is zero")]
    ZeroVariance,
    #[error("invalid cross-validation setup: {0}")]
    InvalidFolds(String),
    #[error(transparent)]
    Projection(#[from] ProjectionError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}
