//! Frobenius and power metrics between graph Laplacians.

use std::collections::HashMap;
use std::sync::Mutex;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::GraphLaplacian;
use crate::spectral::{self, SpectralError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("power exponent must be positive and finite, got {0}")]
    InvalidAlpha(f64),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

/// Choice of distance on the Laplacian space.
///
/// `Power { alpha: 1.0 }` behaves exactly like `Frobenius` everywhere in the
/// crate, including in regression.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MetricSpec {
    Frobenius,
    Power { alpha: f64 },
}

impl MetricSpec {
    pub fn power(alpha: f64) -> Result<Self, MetricError> {
        if alpha.is_finite() && alpha > 0.0 {
            Ok(Self::Power { alpha })
        } else {
            Err(MetricError::InvalidAlpha(alpha))
        }
    }

    /// The square-root metric.
    pub fn square_root() -> Self {
        Self::Power { alpha: 0.5 }
    }

    /// Exponent of the matrix power map; 1 for Frobenius.
    pub fn alpha(&self) -> f64 {
        match *self {
            Self::Frobenius => 1.0,
            Self::Power { alpha } => alpha,
        }
    }

    /// True when the metric is plain Frobenius distance (including `Power` with α = 1).
    pub fn is_frobenius(&self) -> bool {
        self.alpha() == 1.0
    }

    /// Image of a matrix under the power map `F_α` used by this metric.
    pub fn transform(&self, a: &DMatrix<f64>) -> Result<DMatrix<f64>, MetricError> {
        if self.is_frobenius() {
            Ok(a.clone())
        } else {
            Ok(spectral::matrix_power(a, self.alpha())?)
        }
    }
}

pub(crate) fn frobenius_distance_sq(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn same_size(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<(), MetricError> {
    if a.shape() != b.shape() {
        return Err(MetricError::DimensionMismatch(a.nrows(), b.nrows()));
    }
    Ok(())
}

/// `d_F(L1, L2) = ‖L1 - L2‖_F` or `d_{F,α}(L1, L2) = ‖F_α(L1) - F_α(L2)‖_F`.
pub fn distance(l1: &GraphLaplacian, l2: &GraphLaplacian, metric: &MetricSpec) -> Result<f64, MetricError> {
    matrix_distance(l1.matrix(), l2.matrix(), metric)
}

/// [`distance`] for PSD matrices that are not necessarily Laplacians.
pub fn matrix_distance(a: &DMatrix<f64>, b: &DMatrix<f64>, metric: &MetricSpec) -> Result<f64, MetricError> {
    same_size(a, b)?;
    if metric.is_frobenius() {
        return Ok(frobenius_distance_sq(a, b).sqrt());
    }
    let fa = metric.transform(a)?;
    let fb = metric.transform(b)?;
    Ok(frobenius_distance_sq(&fa, &fb).sqrt())
}

/// Memoizes power-map images per object, for loops over many pairwise
/// distances. Keys are caller-chosen identities (e.g. sample indices);
/// results never depend on whether an entry was cached.
pub struct PowerCache {
    metric: MetricSpec,
    images: Mutex<HashMap<usize, DMatrix<f64>>>,
}

impl PowerCache {
    pub fn new(metric: MetricSpec) -> Self {
        Self { metric, images: Mutex::new(HashMap::new()) }
    }

    pub fn metric(&self) -> MetricSpec {
        self.metric
    }

    pub fn image(&self, key: usize, a: &DMatrix<f64>) -> Result<DMatrix<f64>, MetricError> {
        if let Some(img) = self.images.lock().unwrap_or_else(|e| e.into_inner()).get(&key) {
            return Ok(img.clone());
        }
        let img = self.metric.transform(a)?;
        self.images.lock().unwrap_or_else(|e| e.into_inner()).insert(key, img.clone());
        Ok(img)
    }

    /// Distance between the cached object `key` and an uncached matrix image.
    pub fn distance_to_image(&self, key: usize, a: &DMatrix<f64>, image: &DMatrix<f64>) -> Result<f64, MetricError> {
        let fa = self.image(key, a)?;
        same_size(&fa, image)?;
        Ok(frobenius_distance_sq(&fa, image).sqrt())
    }

    pub fn len(&self) -> usize {
        self.images.lock().unwrap_or_else(|e| e.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
