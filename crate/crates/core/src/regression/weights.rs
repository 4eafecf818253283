use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{Dataset, RegressionError};
use crate::spectral;

/// Largest accepted condition number of the predictor covariance.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    #[default]
    Gaussian,
    Epanechnikov,
}

impl KernelFamily {
    /// Density at `z`, both families integrating to 1.
    pub fn density(&self, z: f64) -> f64 {
        match self {
            Self::Gaussian => (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt(),
            Self::Epanechnikov => {
                if z.abs() < 1.0 {
                    0.75 * (1.0 - z * z)
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    #[serde(rename = "h")]
    pub bandwidth: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, bandwidth: f64) -> Result<Self, RegressionError> {
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return Err(RegressionError::InvalidBandwidth(bandwidth));
        }
        Ok(Self { family, bandwidth })
    }

    pub fn gaussian(bandwidth: f64) -> Result<Self, RegressionError> {
        Self::new(KernelFamily::Gaussian, bandwidth)
    }

    /// `K_h(u) = K(u/h)/h`.
    pub fn eval(&self, u: f64) -> f64 {
        self.family.density(u / self.bandwidth) / self.bandwidth
    }
}

/// Predictor mean `X̄` and inverse covariance `Σ̂⁻¹` (1/n normalization).
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalMoments {
    pub mean: DVector<f64>,
    pub inverse_covariance: DMatrix<f64>,
}

impl GlobalMoments {
    pub fn from_predictors(predictors: &[Vec<f64>]) -> Result<Self, RegressionError> {
        let n = predictors.len();
        let p = predictors[0].len();
        let mut mean = DVector::zeros(p);
        for x in predictors {
            for (a, &b) in mean.iter_mut().zip(x) {
                *a += b;
            }
        }
        mean /= n as f64;
        let mut cov = DMatrix::zeros(p, p);
        for x in predictors {
            let c = DVector::from_iterator(p, x.iter().copied()) - &mean;
            cov += &c * c.transpose();
        }
        cov /= n as f64;
        let eig = spectral::sym_eigen(&cov)?;
        let (hi, lo) = (eig.largest(), eig.smallest());
        if !(lo > 0.0) || hi / lo > MAX_CONDITION {
            let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
            return Err(RegressionError::SingularDesign { condition });
        }
        let inverse_covariance = cov
            .cholesky()
            .ok_or(RegressionError::SingularDesign { condition: f64::INFINITY })?
            .inverse();
        Ok(Self { mean, inverse_covariance })
    }

    /// `s_k = 1 + (X_k - X̄)ᵀ Σ̂⁻¹ (x - X̄)` for every training predictor.
    pub fn weights(&self, predictors: &[Vec<f64>], x: &[f64]) -> Result<Vec<f64>, RegressionError> {
        let p = self.mean.len();
        if x.len() != p {
            return Err(RegressionError::PredictorDimension { expected: p, got: x.len() });
        }
        let dx = DVector::from_iterator(p, x.iter().copied()) - &self.mean;
        let a = &self.inverse_covariance * dx;
        Ok(predictors
            .iter()
            .map(|xk| 1.0 + xk.iter().zip(self.mean.iter()).zip(a.iter()).map(|((v, m), c)| (v - m) * c).sum::<f64>())
            .collect())
    }
}

pub fn global_weights(data: &Dataset, x: &[f64]) -> Result<Vec<f64>, RegressionError> {
    GlobalMoments::from_predictors(data.predictors())?.weights(data.predictors(), x)
}

pub fn local_weights(data: &Dataset, x: f64, kernel: &KernelSpec) -> Result<Vec<f64>, RegressionError> {
    if data.dim() != 1 {
        return Err(RegressionError::LocalNeedsScalarPredictor(data.dim()));
    }
    let xs = data.scalar_predictors();
    let w = normalized_local_weights(&xs, x, kernel, None)?;
    let n = xs.len() as f64;
    Ok(w.into_iter().map(|v| v * n).collect())
}

/// Local linear weights divided by the number of points used, so that the
/// weighted mean is `Σ w_k R_k`. With `exclude = Some(k)` the k-th point is
/// left out (its weight is 0) and the normalization uses `n - 1`.
///
/// Written as `s_k = (K_k/μ̂₀)(1 + ū(ū - u_k)/ν)` with `u = X - x`,
/// `ū = μ̂₁/μ̂₀` and `ν = μ̂₂/μ̂₀ - ū²`, which equals
/// `K_k(μ̂₂ - μ̂₁u_k)/σ̂₀²` but is invariant to rescaling the kernel, so the
/// Gaussian can be shifted to avoid underflow far from the data.
pub(crate) fn normalized_local_weights(
    xs: &[f64],
    x: f64,
    kernel: &KernelSpec,
    exclude: Option<usize>,
) -> Result<Vec<f64>, RegressionError> {
    let h = kernel.bandwidth;
    let included = |k: usize| exclude != Some(k);
    let mut raw = vec![0.0; xs.len()];
    match kernel.family {
        KernelFamily::Gaussian => {
            let z2min = xs
                .iter()
                .enumerate()
                .filter(|&(k, _)| included(k))
                .map(|(_, &v)| ((v - x) / h).powi(2))
                .fold(f64::INFINITY, f64::min);
            for (k, &v) in xs.iter().enumerate() {
                if included(k) {
                    raw[k] = (-0.5 * (((v - x) / h).powi(2) - z2min)).exp();
                }
            }
        }
        KernelFamily::Epanechnikov => {
            for (k, &v) in xs.iter().enumerate() {
                if included(k) {
                    raw[k] = kernel.eval(v - x);
                }
            }
        }
    }
    let (mut s0, mut s1) = (0.0, 0.0);
    for (k, &v) in xs.iter().enumerate() {
        s0 += raw[k];
        s1 += raw[k] * (v - x);
    }
    let too_small = || RegressionError::BandwidthTooSmall { bandwidth: h, x };
    if !(s0 > 0.0) {
        return Err(too_small());
    }
    let ubar = s1 / s0;
    let mut nu = 0.0;
    for (k, &v) in xs.iter().enumerate() {
        let d = v - x - ubar;
        nu += raw[k] * d * d;
    }
    nu /= s0;
    if !(nu > 1e-12 * (nu + ubar * ubar)) {
        return Err(too_small());
    }
    // K_k/(n μ̂₀) = raw_k/s0, so these are s_k/count
    Ok(xs
        .iter()
        .enumerate()
        .map(|(k, &v)| if raw[k] == 0.0 { 0.0 } else { raw[k] / s0 * (1.0 + ubar * (ubar - (v - x)) / nu) })
        .collect())
}
