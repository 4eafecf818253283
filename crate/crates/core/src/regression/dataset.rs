use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::RegressionError;
use crate::graph::{derived_bound, validate_laplacian, GraphError, GraphLaplacian, ROW_SUM_TOL, SYMMETRY_TOL};
use crate::spectral;

/// Which set the responses of a [`Dataset`] live in.
///
/// `Laplacian` responses are validated graph Laplacians. `Squared` responses
/// are images `F_2(L) = L²` of Laplacians, used when regressing under the
/// square-root metric with a model that is linear in the root. Such images
/// are symmetric, PSD and have zero row sums, but their off-diagonal entries
/// may be positive, so they are checked against the box `|r_ij| <= W` instead
/// of `[-W, 0]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResponseSpace {
    #[default]
    Laplacian,
    Squared,
}

/// `n` pairs of a predictor vector in `R^p` and a response matrix of size `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    predictors: Vec<Vec<f64>>,
    responses: Vec<DMatrix<f64>>,
    size: usize,
    bound: f64,
    space: ResponseSpace,
}

fn check_predictors(predictors: &[Vec<f64>], n: usize) -> Result<usize, RegressionError> {
    if predictors.len() != n {
        return Err(RegressionError::LengthMismatch { predictors: predictors.len(), responses: n });
    }
    if n < 2 {
        return Err(RegressionError::TooFewObservations(n));
    }
    let p = predictors[0].len();
    if p == 0 {
        return Err(RegressionError::PredictorDimension { expected: 1, got: 0 });
    }
    for (k, x) in predictors.iter().enumerate() {
        if x.len() != p {
            return Err(RegressionError::PredictorDimension { expected: p, got: x.len() });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(RegressionError::NonFinitePredictor(k));
        }
    }
    Ok(p)
}

/// Checks that `r` is a symmetric PSD matrix with zero row sums and
/// off-diagonal magnitudes at most `bound`.
pub fn validate_squared(r: &DMatrix<f64>, bound: f64) -> Result<DMatrix<f64>, GraphError> {
    let (rows, cols) = r.shape();
    if rows != cols {
        return Err(GraphError::NotSquare { rows, cols });
    }
    let m = rows;
    for i in 0..m {
        for j in 0..m {
            if !r[(i, j)].is_finite() {
                return Err(GraphError::NonFinite(i, j));
            }
            if j > i && (r[(i, j)] - r[(j, i)]).abs() > SYMMETRY_TOL {
                return Err(GraphError::NotSymmetric(i, j));
            }
        }
    }
    let sym = DMatrix::from_fn(m, m, |i, j| 0.5 * (r[(i, j)] + r[(j, i)]));
    for i in 0..m {
        for j in (i + 1)..m {
            if sym[(i, j)].abs() > bound + crate::graph::BOX_TOL {
                return Err(GraphError::OffDiagonalOutOfBox(i, j, sym[(i, j)]));
            }
        }
    }
    // |r_ij| <= W off the diagonal and zero row sums put the diagonal in [0, (m-1)W]
    let scale = bound * m as f64;
    for i in 0..m {
        let s: f64 = sym.row(i).iter().sum();
        if s.abs() > ROW_SUM_TOL * scale.max(f64::MIN_POSITIVE) * m as f64 {
            return Err(GraphError::RowSumNonZero(i, s));
        }
    }
    let eig = spectral::sym_eigen(&sym).map_err(|_| GraphError::NotSymmetric(0, 0))?;
    if eig.smallest() < -spectral::NEGATIVE_EIGEN_TOL * (1.0 + eig.largest().abs()) {
        return Err(GraphError::OffDiagonalOutOfBox(0, 0, eig.smallest()));
    }
    Ok(sym)
}

impl Dataset {
    /// Dataset of Laplacian responses. All responses must share `m` and `W`.
    pub fn new(predictors: Vec<Vec<f64>>, responses: Vec<GraphLaplacian>) -> Result<Self, RegressionError> {
        check_predictors(&predictors, responses.len())?;
        let size = responses[0].size();
        let bound = responses[0].bound();
        for (k, l) in responses.iter().enumerate() {
            if l.size() != size {
                return Err(RegressionError::ResponseSize { index: k, expected: size, got: l.size() });
            }
            if l.bound() != bound {
                return Err(RegressionError::ResponseBound { index: k, expected: bound, got: l.bound() });
            }
        }
        let responses = responses.into_iter().map(GraphLaplacian::into_matrix).collect();
        Ok(Self { predictors, responses, size, bound, space: ResponseSpace::Laplacian })
    }

    /// Validates raw matrices as responses in `space`. Without an explicit
    /// bound, `W` is the largest off-diagonal magnitude in the data.
    pub fn from_matrices(
        predictors: Vec<Vec<f64>>,
        raw: Vec<DMatrix<f64>>,
        bound: Option<f64>,
        space: ResponseSpace,
    ) -> Result<Self, RegressionError> {
        check_predictors(&predictors, raw.len())?;
        let size = raw[0].nrows();
        let bound = bound.unwrap_or_else(|| derived_bound(raw.iter()));
        let mut responses = Vec::with_capacity(raw.len());
        for (k, r) in raw.iter().enumerate() {
            if r.nrows() != size || r.ncols() != size {
                return Err(RegressionError::ResponseSize { index: k, expected: size, got: r.nrows() });
            }
            let checked = match space {
                ResponseSpace::Laplacian => validate_laplacian(r, bound).map(GraphLaplacian::into_matrix),
                ResponseSpace::Squared => validate_squared(r, bound),
            };
            responses.push(checked.map_err(|source| RegressionError::InvalidResponse { index: k, source })?);
        }
        Ok(Self { predictors, responses, size, bound, space })
    }

    /// Squared-space dataset with responses `L_k²`. Without an explicit
    /// bound, `W` is the largest off-diagonal magnitude of the squares.
    pub fn squared(
        predictors: Vec<Vec<f64>>,
        roots: &[GraphLaplacian],
        bound: Option<f64>,
    ) -> Result<Self, RegressionError> {
        let images = roots
            .iter()
            .map(|l| {
                let a = l.matrix();
                let sq = a * a;
                DMatrix::from_fn(sq.nrows(), sq.ncols(), |i, j| 0.5 * (sq[(i, j)] + sq[(j, i)]))
            })
            .collect();
        Self::from_matrices(predictors, images, bound, ResponseSpace::Squared)
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    /// Number of nodes `m`.
    pub fn size(&self) -> usize {
        self.size
    }

    /// Predictor dimension `p`.
    pub fn dim(&self) -> usize {
        self.predictors[0].len()
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn space(&self) -> ResponseSpace {
        self.space
    }

    pub fn predictors(&self) -> &[Vec<f64>] {
        &self.predictors
    }

    pub fn responses(&self) -> &[DMatrix<f64>] {
        &self.responses
    }

    pub fn predictor(&self, k: usize) -> &[f64] {
        &self.predictors[k]
    }

    pub fn response(&self, k: usize) -> &DMatrix<f64> {
        &self.responses[k]
    }

    /// First coordinate of each predictor, for scalar-predictor methods.
    pub fn scalar_predictors(&self) -> Vec<f64> {
        self.predictors.iter().map(|x| x[0]).collect()
    }

    /// Responses as validated Laplacians; `None` for squared-space data.
    pub fn laplacians(&self) -> Option<Vec<GraphLaplacian>> {
        match self.space {
            ResponseSpace::Laplacian => Some(
                self.responses
                    .iter()
                    .map(|r| crate::graph::laplacian_unchecked(r.clone(), self.bound))
                    .collect(),
            ),
            ResponseSpace::Squared => None,
        }
    }

    /// The pairs at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self, RegressionError> {
        if indices.len() < 2 {
            return Err(RegressionError::TooFewObservations(indices.len()));
        }
        Ok(Self {
            predictors: indices.iter().map(|&k| self.predictors[k].clone()).collect(),
            responses: indices.iter().map(|&k| self.responses[k].clone()).collect(),
            size: self.size,
            bound: self.bound,
            space: self.space,
        })
    }

    /// True when every response is bit-identical to the first.
    pub fn responses_identical(&self) -> bool {
        self.responses.iter().all(|r| r == &self.responses[0])
    }
}
