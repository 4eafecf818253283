//! Graph Laplacians, adjacency matrices and half-vectorization.
//!
//! A graph Laplacian of a simple, undirected, weighted graph on `m` labeled
//! nodes with edge weights in `[0, W]` is a symmetric matrix with zero row
//! sums and off-diagonal entries in `[-W, 0]`. [`GraphLaplacian`] can only be
//! obtained through [`validate_laplacian`] (or the conversions below), so a
//! value of that type always satisfies these constraints.
//!
//! The half-vector of a Laplacian lists its strict upper triangle in
//! row-major order: `(l_01, l_02, ..., l_0(m-1), l_12, ..., l_(m-2)(m-1))`.
//! This order is canonical for every file format in the crate.

use nalgebra::DMatrix;
use thiserror::Error;

/// Maximum absolute asymmetry accepted on construction from raw data.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Slack on the off-diagonal box `[-W, 0]`.
pub const BOX_TOL: f64 = 1e-12;
/// Row sums must satisfy `|sum| <= ROW_SUM_TOL * m * W`.
pub const ROW_SUM_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric at ({0}, {1})")]
    NotSymmetric(usize, usize),
    #[error("row {0} does not sum to zero (sum = {1:e})")]
    RowSumNonZero(usize, f64),
    #[error("off-diagonal entry ({0}, {1}) = {2} is outside [-W, 0]")]
    OffDiagonalOutOfBox(usize, usize, f64),
    #[error("half-vector entry {0} = {1} is outside [-W, 0]")]
    EntryOutOfBox(usize, f64),
    #[error("adjacency matrix has nonzero diagonal at {0}")]
    NonZeroDiagonal(usize),
    #[error("adjacency weight ({0}, {1}) = {2} is outside [0, W]")]
    WeightOutOfRange(usize, usize, f64),
    #[error("half-vector length {len} does not match m(m-1)/2 for any m")]
    BadHalfVectorLength { len: usize },
    #[error("bound W must be finite and nonnegative, got {0}")]
    InvalidBound(f64),
    #[error("matrix contains a non-finite entry at ({0}, {1})")]
    NonFinite(usize, usize),
}

/// Number of free off-diagonal coordinates of an `m x m` Laplacian.
pub fn half_len(m: usize) -> usize {
    m * m.saturating_sub(1) / 2
}

/// Recovers `m` from a half-vector length, if `len = m(m-1)/2` for some `m`.
pub fn size_from_half_len(len: usize) -> Option<usize> {
    let mut m = 1usize;
    while half_len(m) < len {
        m += 1;
    }
    (half_len(m) == len).then_some(m)
}

fn check_bound(w: f64) -> Result<(), GraphError> {
    if w.is_finite() && w >= 0.0 {
        Ok(())
    } else {
        Err(GraphError::InvalidBound(w))
    }
}

/// A validated graph Laplacian together with its edge-weight bound `W`.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphLaplacian {
    entries: DMatrix<f64>,
    bound: f64,
}

impl GraphLaplacian {
    pub fn size(&self) -> usize {
        self.entries.nrows()
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    /// The empty graph on `m` nodes.
    pub fn zeros(m: usize, bound: f64) -> Result<Self, GraphError> {
        check_bound(bound)?;
        Ok(Self { entries: DMatrix::zeros(m, m), bound })
    }

    /// Same entries, different bound. Fails if the entries leave the new box.
    pub fn with_bound(&self, bound: f64) -> Result<Self, GraphError> {
        validate_laplacian(&self.entries, bound)
    }

    /// Rows of the matrix, row-major.
    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        matrix_rows(&self.entries)
    }
}

pub(crate) fn matrix_rows(a: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..a.nrows()).map(|i| (0..a.ncols()).map(|j| a[(i, j)]).collect()).collect()
}

/// Builds a matrix from row-major rows, failing if the rows are ragged.
pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, GraphError> {
    let m = rows.len();
    for row in rows {
        if row.len() != m {
            return Err(GraphError::NotSquare { rows: m, cols: row.len() });
        }
    }
    Ok(DMatrix::from_fn(m, m, |i, j| rows[i][j]))
}

/// Checks the three defining constraints and returns the validated Laplacian.
///
/// Small asymmetries (at most [`SYMMETRY_TOL`]) are removed by replacing the
/// input with `(M + M^T) / 2`. Errors name the first violating index pair in
/// row-major order.
pub fn validate_laplacian(raw: &DMatrix<f64>, bound: f64) -> Result<GraphLaplacian, GraphError> {
    check_bound(bound)?;
    let (rows, cols) = raw.shape();
    if rows != cols {
        return Err(GraphError::NotSquare { rows, cols });
    }
    let m = rows;
    for i in 0..m {
        for j in 0..m {
            if !raw[(i, j)].is_finite() {
                return Err(GraphError::NonFinite(i, j));
            }
        }
    }
    for i in 0..m {
        for j in (i + 1)..m {
            if (raw[(i, j)] - raw[(j, i)]).abs() > SYMMETRY_TOL {
                return Err(GraphError::NotSymmetric(i, j));
            }
        }
    }
    let sym = DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            raw[(i, i)]
        } else {
            0.5 * (raw[(i, j)] + raw[(j, i)])
        }
    });
    for i in 0..m {
        for j in 0..m {
            if i == j {
                continue;
            }
            let v = sym[(i, j)];
            if v > BOX_TOL || v < -bound - BOX_TOL {
                return Err(GraphError::OffDiagonalOutOfBox(i.min(j), i.max(j), v));
            }
        }
    }
    let row_tol = ROW_SUM_TOL * m as f64 * bound;
    for i in 0..m {
        let s: f64 = sym.row(i).iter().sum();
        if s.abs() > row_tol {
            return Err(GraphError::RowSumNonZero(i, s));
        }
    }
    Ok(GraphLaplacian { entries: sym, bound })
}

/// A validated symmetric adjacency matrix with zero diagonal and weights in `[0, W]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyMatrix {
    weights: DMatrix<f64>,
    bound: f64,
}

impl AdjacencyMatrix {
    pub fn new(weights: DMatrix<f64>, bound: f64) -> Result<Self, GraphError> {
        check_bound(bound)?;
        let (rows, cols) = weights.shape();
        if rows != cols {
            return Err(GraphError::NotSquare { rows, cols });
        }
        for i in 0..rows {
            if weights[(i, i)] != 0.0 {
                return Err(GraphError::NonZeroDiagonal(i));
            }
            for j in (i + 1)..rows {
                let w = weights[(i, j)];
                if w != weights[(j, i)] {
                    return Err(GraphError::NotSymmetric(i, j));
                }
                if !(0.0..=bound).contains(&w) {
                    return Err(GraphError::WeightOutOfRange(i, j, w));
                }
            }
        }
        Ok(Self { weights, bound })
    }

    pub fn size(&self) -> usize {
        self.weights.nrows()
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.weights
    }
}

/// `l_ij = -w_ij` off the diagonal, `l_ii = sum_{k != i} w_ik`.
pub fn laplacian_from_adjacency(adj: &AdjacencyMatrix) -> GraphLaplacian {
    let m = adj.size();
    let w = adj.matrix();
    let mut entries = DMatrix::zeros(m, m);
    for i in 0..m {
        let mut degree = 0.0;
        for j in 0..m {
            if i != j {
                entries[(i, j)] = -w[(i, j)];
                degree += w[(i, j)];
            }
        }
        entries[(i, i)] = degree;
    }
    GraphLaplacian { entries, bound: adj.bound() }
}

pub fn adjacency_from_laplacian(lap: &GraphLaplacian) -> AdjacencyMatrix {
    let m = lap.size();
    let l = lap.matrix();
    // 0.0 - x rather than -x so empty edges come out as +0.0
    let weights = DMatrix::from_fn(m, m, |i, j| if i == j { 0.0 } else { 0.0 - l[(i, j)] });
    AdjacencyMatrix { weights, bound: lap.bound() }
}

/// Strict upper triangle of a Laplacian, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfVector {
    values: Vec<f64>,
    size: usize,
}

impl HalfVector {
    pub fn new(values: Vec<f64>) -> Result<Self, GraphError> {
        let size = size_from_half_len(values.len())
            .ok_or(GraphError::BadHalfVectorLength { len: values.len() })?;
        Ok(Self { values, size })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn vech(lap: &GraphLaplacian) -> HalfVector {
    HalfVector { values: upper_triangle(lap.matrix()), size: lap.size() }
}

pub(crate) fn upper_triangle(a: &DMatrix<f64>) -> Vec<f64> {
    let m = a.nrows();
    let mut out = Vec::with_capacity(half_len(m));
    for i in 0..m {
        for j in (i + 1)..m {
            out.push(a[(i, j)]);
        }
    }
    out
}

/// Fills the off-diagonals symmetrically from `values` and sets the diagonal
/// to the negated row sum. No checks.
pub(crate) fn laplacian_matrix_from_half(values: &[f64], m: usize) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(m, m);
    let mut k = 0;
    for i in 0..m {
        for j in (i + 1)..m {
            a[(i, j)] = values[k];
            a[(j, i)] = values[k];
            k += 1;
        }
    }
    for i in 0..m {
        let s: f64 = (0..m).filter(|&j| j != i).map(|j| a[(i, j)]).sum();
        a[(i, i)] = -s;
    }
    a
}

/// Inverse half-vectorization. Every entry must lie in `[-W, 0]`.
pub fn vech_inv(v: &HalfVector, bound: f64) -> Result<GraphLaplacian, GraphError> {
    check_bound(bound)?;
    for (k, &x) in v.values.iter().enumerate() {
        if !(x >= -bound && x <= 0.0) {
            return Err(GraphError::EntryOutOfBox(k, x));
        }
    }
    Ok(GraphLaplacian { entries: laplacian_matrix_from_half(&v.values, v.size), bound })
}

/// Internal constructor for matrices that are Laplacians by construction
/// (box-feasible half-vector with the diagonal completed from row sums).
pub(crate) fn laplacian_unchecked(entries: DMatrix<f64>, bound: f64) -> GraphLaplacian {
    debug_assert!(validate_laplacian(&entries, bound).is_ok());
    GraphLaplacian { entries, bound }
}

/// Largest off-diagonal magnitude across a set of matrices, the default `W`
/// when ingesting data without a declared bound.
pub fn derived_bound<'a>(mats: impl IntoIterator<Item = &'a DMatrix<f64>>) -> f64 {
    let mut w = 0.0f64;
    for a in mats {
        let m = a.nrows();
        for i in 0..m {
            for j in 0..a.ncols() {
                if i != j {
                    w = w.max(a[(i, j)].abs());
                }
            }
        }
    }
    w
}
