//! Projections onto the space of graph Laplacians and onto the capped PSD
//! embedding space.
//!
//! The Laplacian projection minimizes `‖B - L‖_F²` over Laplacians with
//! off-diagonal entries in `[-W, 0]`. Symmetry and zero row sums are built
//! into the parameterization: the free variables are the `d = m(m-1)/2`
//! strict upper-triangle entries `v`, and the diagonal is their negated row
//! sum. What remains is a strictly convex quadratic over the box `[-W, 0]^d`,
//!
//! ```text
//! f(v) = Σ_{i<j} (b_ij - v_ij)² + (b_ji - v_ij)²  +  Σ_i (b_ii + Σ_{j≠i} v_ij)²,
//! ```
//!
//! solved by accelerated projected gradient with a constant step `1/λ_max(∇²f)`.

use std::collections::HashMap;
use std::sync::{OnceLock, RwLock};

use nalgebra::DMatrix;
use thiserror::Error;

use crate::graph::{half_len, laplacian_matrix_from_half, laplacian_unchecked, upper_triangle, GraphLaplacian, HalfVector};
use crate::spectral::{self, SpectralDecomposition, SpectralError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProjectionError {
    #[error("matrix is not square ({0}x{1})")]
    NotSquare(usize, usize),
    #[error("bound W must be finite and nonnegative, got {0}")]
    InvalidBound(f64),
    #[error("eigenvalue cap must be finite and nonnegative, got {0}")]
    InvalidCap(f64),
    #[error("warm start has size {got}, expected {expected}")]
    WarmStartMismatch { expected: usize, got: usize },
    #[error("invalid solver settings: {0}")]
    InvalidSettings(&'static str),
    #[error("Laplacian projection did not converge in {iterations} iterations (residual {residual:e})")]
    NoConvergence { best: Box<GraphLaplacian>, iterations: usize, residual: f64 },
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

/// Stopping rule for the Laplacian projection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpSettings {
    /// Stop once the projected-gradient norm `λ_max ‖v - Π(v - ∇f(v)/λ_max)‖`
    /// falls to this value.
    pub tolerance: f64,
    pub max_iters: usize,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self { tolerance: 1e-10, max_iters: 50_000 }
    }
}

impl QpSettings {
    pub fn new(tolerance: f64, max_iters: usize) -> Result<Self, ProjectionError> {
        let s = Self { tolerance, max_iters };
        s.check()?;
        Ok(s)
    }

    fn check(&self) -> Result<(), ProjectionError> {
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(ProjectionError::InvalidSettings("tolerance must be positive"));
        }
        if self.max_iters == 0 {
            return Err(ProjectionError::InvalidSettings("max_iters must be at least 1"));
        }
        Ok(())
    }
}

/// PSD matrices of size `m` whose largest eigenvalue is at most `cap`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmbeddingSpace {
    pub size: usize,
    pub cap: f64,
}

impl EmbeddingSpace {
    pub fn new(size: usize, cap: f64) -> Result<Self, ProjectionError> {
        if !(cap.is_finite() && cap >= 0.0) {
            return Err(ProjectionError::InvalidCap(cap));
        }
        Ok(Self { size, cap })
    }

    /// Cap `D^α` with the Gershgorin bound `D = 2(m-1)W` on Laplacian eigenvalues.
    pub fn for_laplacians(size: usize, bound: f64, alpha: f64) -> Result<Self, ProjectionError> {
        Self::new(size, default_eigen_bound(size, bound).powf(alpha))
    }
}

/// `2(m-1)W`, an upper bound on the largest eigenvalue of any Laplacian in the box.
pub fn default_eigen_bound(size: usize, bound: f64) -> f64 {
    2.0 * size.saturating_sub(1) as f64 * bound
}

/// Result of a Laplacian projection with solver diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianProjection {
    pub laplacian: GraphLaplacian,
    pub iterations: usize,
    /// Final projected-gradient norm.
    pub residual: f64,
}

/// Largest eigenvalue of the reduced Hessian for each `m`, estimated once by
/// power iteration.
fn hessian_bound(m: usize) -> f64 {
    static CACHE: OnceLock<RwLock<HashMap<usize, f64>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| RwLock::new(HashMap::new()));
    if let Some(&l) = cache.read().unwrap_or_else(|e| e.into_inner()).get(&m) {
        return l;
    }
    let l = estimate_hessian_bound(m);
    cache.write().unwrap_or_else(|e| e.into_inner()).insert(m, l);
    l
}

/// Hessian-vector product of `f`: `4u + 2 Mᵀ M u`, where `M` maps the
/// half-vector to the row sums.
fn hessian_apply(u: &[f64], m: usize, row: &mut [f64], out: &mut [f64]) {
    row.iter_mut().for_each(|r| *r = 0.0);
    let mut k = 0;
    for i in 0..m {
        for j in (i + 1)..m {
            row[i] += u[k];
            row[j] += u[k];
            k += 1;
        }
    }
    k = 0;
    for i in 0..m {
        for j in (i + 1)..m {
            out[k] = 4.0 * u[k] + 2.0 * (row[i] + row[j]);
            k += 1;
        }
    }
}

pub(crate) fn estimate_hessian_bound(m: usize) -> f64 {
    let d = half_len(m);
    if d == 0 {
        return 1.0;
    }
    // deterministic, non-symmetric start so no eigen-direction is missed
    let mut u: Vec<f64> = (0..d).map(|k| 1.0 + (k as f64 * 0.618_033_988_7).fract()).collect();
    let mut hu = vec![0.0; d];
    let mut row = vec![0.0; m];
    let mut estimate = 0.0;
    for _ in 0..500 {
        let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        u.iter_mut().for_each(|x| *x /= norm);
        hessian_apply(&u, m, &mut row, &mut hu);
        let next: f64 = u.iter().zip(&hu).map(|(a, b)| a * b).sum();
        std::mem::swap(&mut u, &mut hu);
        if (next - estimate).abs() <= 1e-14 * next {
            estimate = next;
            break;
        }
        estimate = next;
    }
    // Rayleigh quotients approach from below; pad so 1/L stays a safe step.
    estimate * (1.0 + 1e-6)
}

/// Reduced problem data: `b_ij + b_ji` for each pair and the diagonal of `B`.
struct Reduced {
    m: usize,
    pair_sum: Vec<f64>,
    diag: Vec<f64>,
}

impl Reduced {
    fn new(b: &DMatrix<f64>) -> Self {
        let m = b.nrows();
        let mut pair_sum = Vec::with_capacity(half_len(m));
        for i in 0..m {
            for j in (i + 1)..m {
                pair_sum.push(b[(i, j)] + b[(j, i)]);
            }
        }
        Self { m, pair_sum, diag: (0..m).map(|i| b[(i, i)]).collect() }
    }

    /// Gradient of `f` at `v` (up to the constant factor 2 folded into the step).
    fn gradient(&self, v: &[f64], row: &mut [f64], grad: &mut [f64]) {
        let m = self.m;
        row.copy_from_slice(&self.diag);
        let mut k = 0;
        for i in 0..m {
            for j in (i + 1)..m {
                row[i] += v[k];
                row[j] += v[k];
                k += 1;
            }
        }
        k = 0;
        for i in 0..m {
            for j in (i + 1)..m {
                grad[k] = 2.0 * (2.0 * v[k] - self.pair_sum[k]) + 2.0 * (row[i] + row[j]);
                k += 1;
            }
        }
    }
}

/// Projection onto the Laplacian space with the default cold start.
pub fn project_laplacian(
    b: &DMatrix<f64>,
    bound: f64,
    settings: &QpSettings,
) -> Result<GraphLaplacian, ProjectionError> {
    project_laplacian_from(b, bound, settings, None).map(|p| p.laplacian)
}

/// Projection onto the Laplacian space, optionally starting from a previous
/// solution's half-vector (useful when sweeping nearby targets).
///
/// The input need not be symmetric; only `b_ij + b_ji` and the diagonal
/// enter the objective. On hitting `max_iters` the best iterate so far is
/// returned inside [`ProjectionError::NoConvergence`].
pub fn project_laplacian_from(
    b: &DMatrix<f64>,
    bound: f64,
    settings: &QpSettings,
    warm_start: Option<&HalfVector>,
) -> Result<LaplacianProjection, ProjectionError> {
    settings.check()?;
    let (r, c) = b.shape();
    if r != c {
        return Err(ProjectionError::NotSquare(r, c));
    }
    if !(bound.is_finite() && bound >= 0.0) {
        return Err(ProjectionError::InvalidBound(bound));
    }
    let m = r;
    let d = half_len(m);
    let problem = Reduced::new(b);
    let clamp = |x: f64| x.clamp(-bound, 0.0);

    let mut x: Vec<f64> = match warm_start {
        Some(hv) if hv.size() != m => {
            return Err(ProjectionError::WarmStartMismatch { expected: m, got: hv.size() })
        }
        Some(hv) => hv.values().iter().map(|&t| clamp(t)).collect(),
        // the pairwise average is the unconstrained optimum when B already
        // has zero row sums, which is the common case
        None => problem.pair_sum.iter().map(|&s| clamp(0.5 * s)).collect(),
    };

    let lip = hessian_bound(m);
    let step = 1.0 / lip;
    // strong convexity modulus of f is at least 4
    let q = (4.0 / lip).min(1.0);
    let momentum = (1.0 - q.sqrt()) / (1.0 + q.sqrt());

    let mut y = x.clone();
    let mut x_prev = x.clone();
    let mut grad = vec![0.0; d];
    let mut row = vec![0.0; m];
    let mut residual = f64::INFINITY;
    let mut best = x.clone();
    let mut best_residual = f64::INFINITY;
    let mut iterations = 0;

    // residual at the starting point
    problem.gradient(&x, &mut row, &mut grad);
    let mut res2 = 0.0;
    for k in 0..d {
        let t = x[k] - clamp(x[k] - step * grad[k]);
        res2 += t * t;
    }
    residual = residual.min(lip * res2.sqrt());
    if residual <= best_residual {
        best_residual = residual;
        best.copy_from_slice(&x);
    }

    while best_residual > settings.tolerance && iterations < settings.max_iters {
        iterations += 1;
        problem.gradient(&y, &mut row, &mut grad);
        x_prev.copy_from_slice(&x);
        for k in 0..d {
            x[k] = clamp(y[k] - step * grad[k]);
        }
        // gradient-mapping restart: drop momentum when it points uphill
        let mut uphill = 0.0;
        for k in 0..d {
            uphill += (y[k] - x[k]) * (x[k] - x_prev[k]);
        }
        let beta = if uphill > 0.0 { 0.0 } else { momentum };
        for k in 0..d {
            y[k] = x[k] + beta * (x[k] - x_prev[k]);
        }

        problem.gradient(&x, &mut row, &mut grad);
        let mut res2 = 0.0;
        for k in 0..d {
            let t = x[k] - clamp(x[k] - step * grad[k]);
            res2 += t * t;
        }
        residual = lip * res2.sqrt();
        if residual < best_residual {
            best_residual = residual;
            best.copy_from_slice(&x);
        }
    }

    let laplacian = laplacian_unchecked(laplacian_matrix_from_half(&best, m), bound);
    if best_residual > settings.tolerance {
        return Err(ProjectionError::NoConvergence {
            best: Box::new(laplacian),
            iterations,
            residual: best_residual,
        });
    }
    Ok(LaplacianProjection { laplacian, iterations, residual: best_residual })
}

/// `Σ max(0, λ_i) v_i v_iᵀ`.
pub fn project_psd(b: &DMatrix<f64>) -> Result<DMatrix<f64>, ProjectionError> {
    let eig = spectral::sym_eigen(b)?;
    Ok(eig.map_eigenvalues(|l| l.max(0.0)))
}

/// Clamps the eigenvalues of `b` into `[0, cap]`. Equivalent to projecting
/// onto the PSD cone and then truncating at the cap, as both steps act on
/// the same eigenbasis.
pub fn project_embedding(b: &DMatrix<f64>, space: &EmbeddingSpace) -> Result<DMatrix<f64>, ProjectionError> {
    let eig = spectral::sym_eigen(b)?;
    Ok(eig.map_eigenvalues(|l| l.clamp(0.0, space.cap)))
}

/// `F_{1/α}(P_M(b))` from a single eigendecomposition of `b`.
pub fn project_embedding_then_power(
    b: &DMatrix<f64>,
    space: &EmbeddingSpace,
    inverse_alpha: f64,
) -> Result<DMatrix<f64>, ProjectionError> {
    let eig: SpectralDecomposition = spectral::sym_eigen(b)?;
    Ok(eig.map_eigenvalues(|l| spectral::power_eigenvalue(l.clamp(0.0, space.cap), inverse_alpha)))
}

/// Half-vector of the strict upper triangle of any square matrix, for warm starts.
pub fn half_of(a: &DMatrix<f64>) -> HalfVector {
    HalfVector::new(upper_triangle(a)).expect("upper triangle always has m(m-1)/2 entries")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{validate_laplacian, vech, vech_inv};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn m2(a: f64, b: f64, c: f64, d: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[a, b, c, d])
    }

    fn settings() -> QpSettings {
        QpSettings::default()
    }

    #[test]
    fn hessian_bound_matches_closed_form() {
        // λ_max(4I + 2MᵀM) = 4 + 2(2m - 2) = 4m
        for m in 2..15 {
            let l = estimate_hessian_bound(m);
            assert!((l / (4.0 * m as f64) - 1.0).abs() < 1e-5, "m={m}: {l}");
            assert!(l >= 4.0 * m as f64);
        }
    }

    #[test]
    fn feasible_point_is_fixed() {
        let b = m2(1.0, -1.0, -1.0, 1.0);
        let p = project_laplacian(&b, 1.0, &settings()).unwrap();
        assert_eq!(p.matrix(), &b);
    }

    #[test]
    fn two_node_closed_form_examples() {
        let p = project_laplacian(&m2(1.0, 0.0, 0.0, 1.0), 2.0, &settings()).unwrap();
        assert!((p.matrix() - m2(0.5, -0.5, -0.5, 0.5)).abs().max() < 1e-12);
        let p = project_laplacian(&m2(-4.0, 1.0, 1.0, -4.0), 1.0, &settings()).unwrap();
        assert_eq!(p.matrix(), &DMatrix::zeros(2, 2));
    }

    #[test]
    fn output_is_a_valid_laplacian() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let m = rng.random_range(2..9);
            let b = DMatrix::from_fn(m, m, |_, _| rng.random_range(-3.0..3.0));
            let w = rng.random_range(0.1..2.0);
            let p = project_laplacian_from(&b, w, &settings(), None).unwrap();
            assert!(validate_laplacian(p.laplacian.matrix(), w).is_ok());
            assert!(p.residual <= 1e-10);
        }
    }

    #[test]
    fn warm_start_gives_same_answer() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let b = DMatrix::from_fn(6, 6, |_, _| rng.random_range(-2.0..2.0));
        let cold = project_laplacian_from(&b, 1.0, &settings(), None).unwrap();
        let guess = HalfVector::new(vec![-0.5; 15]).unwrap();
        let warm = project_laplacian_from(&b, 1.0, &settings(), Some(&guess)).unwrap();
        assert!((cold.laplacian.matrix() - warm.laplacian.matrix()).abs().max() < 1e-9);
        let again = project_laplacian_from(&b, 1.0, &settings(), Some(&vech(&cold.laplacian))).unwrap();
        assert_eq!(again.iterations, 0);
        let bad = HalfVector::new(vec![0.0; 3]).unwrap();
        assert!(matches!(
            project_laplacian_from(&b, 1.0, &settings(), Some(&bad)),
            Err(ProjectionError::WarmStartMismatch { expected: 6, got: 3 })
        ));
    }

    #[test]
    fn iteration_cap_returns_best_iterate() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let b = DMatrix::from_fn(8, 8, |_, _| rng.random_range(-5.0..5.0));
        let tight = QpSettings::new(1e-14, 1).unwrap();
        match project_laplacian(&b, 1.0, &tight) {
            Err(ProjectionError::NoConvergence { best, iterations, .. }) => {
                assert_eq!(iterations, 1);
                assert!(validate_laplacian(best.matrix(), 1.0).is_ok());
            }
            other => panic!("expected NoConvergence, got {other:?}"),
        }
        assert!(QpSettings::new(0.0, 10).is_err());
        assert!(QpSettings::new(1e-8, 0).is_err());
    }

    #[test]
    fn psd_examples() {
        let p = project_psd(&m2(3.0, 0.0, 0.0, -2.0)).unwrap();
        assert_eq!(p, m2(3.0, 0.0, 0.0, 0.0));
        let id = DMatrix::<f64>::identity(4, 4);
        assert_eq!(project_psd(&id).unwrap(), id);
        let p = project_psd(&m2(0.0, 1.0, 1.0, 0.0)).unwrap();
        assert!((p - m2(0.5, 0.5, 0.5, 0.5)).abs().max() < 1e-15);
        assert!(matches!(project_psd(&m2(0.0, 1.0, 0.0, 0.0)), Err(ProjectionError::Spectral(_))));
    }

    #[test]
    fn embedding_examples() {
        let one = EmbeddingSpace::new(2, 1.0).unwrap();
        assert_eq!(project_embedding(&m2(2.0, 0.0, 0.0, -1.0), &one).unwrap(), m2(1.0, 0.0, 0.0, 0.0));
        let p = project_embedding(&m2(1.0, -1.0, -1.0, 1.0), &one).unwrap();
        assert!((p - m2(0.5, -0.5, -0.5, 0.5)).abs().max() < 1e-15);
        let inside = m2(0.6, 0.2, 0.2, 0.3);
        let p = project_embedding(&inside, &one).unwrap();
        assert!((p - &inside).abs().max() < 1e-14);
        assert!(EmbeddingSpace::new(2, -1.0).is_err());
    }

    #[test]
    fn fused_embedding_power_matches_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let a = DMatrix::from_fn(5, 5, |_, _| rng.random_range(-1.0..1.0));
            let b = (&a + a.transpose()) * 0.5;
            let space = EmbeddingSpace::new(5, 0.8).unwrap();
            let fused = project_embedding_then_power(&b, &space, 2.0).unwrap();
            let composed = spectral::matrix_power(&project_embedding(&b, &space).unwrap(), 2.0).unwrap();
            assert!((fused - composed).abs().max() < 1e-12);
        }
    }

    #[test]
    fn default_cap_uses_gershgorin_bound() {
        let s = EmbeddingSpace::for_laplacians(10, 1.0, 0.5).unwrap();
        assert!((s.cap - 18f64.sqrt()).abs() < 1e-15);
        // the complete graph with maximal weights attains λ = mW, below 2(m-1)W
        let full = vech_inv(&HalfVector::new(vec![-1.0; 45]).unwrap(), 1.0).unwrap();
        let top = spectral::sym_eigen(full.matrix()).unwrap().largest();
        assert!(top <= default_eigen_bound(10, 1.0));
    }
}
