//! Symmetric eigendecomposition by cyclic Jacobi rotations, and spectral
//! matrix powers `S -> U diag(λ^α) U^T`.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Relative asymmetry accepted by [`sym_eigen`]: `‖S - Sᵀ‖_F <= 1e-10 ‖S‖_F`.
pub const SYMMETRY_REL_TOL: f64 = 1e-10;
/// Sweeps stop once the off-diagonal Frobenius norm drops below this
/// fraction of `‖S‖_F`.
pub const OFF_DIAGONAL_REL_TOL: f64 = 1e-12;
pub const MAX_SWEEPS: usize = 100;
/// Eigenvalues in `[-NEGATIVE_EIGEN_TOL, 0)` are clamped to zero before powering.
pub const NEGATIVE_EIGEN_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectralError {
    #[error("matrix is not square ({0}x{1})")]
    NotSquare(usize, usize),
    #[error("matrix is not symmetric (asymmetry {asymmetry:e}, norm {norm:e})")]
    NotSymmetric { asymmetry: f64, norm: f64 },
    #[error("Jacobi iteration did not converge in {sweeps} sweeps (off-diagonal norm {off_norm:e})")]
    NoConvergence { sweeps: usize, off_norm: f64 },
    #[error("matrix has eigenvalue {0:e} below the PSD tolerance")]
    NegativeEigenvalue(f64),
    #[error("exponent must be positive and finite, got {0}")]
    InvalidExponent(f64),
    #[error("matrix contains non-finite entries")]
    NonFinite,
}

/// `S = U diag(λ) Uᵀ` with eigenvalues in descending order.
///
/// Each eigenvector column is oriented so that its largest-magnitude
/// component is nonnegative. Components within a relative `1e-12` of the
/// largest magnitude count as ties, and the first of them decides.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl SpectralDecomposition {
    pub fn size(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn largest(&self) -> f64 {
        self.eigenvalues.iter().copied().next().unwrap_or(0.0)
    }

    pub fn smallest(&self) -> f64 {
        self.eigenvalues.iter().copied().last().unwrap_or(0.0)
    }

    /// `U diag(f(λ)) Uᵀ`.
    pub fn map_eigenvalues(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let m = self.size();
        let u = &self.eigenvectors;
        let mapped: Vec<f64> = self.eigenvalues.iter().map(|&l| f(l)).collect();
        let mut out = DMatrix::zeros(m, m);
        for k in 0..m {
            let lam = mapped[k];
            if lam == 0.0 {
                continue;
            }
            for j in 0..m {
                let ujk = u[(j, k)] * lam;
                if ujk == 0.0 {
                    continue;
                }
                for i in j..m {
                    out[(i, j)] += u[(i, k)] * ujk;
                }
            }
        }
        for j in 0..m {
            for i in (j + 1)..m {
                out[(j, i)] = out[(i, j)];
            }
        }
        out
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.map_eigenvalues(|l| l)
    }
}

fn frobenius(a: &DMatrix<f64>) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Checks the symmetry precondition and returns `(S + Sᵀ)/2`.
pub(crate) fn symmetrized(s: &DMatrix<f64>) -> Result<DMatrix<f64>, SpectralError> {
    let (r, c) = s.shape();
    if r != c {
        return Err(SpectralError::NotSquare(r, c));
    }
    if s.iter().any(|x| !x.is_finite()) {
        return Err(SpectralError::NonFinite);
    }
    let norm = frobenius(s);
    let mut asym2 = 0.0;
    for i in 0..r {
        for j in 0..r {
            let d = s[(i, j)] - s[(j, i)];
            asym2 += d * d;
        }
    }
    let asymmetry = asym2.sqrt();
    if asymmetry > SYMMETRY_REL_TOL * norm {
        return Err(SpectralError::NotSymmetric { asymmetry, norm });
    }
    Ok(DMatrix::from_fn(r, r, |i, j| 0.5 * (s[(i, j)] + s[(j, i)])))
}

/// Eigendecomposition of a symmetric matrix.
///
/// Cyclic-by-row Jacobi with the textbook stable rotation
/// (`t = sign(θ) / (|θ| + sqrt(1 + θ²))`). Output is canonical: eigenvalues
/// descending, eigenvector signs fixed as documented on
/// [`SpectralDecomposition`].
pub fn sym_eigen(s: &DMatrix<f64>) -> Result<SpectralDecomposition, SpectralError> {
    let sym = symmetrized(s)?;
    let m = sym.nrows();
    let threshold = OFF_DIAGONAL_REL_TOL * frobenius(&sym);
    // flat column-major copies; `a` stays symmetric throughout
    let mut a: Vec<f64> = sym.as_slice().to_vec();
    let mut v = vec![0.0; m * m];
    for i in 0..m {
        v[i * m + i] = 1.0;
    }

    let off_norm = |a: &[f64]| {
        let mut t = 0.0;
        for j in 0..m {
            for i in (j + 1)..m {
                t += 2.0 * a[j * m + i] * a[j * m + i];
            }
        }
        t.sqrt()
    };

    let mut converged = off_norm(&a) <= threshold;
    let mut sweeps = 0;
    while !converged && sweeps < MAX_SWEEPS {
        sweeps += 1;
        for p in 0..m {
            for q in (p + 1)..m {
                let apq = a[q * m + p];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * m + q] - a[p * m + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let sn = t * c;
                rotate(&mut a, m, p, q, c, sn, t * apq);
                let (vp, vq) = columns_mut(&mut v, m, p, q);
                for (x, y) in vp.iter_mut().zip(vq.iter_mut()) {
                    let (xp, xq) = (*x, *y);
                    *x = c * xp - sn * xq;
                    *y = sn * xp + c * xq;
                }
            }
        }
        converged = off_norm(&a) <= threshold;
    }
    if !converged {
        return Err(SpectralError::NoConvergence { sweeps, off_norm: off_norm(&a) });
    }

    let diag = |k: usize| a[k * m + k];
    let mut order: Vec<usize> = (0..m).collect();
    // stable sort keeps ties in index order, so output stays deterministic
    order.sort_by(|&i, &j| diag(j).total_cmp(&diag(i)));
    let eigenvalues = DVector::from_iterator(m, order.iter().map(|&k| diag(k)));
    let mut eigenvectors = DMatrix::zeros(m, m);
    for (col, &k) in order.iter().enumerate() {
        let vk = &v[k * m..(k + 1) * m];
        // first component within rounding of the largest magnitude
        let biggest = vk.iter().map(|x| x.abs()).fold(0.0, f64::max);
        let pivot = vk.iter().position(|x| x.abs() >= biggest * (1.0 - 1e-12)).unwrap_or(0);
        let sign = if vk[pivot] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..m {
            eigenvectors[(i, col)] = sign * vk[i];
        }
    }
    Ok(SpectralDecomposition { eigenvalues, eigenvectors })
}

/// Disjoint mutable views of columns `p < q` of a column-major `m x m` buffer.
fn columns_mut(buf: &mut [f64], m: usize, p: usize, q: usize) -> (&mut [f64], &mut [f64]) {
    let (left, right) = buf.split_at_mut(q * m);
    (&mut left[p * m..(p + 1) * m], &mut right[..m])
}

/// Applies the Jacobi rotation in the (p, q) plane that zeroes `a[p][q]`.
/// `tapq` is `t * a[p][q]`, the shift applied to the two diagonal entries.
fn rotate(a: &mut [f64], m: usize, p: usize, q: usize, c: f64, s: f64, tapq: f64) {
    a[p * m + p] -= tapq;
    a[q * m + q] += tapq;
    a[q * m + p] = 0.0;
    a[p * m + q] = 0.0;
    for k in 0..m {
        if k == p || k == q {
            continue;
        }
        let akp = a[p * m + k];
        let akq = a[q * m + k];
        let new_p = c * akp - s * akq;
        let new_q = s * akp + c * akq;
        a[p * m + k] = new_p;
        a[k * m + p] = new_p;
        a[q * m + k] = new_q;
        a[k * m + q] = new_q;
    }
}

fn check_exponent(alpha: f64) -> Result<(), SpectralError> {
    if alpha.is_finite() && alpha > 0.0 {
        Ok(())
    } else {
        Err(SpectralError::InvalidExponent(alpha))
    }
}

/// `λ^α` for an eigenvalue that passed the PSD check.
pub(crate) fn power_eigenvalue(lambda: f64, alpha: f64) -> f64 {
    let l = lambda.max(0.0);
    if alpha == 1.0 {
        l
    } else if alpha == 2.0 {
        l * l
    } else if alpha == 0.5 {
        l.sqrt()
    } else {
        l.powf(alpha)
    }
}

/// Spectral power of a positive semi-definite matrix.
pub fn matrix_power(s: &DMatrix<f64>, alpha: f64) -> Result<DMatrix<f64>, SpectralError> {
    check_exponent(alpha)?;
    let eig = sym_eigen(s)?;
    power_of_decomposition(&eig, alpha)
}

pub fn power_of_decomposition(
    eig: &SpectralDecomposition,
    alpha: f64,
) -> Result<DMatrix<f64>, SpectralError> {
    check_exponent(alpha)?;
    let min = eig.smallest();
    if min < -NEGATIVE_EIGEN_TOL {
        return Err(SpectralError::NegativeEigenvalue(min));
    }
    Ok(eig.map_eigenvalues(|l| power_eigenvalue(l, alpha)))
}
