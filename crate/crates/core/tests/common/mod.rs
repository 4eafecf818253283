//! Shared generators and oracle checks for the integration tests and the
//! acceptance harness. Each check returns its worst-case statistic so that
//! callers can compare it against their own tolerance.
#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use netreg::graph::{validate_laplacian, vech, vech_inv, GraphLaplacian, HalfVector};
use netreg::metric::MetricSpec;
use netreg::projection::{project_embedding, project_laplacian, EmbeddingSpace, QpSettings};
use netreg::regression::{fit, global_weights, local_weights, Dataset, KernelSpec, Mode, RegressionError};
use netreg::spectral::{matrix_power, sym_eigen};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_matrix(rng: &mut impl Rng, m: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(m, m, |_, _| rng.random_range(-scale..scale))
}

pub fn symmetric_matrix(rng: &mut impl Rng, m: usize, scale: f64) -> DMatrix<f64> {
    let a = uniform_matrix(rng, m, scale);
    (&a + a.transpose()) * 0.5
}

pub fn random_laplacian(rng: &mut impl Rng, m: usize, bound: f64) -> GraphLaplacian {
    let values = (0..m * (m - 1) / 2).map(|_| -rng.random_range(0.0..=bound)).collect();
    vech_inv(&HalfVector::new(values).unwrap(), bound).unwrap()
}

/// Random PSD matrix with eigenvalues uniform in `[0, top]`, each set to
/// exactly zero with probability `zero_prob`.
pub fn random_psd(rng: &mut impl Rng, m: usize, top: f64, zero_prob: f64) -> DMatrix<f64> {
    let q = nalgebra::linalg::QR::new(uniform_matrix(rng, m, 1.0)).q();
    let lambdas: Vec<f64> =
        (0..m).map(|_| if rng.random_bool(zero_prob) { 0.0 } else { rng.random_range(0.0..=top) }).collect();
    let s = &q * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(lambdas)) * q.transpose();
    (&s + s.transpose()) * 0.5
}

fn settings() -> QpSettings {
    QpSettings::default()
}

// ---------------------------------------------------------------- projections

/// Worst `|P(B) - closed form|` entry over `trials` random 2 x 2 inputs.
pub fn projection_m2_closed_form(trials: usize, seed: u64) -> f64 {
    let mut rng = rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let b = uniform_matrix(&mut rng, 2, 3.0);
        let w = rng.random_range(0.05..3.0);
        let a = ((b[(0, 0)] + b[(1, 1)] - b[(0, 1)] - b[(1, 0)]) / 4.0).clamp(0.0, w);
        let expected = DMatrix::from_row_slice(2, 2, &[a, -a, -a, a]);
        let got = project_laplacian(&b, w, &settings()).unwrap();
        worst = worst.max((got.matrix() - expected).amax());
    }
    worst
}

/// `‖B - L(v)‖_F²` for the Laplacian with off-diagonal half-vector `v`.
fn qp_objective(b: &DMatrix<f64>, v: &[f64]) -> f64 {
    let l = laplacian_of(v, b.nrows());
    (b - l).norm_squared()
}

fn laplacian_of(v: &[f64], m: usize) -> DMatrix<f64> {
    let mut l = DMatrix::zeros(m, m);
    let mut k = 0;
    for i in 0..m {
        for j in (i + 1)..m {
            l[(i, j)] = v[k];
            l[(j, i)] = v[k];
            l[(i, i)] -= v[k];
            l[(j, j)] -= v[k];
            k += 1;
        }
    }
    l
}

fn qp_gradient(b: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    let m = b.nrows();
    let l = laplacian_of(v, m);
    let r = b - &l;
    let mut g = Vec::with_capacity(v.len());
    for i in 0..m {
        for j in (i + 1)..m {
            g.push(-2.0 * (r[(i, j)] + r[(j, i)]) + 2.0 * (r[(i, i)] + r[(j, j)]));
        }
    }
    g
}

/// Plain projected gradient with step `1/L`, `L` the largest Hessian
/// eigenvalue found by differencing the (affine) gradient.
pub fn slow_projection(b: &DMatrix<f64>, bound: f64, iterations: usize) -> DMatrix<f64> {
    let m = b.nrows();
    let d = m * (m - 1) / 2;
    let g0 = qp_gradient(b, &vec![0.0; d]);
    let hess = DMatrix::from_fn(d, d, |i, j| {
        let mut e = vec![0.0; d];
        e[j] = 1.0;
        qp_gradient(b, &e)[i] - g0[i]
    });
    let lmax = hess.symmetric_eigen().eigenvalues.max();
    let mut v = vec![-bound / 2.0; d];
    for _ in 0..iterations {
        let g = qp_gradient(b, &v);
        for (x, gk) in v.iter_mut().zip(&g) {
            *x = (*x - gk / lmax).clamp(-bound, 0.0);
        }
    }
    laplacian_of(&v, m)
}

/// Exhaustive search over the `[-W, 0]^3` box on a grid of `steps + 1`
/// points per axis, then coordinate-pattern refinement down to `1e-9`.
pub fn grid_projection_m3(b: &DMatrix<f64>, bound: f64, steps: usize) -> DMatrix<f64> {
    let h = bound / steps as f64;
    let mut best = (f64::INFINITY, [0.0; 3]);
    for i in 0..=steps {
        for j in 0..=steps {
            for k in 0..=steps {
                let v = [-(i as f64) * h, -(j as f64) * h, -(k as f64) * h];
                let f = qp_objective(b, &v);
                if f < best.0 {
                    best = (f, v);
                }
            }
        }
    }
    let (mut fbest, mut v) = best;
    let mut step = h;
    while step > 1e-9 {
        let mut improved = false;
        for axis in 0..3 {
            for dir in [-1.0, 1.0] {
                let mut c = v;
                c[axis] = (c[axis] + dir * step).clamp(-bound, 0.0);
                let f = qp_objective(b, &c);
                if f < fbest {
                    fbest = f;
                    v = c;
                    improved = true;
                }
            }
        }
        if !improved {
            step /= 2.0;
        }
    }
    laplacian_of(&v, 3)
}

/// Worst `d_F` between `project_laplacian` and the slow gradient oracle,
/// and between it and the grid oracle, over `trials` random 3 x 3 inputs.
pub fn projection_m3_oracles(trials: usize, seed: u64, pg_iterations: usize, grid_steps: usize) -> (f64, f64) {
    let mut rng = rng(seed);
    let (mut worst_pg, mut worst_grid) = (0.0f64, 0.0f64);
    for _ in 0..trials {
        let b = uniform_matrix(&mut rng, 3, 2.0);
        let got = project_laplacian(&b, 1.0, &settings()).unwrap();
        worst_pg = worst_pg.max((got.matrix() - slow_projection(&b, 1.0, pg_iterations)).norm());
        worst_grid = worst_grid.max((got.matrix() - grid_projection_m3(&b, 1.0, grid_steps)).norm());
    }
    (worst_pg, worst_grid)
}

/// Worst expansion `‖P(B₁) - P(B₂)‖ - ‖B₁ - B₂‖` for the Laplacian and the
/// embedding projections over `pairs` random symmetric pairs.
pub fn nonexpansive_violation(pairs: usize, seed: u64) -> f64 {
    let mut rng = rng(seed);
    let mut worst = f64::NEG_INFINITY;
    for t in 0..pairs {
        let m = 2 + t % 7;
        let b1 = symmetric_matrix(&mut rng, m, 2.0);
        let b2 = if t % 2 == 0 { &b1 + symmetric_matrix(&mut rng, m, 0.1) } else { symmetric_matrix(&mut rng, m, 2.0) };
        let gap = (&b1 - &b2).norm();
        let l1 = project_laplacian(&b1, 1.0, &settings()).unwrap();
        let l2 = project_laplacian(&b2, 1.0, &settings()).unwrap();
        worst = worst.max((l1.matrix() - l2.matrix()).norm() - gap);
        let space = EmbeddingSpace::new(m, 1.5).unwrap();
        let e1 = project_embedding(&b1, &space).unwrap();
        let e2 = project_embedding(&b2, &space).unwrap();
        worst = worst.max((e1 - e2).norm() - gap);
    }
    worst
}

/// Worst `‖P(P(B)) - P(B)‖` over random inputs, both projections.
pub fn idempotence_error(trials: usize, seed: u64) -> f64 {
    let mut rng = rng(seed);
    let mut worst = 0.0f64;
    for t in 0..trials {
        let m = 2 + t % 7;
        let b = symmetric_matrix(&mut rng, m, 2.0);
        let p = project_laplacian(&b, 1.0, &settings()).unwrap();
        let pp = project_laplacian(p.matrix(), 1.0, &settings()).unwrap();
        worst = worst.max((pp.matrix() - p.matrix()).norm());
        let space = EmbeddingSpace::new(m, 1.5).unwrap();
        let e = project_embedding(&b, &space).unwrap();
        worst = worst.max((project_embedding(&e, &space).unwrap() - &e).norm());
    }
    worst
}

/// Largest `⟨B - P(B), ω - P(B)⟩_F` over `inputs` random `B` and `omegas`
/// random feasible `ω` each.
pub fn variational_inequality(inputs: usize, omegas: usize, seed: u64) -> f64 {
    let mut rng = rng(seed);
    let mut worst = f64::NEG_INFINITY;
    for t in 0..inputs {
        let m = 3 + t % 6;
        let b = uniform_matrix(&mut rng, m, 2.0);
        let p = project_laplacian(&b, 1.0, &settings()).unwrap();
        let r = &b - p.matrix();
        for _ in 0..omegas {
            let w = random_laplacian(&mut rng, m, 1.0);
            worst = worst.max(r.dot(&(w.matrix() - p.matrix())));
        }
    }
    worst
}

// ------------------------------------------------------------------- spectral

/// Largest ratio of `‖F_α(S₁) - F_α(S₂)‖_F` to its continuity bound over
/// `pairs` random PSD pairs: `m^{(1-α)/2} ‖S₁ - S₂‖^α` for `α < 1`,
/// `α C^{α-1} ‖S₁ - S₂‖` with `C` the eigenvalue cap for `α ≥ 1`.
pub fn continuity_ratio(alpha: f64, pairs: usize, seed: u64) -> f64 {
    let mut rng = rng(seed);
    let cap = 5.0;
    let mut worst = 0.0f64;
    for t in 0..pairs {
        let m = 2 + t % 9;
        let s1 = random_psd(&mut rng, m, cap, 0.2);
        let s2 = if t % 3 == 0 {
            // nearby pair: same eigenvectors, eigenvalues perturbed inside [0, C]
            let e = sym_eigen(&s1).unwrap();
            let lambdas = e.eigenvalues.map(|l| (l + rng.random_range(-0.01..0.01)).clamp(0.0, cap));
            let u = &e.eigenvectors;
            let s = u * DMatrix::from_diagonal(&lambdas) * u.transpose();
            (&s + s.transpose()) * 0.5
        } else {
            random_psd(&mut rng, m, cap, 0.2)
        };
        let gap = (&s1 - &s2).norm();
        if gap == 0.0 {
            continue;
        }
        let lhs = (matrix_power(&s1, alpha).unwrap() - matrix_power(&s2, alpha).unwrap()).norm();
        let rhs = if alpha < 1.0 {
            (m as f64).powf((1.0 - alpha) / 2.0) * gap.powf(alpha)
        } else {
            alpha * cap.powf(alpha - 1.0) * gap
        };
        worst = worst.max(lhs / rhs);
    }
    worst
}

/// Worst `‖F_{1/α}(F_α(S)) - S‖_F` over random PSD `S` with `λ₁ ≤ 10`.
pub fn power_round_trip(alphas: &[f64], trials: usize, seed: u64, zero_prob: f64) -> f64 {
    let mut rng = rng(seed);
    let mut worst = 0.0f64;
    for t in 0..trials {
        let s = random_psd(&mut rng, 2 + t % 9, 10.0, zero_prob);
        for &a in alphas {
            let back = matrix_power(&matrix_power(&s, a).unwrap(), 1.0 / a).unwrap();
            worst = worst.max((back - &s).norm());
        }
    }
    worst
}

/// Worst `‖UΛUᵀ - S‖_F / (1 + ‖S‖_F)` and `‖UᵀU - I‖_F`.
pub fn eigen_reconstruction(trials: usize, seed: u64) -> (f64, f64) {
    let mut rng = rng(seed);
    let (mut rec, mut orth) = (0.0f64, 0.0f64);
    for t in 0..trials {
        let m = 1 + t % 20;
        let scale = 10f64.powi((t % 7) as i32 - 3);
        let s = symmetric_matrix(&mut rng, m, scale);
        let e = sym_eigen(&s).unwrap();
        rec = rec.max((e.reconstruct() - &s).norm() / (1.0 + s.norm()));
        let u = &e.eigenvectors;
        orth = orth.max((u.transpose() * u - DMatrix::identity(m, m)).norm());
    }
    (rec, orth)
}

// ------------------------------------------------------------------ estimator

pub fn random_dataset(rng: &mut impl Rng, n: usize, p: usize, m: usize) -> Dataset {
    let xs = (0..n).map(|_| (0..p).map(|_| rng.random_range(-1.0..2.0)).collect()).collect();
    let ls = (0..n).map(|_| random_laplacian(rng, m, 1.0)).collect();
    Dataset::new(xs, ls).unwrap()
}

/// Worst `|mean(s) - 1|` for global weights (p from 1 to 3) and for local
/// weights over `designs` random designs and 10 query points each.
pub fn weight_mean_errors(designs: usize, seed: u64) -> (f64, f64) {
    let mut rng = rng(seed);
    let (mut global, mut local) = (0.0f64, 0.0f64);
    for t in 0..designs {
        let n = rng.random_range(5..60);
        let p = 1 + t % 3;
        let data = random_dataset(&mut rng, n, p, 3);
        let kernel = KernelSpec::gaussian(rng.random_range(0.05..1.0)).unwrap();
        for _ in 0..10 {
            let x: Vec<f64> = (0..p).map(|_| rng.random_range(-1.5..2.5)).collect();
            let g = global_weights(&data, &x).unwrap();
            global = global.max((g.iter().sum::<f64>() / n as f64 - 1.0).abs());
            if p == 1 {
                let x0 = rng.random_range(-1.0..2.0);
                match local_weights(&data, x0, &kernel) {
                    Ok(s) => local = local.max((s.iter().sum::<f64>() / n as f64 - 1.0).abs()),
                    Err(RegressionError::BandwidthTooSmall { .. }) => {}
                    Err(e) => panic!("{e}"),
                }
            }
        }
    }
    (global, local)
}

/// Worst `d_F` between Power(α = 1) and Frobenius predictions.
pub fn alpha_one_gap(trials: usize, seed: u64) -> f64 {
    let mut rng = rng(seed);
    let mut worst = 0.0f64;
    for t in 0..trials {
        let data = random_dataset(&mut rng, 30, 1, 2 + t % 6);
        let (mode, kernel) =
            if t % 2 == 0 { (Mode::Global, None) } else { (Mode::Local, Some(KernelSpec::gaussian(0.4).unwrap())) };
        let power = fit(data.clone(), mode, MetricSpec::Power { alpha: 1.0 }, kernel).unwrap();
        let frob = fit(data, mode, MetricSpec::Frobenius, kernel).unwrap();
        for _ in 0..5 {
            let x = [rng.random_range(-1.0..2.0)];
            let a = power.predict(&x).unwrap().0;
            let b = frob.predict(&x).unwrap().0;
            worst = worst.max((a.matrix() - b.matrix()).norm());
        }
    }
    worst
}

/// Worst `d_F` between predictions and the common response of a constant
/// dataset at 20 random points, over global/local and both metrics.
pub fn constant_response_error(seed: u64) -> f64 {
    let mut rng = rng(seed);
    let mut worst = 0.0f64;
    for m in [2, 5, 10] {
        let l0 = random_laplacian(&mut rng, m, 1.0);
        let xs: Vec<Vec<f64>> = (0..25).map(|_| vec![rng.random_range(0.0..1.0)]).collect();
        let data = Dataset::new(xs, vec![l0.clone(); 25]).unwrap();
        let kernel = KernelSpec::gaussian(0.3).unwrap();
        for metric in [MetricSpec::Frobenius, MetricSpec::square_root(), MetricSpec::Power { alpha: 2.0 }] {
            for (mode, k) in [(Mode::Global, None), (Mode::Local, Some(kernel))] {
                let model = fit(data.clone(), mode, metric, k).unwrap();
                for _ in 0..20 {
                    let x = [rng.random_range(0.0..1.0)];
                    let pred = model.predict(&x).unwrap().0;
                    worst = worst.max((pred.matrix() - l0.matrix()).norm());
                }
            }
        }
    }
    worst
}

/// Largest `J(m̂) - J(ω)` over `trials` Frobenius fits and `perturbations`
/// random feasible `ω` each, where `J(ω) = (1/n) Σ s_k ‖L_k - ω‖²` with the
/// prediction's weights. Positive values would contradict optimality.
pub fn minimizer_violation(trials: usize, perturbations: usize, seed: u64) -> f64 {
    let mut rng = rng(seed);
    let mut worst = f64::NEG_INFINITY;
    for t in 0..trials {
        let m = 3 + t % 6;
        let n = rng.random_range(10..50);
        let local = t % 2 == 1;
        let data = random_dataset(&mut rng, n, 1, m);
        let kernel = local.then(|| KernelSpec::gaussian(rng.random_range(0.1..0.8)).unwrap());
        let mode = if local { Mode::Local } else { Mode::Global };
        let model = fit(data.clone(), mode, MetricSpec::Frobenius, kernel).unwrap();
        let x = [rng.random_range(-1.0..2.0)];
        let (pred, diag) = model.predict(&x).unwrap();
        let objective = |w: &DMatrix<f64>| {
            diag.weights.iter().zip(data.responses()).map(|(s, l)| s * (l - w).norm_squared()).sum::<f64>()
                / n as f64
        };
        let base = objective(pred.matrix());
        let v0 = vech(&pred);
        for q in 0..perturbations {
            // move toward a random feasible point, by a random amount
            let target = random_laplacian(&mut rng, m, 1.0);
            let t_step = if q % 2 == 0 { rng.random_range(0.0..1e-3) } else { rng.random_range(0.0..1.0) };
            let tv = vech(&target);
            let vals: Vec<f64> =
                v0.values().iter().zip(tv.values()).map(|(a, b)| a + t_step * (b - a)).collect();
            let omega = vech_inv(&HalfVector::new(vals).unwrap(), 1.0).unwrap();
            assert!(validate_laplacian(omega.matrix(), 1.0).is_ok());
            worst = worst.max((base - objective(omega.matrix())) / (1.0 + base.abs()));
        }
    }
    worst
}
