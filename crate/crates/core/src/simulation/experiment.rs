use nalgebra::DMatrix;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::truth::truth_curve;
use super::{simulate_scenario, ScenarioSpec, SimulationError};
use crate::graph::GraphLaplacian;
use crate::metric::frobenius_distance_sq;
use crate::regression::{fit_with_config, FitConfig, FittedModel, RegressionError};

/// `points` equispaced values from 0.005 to 0.995.
pub fn ise_grid(points: usize) -> Vec<f64> {
    let (lo, hi) = (0.005, 0.995);
    if points == 1 {
        return vec![0.5];
    }
    (0..points).map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64).collect()
}

/// Trapezoid rule for samples `ys` at increasing abscissae `xs`.
pub fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2).zip(ys.windows(2)).map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1])).sum()
}

/// `∫ d_F²(m(x), m̂(x)) dx` by the trapezoid rule on `grid` (sorted),
/// given the true values on the grid.
pub fn integrated_squared_error(
    model: &FittedModel,
    truth: &[GraphLaplacian],
    grid: &[f64],
) -> Result<f64, RegressionError> {
    let xs: Vec<Vec<f64>> = grid.iter().map(|&x| vec![x]).collect();
    let preds = model.predict_many(&xs)?;
    Ok(ise_of(preds.iter().map(GraphLaplacian::matrix), truth, grid))
}

pub(crate) fn ise_of<'a>(
    preds: impl Iterator<Item = &'a DMatrix<f64>>,
    truth: &[GraphLaplacian],
    grid: &[f64],
) -> f64 {
    let ys: Vec<f64> = preds.zip(truth).map(|(p, t)| frobenius_distance_sq(p, t.matrix())).collect();
    trapezoid(grid, &ys)
}

/// Results for one sample size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeSummary {
    pub n: usize,
    /// ISE of each replicate, in replicate order.
    pub ise: Vec<f64>,
    pub mise: f64,
    /// Standard deviation of the ISE values divided by `√Q`.
    pub se: f64,
    /// Replicate seeds, in replicate order.
    pub seeds: Vec<u64>,
}

/// Output of [`mise_experiment`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub spec: ScenarioSpec,
    pub config: FitConfig,
    pub runs: usize,
    pub seed: u64,
    pub grid_points: usize,
    pub sizes: Vec<SizeSummary>,
    /// Least-squares slope of log MISE on log n, when there are at least
    /// three sample sizes.
    pub slope: Option<f64>,
}

/// Seeds of the `runs` replicates at sample size `n`: consecutive outputs of
/// stream `n` of a generator seeded with `master`.
pub fn replicate_seeds(master: u64, n: usize, runs: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(n as u64);
    (0..runs).map(|_| rng.next_u64()).collect()
}

fn summarize(n: usize, ise: Vec<f64>, seeds: Vec<u64>) -> SizeSummary {
    let q = ise.len() as f64;
    let mise = ise.iter().sum::<f64>() / q;
    let var = ise.iter().map(|v| (v - mise).powi(2)).sum::<f64>() / (q - 1.0);
    SizeSummary { n, se: (var / q).sqrt(), mise, ise, seeds }
}

/// Mean integrated squared error over `runs` replicates for each sample
/// size. Each replicate simulates from `spec` with its own seed, fits with
/// `config` and integrates over `grid_points` points. Replicates run in
/// parallel; results do not depend on the number of threads.
pub fn mise_experiment(
    spec: &ScenarioSpec,
    sizes: &[usize],
    runs: usize,
    config: &FitConfig,
    seed: u64,
    grid_points: usize,
) -> Result<MonteCarloReport, SimulationError> {
    if runs < 2 {
        return Err(SimulationError::TooFew { what: "runs", needed: 2, got: runs });
    }
    if sizes.is_empty() {
        return Err(SimulationError::TooFew { what: "sample sizes", needed: 1, got: 0 });
    }
    if grid_points < 2 {
        return Err(SimulationError::TooFew { what: "grid points", needed: 2, got: grid_points });
    }
    for &n in sizes {
        ScenarioSpec { n, ..*spec }.validate()?;
    }
    let grid = ise_grid(grid_points);
    let truth = truth_curve(spec, &grid)?;
    let seeds: Vec<Vec<u64>> = sizes.iter().map(|&n| replicate_seeds(seed, n, runs)).collect();
    let jobs: Vec<(usize, u64)> =
        sizes.iter().zip(&seeds).flat_map(|(&n, s)| s.iter().map(move |&q| (n, q))).collect();
    let ise = jobs
        .par_iter()
        .map(|&(n, q)| {
            let replicate = ScenarioSpec { n, seed: q, ..*spec };
            let fail = |source: RegressionError| SimulationError::Replicate { seed: q, n, source };
            let data = simulate_scenario(&replicate)?;
            let (model, _) = fit_with_config(data, config).map_err(fail)?;
            integrated_squared_error(&model, &truth, &grid).map_err(fail)
        })
        .collect::<Result<Vec<f64>, SimulationError>>()?;
    let summaries: Vec<SizeSummary> = sizes
        .iter()
        .zip(seeds)
        .zip(ise.chunks(runs))
        .map(|((&n, s), values)| summarize(n, values.to_vec(), s))
        .collect();
    let mut report = MonteCarloReport {
        spec: *spec,
        config: config.clone(),
        runs,
        seed,
        grid_points,
        sizes: summaries,
        slope: None,
    };
    report.slope = convergence_slope(&report).ok();
    Ok(report)
}

/// Ordinary least-squares slope of `log MISE` on `log n`.
pub fn convergence_slope(report: &MonteCarloReport) -> Result<f64, SimulationError> {
    let k = report.sizes.len();
    if k < 3 {
        return Err(SimulationError::TooFew { what: "sample sizes", needed: 3, got: k });
    }
    let mut pts = Vec::with_capacity(k);
    for s in &report.sizes {
        if !(s.mise > 0.0) {
            return Err(SimulationError::NonPositiveMise(s.mise));
        }
        pts.push(((s.n as f64).ln(), s.mise.ln()));
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k as f64;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k as f64;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(SimulationError::DegenerateFit);
    }
    Ok(sxy / sxx)
}
