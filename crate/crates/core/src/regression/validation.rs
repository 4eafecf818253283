use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{embedding_for, finish_pipeline, fit, response_images, weighted_sum, FittedModel, Mode};
use super::weights::{normalized_local_weights, KernelFamily, KernelSpec};
use super::{Dataset, RegressionError};
use crate::graph::{vech, HalfVector};
use crate::metric::{frobenius_distance_sq, MetricSpec};
use crate::projection::QpSettings;

const DEFAULT_GRID_POINTS: usize = 20;

/// Outcome of leave-one-out bandwidth selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthSelection {
    pub bandwidth: f64,
    pub grid: Vec<f64>,
    /// LOOCV criterion per grid point; `None` where some held-out point had
    /// no effective neighbours.
    pub criteria: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BandwidthRule {
    Fixed(f64),
    /// Leave-one-out cross-validation over a grid (default grid if `None`).
    Loocv(Option<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub mode: Mode,
    pub metric: MetricSpec,
    pub family: KernelFamily,
    pub bandwidth: BandwidthRule,
}

impl FitConfig {
    pub fn global(metric: MetricSpec) -> Self {
        Self { mode: Mode::Global, metric, family: KernelFamily::Gaussian, bandwidth: BandwidthRule::Loocv(None) }
    }

    pub fn local(metric: MetricSpec, bandwidth: BandwidthRule) -> Self {
        Self { mode: Mode::Local, metric, family: KernelFamily::Gaussian, bandwidth }
    }
}

/// Log-spaced bandwidths from half the median gap of the sorted predictors
/// to half their range. Ties among predictors are ignored when taking gaps.
pub fn default_bandwidth_grid(xs: &[f64]) -> Result<Vec<f64>, RegressionError> {
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut gaps: Vec<f64> = sorted.windows(2).map(|w| w[1] - w[0]).filter(|&g| g > 0.0).collect();
    if gaps.is_empty() {
        return Err(RegressionError::EmptyGrid);
    }
    gaps.sort_by(f64::total_cmp);
    let mid = gaps.len() / 2;
    let median = if gaps.len() % 2 == 1 { gaps[mid] } else { 0.5 * (gaps[mid - 1] + gaps[mid]) };
    let lo = 0.5 * median;
    let hi = 0.5 * (sorted[sorted.len() - 1] - sorted[0]);
    if !(hi > lo) {
        return Ok(vec![hi.max(lo)]);
    }
    let (a, b) = (lo.ln(), hi.ln());
    let k = DEFAULT_GRID_POINTS - 1;
    Ok((0..=k).map(|i| (a + (b - a) * i as f64 / k as f64).exp()).collect())
}

/// `Σ_k d_F²(R_k, m̂^{(-k)}(X_k))`, or `None` if some held-out fit has too
/// small a bandwidth. Held-out points are visited in increasing `X` order so
/// each projection starts from its neighbour's solution.
fn loocv_criterion(
    data: &Dataset,
    xs: &[f64],
    order: &[usize],
    images: &[nalgebra::DMatrix<f64>],
    metric: &MetricSpec,
    embedding: Option<&crate::projection::EmbeddingSpace>,
    kernel: &KernelSpec,
) -> Result<Option<f64>, RegressionError> {
    let settings = QpSettings::default();
    let mut warm: Option<HalfVector> = None;
    let mut total = 0.0;
    for &k in order {
        let w = match normalized_local_weights(xs, xs[k], kernel, Some(k)) {
            Ok(w) => w,
            Err(RegressionError::BandwidthTooSmall { .. }) => return Ok(None),
            Err(e) => return Err(e),
        };
        let target = weighted_sum(images, &w);
        let pred = finish_pipeline(&target, metric, embedding, data.bound(), &settings, warm.as_ref())?.laplacian;
        total += frobenius_distance_sq(data.response(k), pred.matrix());
        warm = Some(vech(&pred));
    }
    Ok(Some(total))
}

/// Leave-one-out bandwidth choice for local regression. The criterion uses
/// the Frobenius distance whatever the fitting metric, so criteria are
/// comparable across metrics. Ties go to the smallest bandwidth.
pub fn select_bandwidth_loocv(
    data: &Dataset,
    metric: &MetricSpec,
    family: KernelFamily,
    grid: &[f64],
) -> Result<BandwidthSelection, RegressionError> {
    if grid.is_empty() {
        return Err(RegressionError::EmptyGrid);
    }
    if data.dim() != 1 {
        return Err(RegressionError::LocalNeedsScalarPredictor(data.dim()));
    }
    if data.len() < 3 {
        return Err(RegressionError::TooFewObservations(data.len()));
    }
    let kernels = grid.iter().map(|&h| KernelSpec::new(family, h)).collect::<Result<Vec<_>, _>>()?;
    let xs = data.scalar_predictors();
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let images = response_images(data, metric)?;
    let images = images.as_deref().unwrap_or(data.responses());
    let embedding = embedding_for(data, metric)?;

    let criteria = kernels
        .par_iter()
        .map(|k| loocv_criterion(data, &xs, &order, images, metric, embedding.as_ref(), k))
        .collect::<Result<Vec<_>, _>>()?;

    let bandwidth = pick_bandwidth(grid, &criteria).ok_or(RegressionError::AllBandwidthsFailed)?;
    Ok(BandwidthSelection { bandwidth, grid: grid.to_vec(), criteria })
}

/// Smallest `h` among those attaining the minimal criterion.
fn pick_bandwidth(grid: &[f64], criteria: &[Option<f64>]) -> Option<f64> {
    let mut best: Option<(f64, f64)> = None;
    for (&h, c) in grid.iter().zip(criteria) {
        if let Some(c) = *c {
            best = match best {
                Some((bh, bc)) if bc < c || (bc == c && bh <= h) => Some((bh, bc)),
                _ => Some((h, c)),
            };
        }
    }
    best.map(|(h, _)| h)
}

/// Fits according to `config`, selecting the bandwidth first when asked.
pub fn fit_with_config(
    data: Dataset,
    config: &FitConfig,
) -> Result<(FittedModel, Option<BandwidthSelection>), RegressionError> {
    match config.mode {
        Mode::Global => Ok((fit(data, Mode::Global, config.metric, None)?, None)),
        Mode::Local => {
            if data.dim() != 1 {
                return Err(RegressionError::LocalNeedsScalarPredictor(data.dim()));
            }
            let (h, selection) = match &config.bandwidth {
                BandwidthRule::Fixed(h) => (*h, None),
                BandwidthRule::Loocv(grid) => {
                    let grid = match grid {
                        Some(g) => g.clone(),
                        None => default_bandwidth_grid(&data.scalar_predictors())?,
                    };
                    let sel = select_bandwidth_loocv(&data, &config.metric, config.family, &grid)?;
                    (sel.bandwidth, Some(sel))
                }
            };
            let kernel = KernelSpec::new(config.family, h)?;
            Ok((fit(data, Mode::Local, config.metric, Some(kernel))?, selection))
        }
    }
}

/// Random partition of `0..n` into `folds` groups of near-equal size, each
/// sorted.
pub fn cv_folds(n: usize, folds: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<usize>>, RegressionError> {
    if folds < 2 {
        return Err(RegressionError::InvalidFolds(format!("need at least 2 folds, got {folds}")));
    }
    if folds > n {
        return Err(RegressionError::InvalidFolds(format!("{folds} folds for {n} observations")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let mut out = vec![Vec::new(); folds];
    for (i, k) in perm.into_iter().enumerate() {
        out[i % folds].push(k);
    }
    for f in &mut out {
        f.sort_unstable();
    }
    Ok(out)
}

fn fold_error(data: &Dataset, config: &FitConfig, held: &[usize]) -> Result<f64, RegressionError> {
    let train: Vec<usize> = (0..data.len()).filter(|k| held.binary_search(k).is_err()).collect();
    let (model, _) = fit_with_config(data.subset(&train)?, config)?;
    let mut order = held.to_vec();
    order.sort_by(|&a, &b| data.predictor(a).partial_cmp(data.predictor(b)).unwrap_or(std::cmp::Ordering::Equal));
    let xs: Vec<Vec<f64>> = order.iter().map(|&k| data.predictor(k).to_vec()).collect();
    let preds = model.predict_many(&xs)?;
    let total: f64 = order.iter().zip(&preds).map(|(&k, p)| frobenius_distance_sq(data.response(k), p.matrix())).sum();
    Ok(total / held.len() as f64)
}

/// Cross-validated mean squared prediction error in the Frobenius distance:
/// the mean over folds of the held-out mean `d_F²`, averaged over repeats.
/// Repeat `r` draws its partition from stream `r` of a generator seeded
/// with `seed`.
pub fn mspe_cv(
    data: &Dataset,
    config: &FitConfig,
    folds: usize,
    repeats: usize,
    seed: u64,
) -> Result<f64, RegressionError> {
    if repeats == 0 {
        return Err(RegressionError::InvalidFolds("need at least one repeat".into()));
    }
    if data.len() - data.len().div_ceil(folds.max(1)) < 2 {
        return Err(RegressionError::InvalidFolds(format!("{folds} folds leave too few training points")));
    }
    let partitions = (0..repeats)
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            cv_folds(data.len(), folds, &mut rng)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let jobs: Vec<&[usize]> = partitions.iter().flat_map(|p| p.iter().map(Vec::as_slice)).collect();
    let errors = jobs.par_iter().map(|held| fold_error(data, config, held)).collect::<Result<Vec<_>, _>>()?;
    let per_repeat: Vec<f64> = errors.chunks(folds).map(|c| c.iter().sum::<f64>() / folds as f64).collect();
    Ok(per_repeat.iter().sum::<f64>() / repeats as f64)
}
