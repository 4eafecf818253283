use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::weights::{normalized_local_weights, GlobalMoments, KernelSpec};
use super::{Dataset, RegressionError};
use crate::graph::{vech, GraphLaplacian, HalfVector};
use crate::metric::{frobenius_distance_sq, MetricSpec};
use crate::projection::{
    project_embedding_then_power, project_laplacian_from, EmbeddingSpace, LaplacianProjection, QpSettings,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Global,
    Local,
}

/// Internals of a single prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionDiagnostics {
    /// `s_k(x)`, with mean 1.
    pub weights: Vec<f64>,
    /// `(1/n) Σ s_k R_k`, or `(1/n) Σ s_k F_α(R_k)` for power metrics.
    pub target: DMatrix<f64>,
    /// Final projected-gradient norm of the Laplacian projection.
    pub residual: f64,
    pub iterations: usize,
}

/// A fitted regression model. Holds its training data, which both
/// estimators need at prediction time.
#[derive(Debug, Clone)]
pub struct FittedModel {
    mode: Mode,
    metric: MetricSpec,
    data: Dataset,
    kernel: Option<KernelSpec>,
    moments: Option<GlobalMoments>,
    embedding: Option<EmbeddingSpace>,
    images: Option<Vec<DMatrix<f64>>>,
    settings: QpSettings,
}

/// Power-map images of the responses, or `None` under the Frobenius metric.
pub(crate) fn response_images(data: &Dataset, metric: &MetricSpec) -> Result<Option<Vec<DMatrix<f64>>>, RegressionError> {
    if metric.is_frobenius() {
        return Ok(None);
    }
    data.responses().iter().map(|r| Ok(metric.transform(r)?)).collect::<Result<Vec<_>, _>>().map(Some)
}

pub(crate) fn embedding_for(data: &Dataset, metric: &MetricSpec) -> Result<Option<EmbeddingSpace>, RegressionError> {
    if metric.is_frobenius() {
        return Ok(None);
    }
    Ok(Some(EmbeddingSpace::for_laplacians(data.size(), data.bound(), metric.alpha())?))
}

/// `Σ w_k A_k`.
pub(crate) fn weighted_sum(mats: &[DMatrix<f64>], weights: &[f64]) -> DMatrix<f64> {
    let m = mats[0].nrows();
    let mut out = DMatrix::zeros(m, m);
    for (a, &w) in mats.iter().zip(weights) {
        if w != 0.0 {
            for (o, v) in out.iter_mut().zip(a.iter()) {
                *o += w * v;
            }
        }
    }
    out
}

/// Maps a weighted mean in the metric's image space to a Laplacian:
/// `P_L(target)` for Frobenius, `P_L(F_{1/α}(P_M(target)))` otherwise.
pub(crate) fn finish_pipeline(
    target: &DMatrix<f64>,
    metric: &MetricSpec,
    embedding: Option<&EmbeddingSpace>,
    bound: f64,
    settings: &QpSettings,
    warm: Option<&HalfVector>,
) -> Result<LaplacianProjection, RegressionError> {
    match embedding {
        Some(space) if !metric.is_frobenius() => {
            let back = project_embedding_then_power(target, space, 1.0 / metric.alpha())?;
            Ok(project_laplacian_from(&back, bound, settings, warm)?)
        }
        _ => Ok(project_laplacian_from(target, bound, settings, warm)?),
    }
}

pub fn fit(
    data: Dataset,
    mode: Mode,
    metric: MetricSpec,
    kernel: Option<KernelSpec>,
) -> Result<FittedModel, RegressionError> {
    if let MetricSpec::Power { alpha } = metric {
        MetricSpec::power(alpha)?;
    }
    let (kernel, moments) = match mode {
        Mode::Global => (None, Some(GlobalMoments::from_predictors(data.predictors())?)),
        Mode::Local => {
            if data.dim() != 1 {
                return Err(RegressionError::LocalNeedsScalarPredictor(data.dim()));
            }
            let k = kernel.ok_or(RegressionError::MissingKernel)?;
            KernelSpec::new(k.family, k.bandwidth)?;
            (Some(k), None)
        }
    };
    let embedding = embedding_for(&data, &metric)?;
    let images = response_images(&data, &metric)?;
    Ok(FittedModel { mode, metric, data, kernel, moments, embedding, images, settings: QpSettings::default() })
}

impl FittedModel {
    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn metric(&self) -> MetricSpec {
        self.metric
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn kernel(&self) -> Option<KernelSpec> {
        self.kernel
    }

    /// `D^α`, present for power metrics.
    pub fn embedding_cap(&self) -> Option<f64> {
        self.embedding.map(|e| e.cap)
    }

    pub fn settings(&self) -> QpSettings {
        self.settings
    }

    pub fn with_settings(mut self, settings: QpSettings) -> Self {
        self.settings = settings;
        self
    }

    fn images(&self) -> &[DMatrix<f64>] {
        self.images.as_deref().unwrap_or(self.data.responses())
    }

    /// The regression weights `s_k(x)`.
    pub fn weights(&self, x: &[f64]) -> Result<Vec<f64>, RegressionError> {
        if x.len() != self.data.dim() {
            return Err(RegressionError::PredictorDimension { expected: self.data.dim(), got: x.len() });
        }
        match (&self.moments, &self.kernel) {
            (Some(mom), _) => mom.weights(self.data.predictors(), x),
            (None, Some(kernel)) => {
                let n = self.data.len() as f64;
                let xs = self.data.scalar_predictors();
                Ok(normalized_local_weights(&xs, x[0], kernel, None)?.into_iter().map(|w| w * n).collect())
            }
            (None, None) => Err(RegressionError::MissingKernel),
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<(GraphLaplacian, PredictionDiagnostics), RegressionError> {
        self.predict_from(x, None)
    }

    /// [`predict`](Self::predict) with the Laplacian projection warm-started
    /// from a nearby solution.
    pub fn predict_from(
        &self,
        x: &[f64],
        warm: Option<&HalfVector>,
    ) -> Result<(GraphLaplacian, PredictionDiagnostics), RegressionError> {
        let weights = self.weights(x)?;
        let n = self.data.len() as f64;
        let scaled: Vec<f64> = weights.iter().map(|w| w / n).collect();
        let target = weighted_sum(self.images(), &scaled);
        let proj = finish_pipeline(&target, &self.metric, self.embedding.as_ref(), self.data.bound(), &self.settings, warm)?;
        let diag = PredictionDiagnostics { weights, target, residual: proj.residual, iterations: proj.iterations };
        Ok((proj.laplacian, diag))
    }

    /// Predictions at many points, each warm-started from the previous one
    /// in the given order. Pass sorted points for the best effect.
    pub fn predict_many(&self, xs: &[Vec<f64>]) -> Result<Vec<GraphLaplacian>, RegressionError> {
        let mut out: Vec<GraphLaplacian> = Vec::with_capacity(xs.len());
        for x in xs {
            let warm = out.last().map(vech);
            out.push(self.predict_from(x, warm.as_ref())?.0);
        }
        Ok(out)
    }

    /// Squared distance in the model's metric between training response `k`
    /// and a Laplacian.
    fn distance_sq_to(&self, k: usize, l: &GraphLaplacian) -> Result<f64, RegressionError> {
        if self.metric.is_frobenius() {
            Ok(frobenius_distance_sq(self.data.response(k), l.matrix()))
        } else {
            let img = self.metric.transform(l.matrix())?;
            Ok(frobenius_distance_sq(&self.images()[k], &img))
        }
    }

    /// Fréchet mean of the training responses in the model's metric.
    pub fn response_mean(&self) -> Result<GraphLaplacian, RegressionError> {
        let n = self.data.len();
        let target = weighted_sum(self.images(), &vec![1.0 / n as f64; n]);
        Ok(finish_pipeline(&target, &self.metric, self.embedding.as_ref(), self.data.bound(), &self.settings, None)?
            .laplacian)
    }
}

/// Fréchet mean of Laplacians: the projected entrywise mean for Frobenius,
/// the power pipeline applied to the mean of `F_α` images otherwise.
pub fn frechet_mean(responses: &[GraphLaplacian], metric: &MetricSpec) -> Result<GraphLaplacian, RegressionError> {
    let first = responses.first().ok_or(RegressionError::TooFewObservations(0))?;
    let m = first.size();
    let bound = responses.iter().map(GraphLaplacian::bound).fold(0.0, f64::max);
    for (k, l) in responses.iter().enumerate() {
        if l.size() != m {
            return Err(RegressionError::ResponseSize { index: k, expected: m, got: l.size() });
        }
    }
    let images: Vec<DMatrix<f64>> =
        responses.iter().map(|l| metric.transform(l.matrix())).collect::<Result<_, _>>()?;
    let n = responses.len();
    let target = weighted_sum(&images, &vec![1.0 / n as f64; n]);
    let embedding =
        if metric.is_frobenius() { None } else { Some(EmbeddingSpace::for_laplacians(m, bound, metric.alpha())?) };
    Ok(finish_pipeline(&target, metric, embedding.as_ref(), bound, &QpSettings::default(), None)?.laplacian)
}

/// `1 - Σ d²(R_k, m̂(X_k)) / Σ d²(R_k, ω̂)` in the model's metric, with `ω̂`
/// the Fréchet mean of the responses. At most 1; negative when the model
/// fits worse than the mean.
pub fn frechet_r2(model: &FittedModel) -> Result<f64, RegressionError> {
    let data = model.data();
    if data.responses_identical() {
        return Err(RegressionError::ZeroVariance);
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.sort_by(|&a, &b| data.predictor(a).partial_cmp(data.predictor(b)).unwrap_or(std::cmp::Ordering::Equal));
    let xs: Vec<Vec<f64>> = order.iter().map(|&k| data.predictor(k).to_vec()).collect();
    let fitted = model.predict_many(&xs)?;
    let mut residual = 0.0;
    for (&k, l) in order.iter().zip(&fitted) {
        residual += model.distance_sq_to(k, l)?;
    }
    let mean = model.response_mean()?;
    let mut total = 0.0;
    for k in 0..data.len() {
        total += model.distance_sq_to(k, &mean)?;
    }
    if total == 0.0 {
        return Err(RegressionError::ZeroVariance);
    }
    Ok(1.0 - residual / total)
}
