//! Simulated Laplacian regression problems with known regression functions,
//! and Monte Carlo estimation of integrated squared errors.

mod experiment;
mod generate;
mod truth;

pub use experiment::{
    convergence_slope, integrated_squared_error, ise_grid, mise_experiment, replicate_seeds, trapezoid,
    MonteCarloReport, SizeSummary,
};
pub use generate::{simulate_scenario, wsbm_sample};
pub use truth::{true_target, true_target_mc, truth_curve, TRUTH_DRAWS, TRUTH_SEED};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metric::MetricSpec;
use crate::projection::ProjectionError;
use crate::regression::{BandwidthRule, FitConfig, KernelFamily, Mode, RegressionError};
use crate::spectral::SpectralError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimulationError {
    #[error("invalid scenario: {0}")]
    InvalidSpec(String),
    #[error("replicate with seed {seed} (n = {n}) failed: {source}")]
    Replicate { seed: u64, n: usize, source: RegressionError },
    #[error("need at least {needed} {what}, got {got}")]
    TooFew { what: &'static str, needed: usize, got: usize },
    #[error("all sample sizes are equal; slope is undefined")]
    DegenerateFit,
    #[error("MISE must be positive to take logs, got {0}")]
    NonPositiveMise(f64),
    #[error(transparent)]
    Regression(#[from] RegressionError),
    #[error(transparent)]
    Projection(#[from] ProjectionError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scenario {
    I,
    II,
    III,
    IV,
    #[serde(rename = "wsbm")]
    Wsbm,
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::I => "I",
            Self::II => "II",
            Self::III => "III",
            Self::IV => "IV",
            Self::Wsbm => "wsbm",
        })
    }
}

impl FromStr for Scenario {
    type Err = SimulationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "i" | "1" => Ok(Self::I),
            "ii" | "2" => Ok(Self::II),
            "iii" | "3" => Ok(Self::III),
            "iv" | "4" => Ok(Self::IV),
            "wsbm" => Ok(Self::Wsbm),
            _ => Err(SimulationError::InvalidSpec(format!("unknown scenario {s:?}"))),
        }
    }
}

/// Which regression setting a block-model sample is generated for.
///
/// Global flavours draw edge weights from `Beta(X, 1-X)`, local ones from
/// `Beta(sin πX, 1 - sin πX)`. `GlobalSqrt` returns `F_2(L)` as the response,
/// which makes the root-metric global model correctly specified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WsbmFlavor {
    #[default]
    Global,
    GlobalSqrt,
    Local,
    LocalSqrt,
}

impl FromStr for WsbmFlavor {
    type Err = SimulationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "global" => Ok(Self::Global),
            "global-sqrt" => Ok(Self::GlobalSqrt),
            "local" => Ok(Self::Local),
            "local-sqrt" => Ok(Self::LocalSqrt),
            _ => Err(SimulationError::InvalidSpec(format!("unknown block-model flavor {s:?}"))),
        }
    }
}

/// Two-block weighted stochastic block model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WsbmParams {
    pub block_sizes: (usize, usize),
    pub p11: f64,
    pub p12: f64,
    pub p22: f64,
    pub flavor: WsbmFlavor,
}

impl WsbmParams {
    /// Blocks of 5 and 5 nodes with within-block edge probability 0.5 and
    /// between-block probability 0.2.
    pub fn standard(flavor: WsbmFlavor) -> Self {
        Self { block_sizes: (5, 5), p11: 0.5, p12: 0.2, p22: 0.5, flavor }
    }

    /// Edge probability between nodes `i` and `j`.
    pub fn probability(&self, i: usize, j: usize) -> f64 {
        let m1 = self.block_sizes.0;
        match (i < m1, j < m1) {
            (true, true) => self.p11,
            (false, false) => self.p22,
            _ => self.p12,
        }
    }

    fn key(&self) -> [u64; 6] {
        [
            self.block_sizes.0 as u64,
            self.block_sizes.1 as u64,
            self.p11.to_bits(),
            self.p12.to_bits(),
            self.p22.to_bits(),
            self.flavor as u64,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    pub n: usize,
    pub m: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wsbm: Option<WsbmParams>,
}

impl ScenarioSpec {
    /// Spec with `m = 10`; block-model scenarios get the standard blocks
    /// and the global flavour.
    pub fn new(scenario: Scenario, n: usize, seed: u64) -> Self {
        let wsbm = (scenario == Scenario::Wsbm).then(|| WsbmParams::standard(WsbmFlavor::Global));
        Self { scenario, n, m: 10, seed, wsbm }
    }

    pub fn with_m(mut self, m: usize) -> Self {
        self.m = m;
        if let Some(w) = &mut self.wsbm {
            w.block_sizes = (m / 2, m - m / 2);
        }
        self
    }

    pub fn with_wsbm(mut self, params: WsbmParams) -> Self {
        self.wsbm = Some(params);
        self
    }

    pub fn validate(&self) -> Result<(), SimulationError> {
        let bad = |msg: String| Err(SimulationError::InvalidSpec(msg));
        if self.n < 2 {
            return bad(format!("n must be at least 2, got {}", self.n));
        }
        if self.m < 2 {
            return bad(format!("m must be at least 2, got {}", self.m));
        }
        if self.scenario == Scenario::Wsbm {
            let Some(w) = self.wsbm else {
                return bad("block-model scenario needs block parameters".into());
            };
            if w.block_sizes.0 + w.block_sizes.1 != self.m {
                return bad(format!("block sizes {:?} do not sum to m = {}", w.block_sizes, self.m));
            }
            for p in [w.p11, w.p12, w.p22] {
                if !(0.0..=1.0).contains(&p) {
                    return bad(format!("edge probability {p} outside [0, 1]"));
                }
            }
        }
        Ok(())
    }

    /// The regression setting each scenario is designed for: global
    /// Frobenius (I), global root metric (II), local Frobenius (III), local
    /// root metric (IV), and likewise for the block-model flavours. Local
    /// fits choose the bandwidth by leave-one-out cross-validation.
    pub fn default_config(&self) -> FitConfig {
        let (mode, root) = match (self.scenario, self.wsbm.map(|w| w.flavor)) {
            (Scenario::I, _) => (Mode::Global, false),
            (Scenario::II, _) => (Mode::Global, true),
            (Scenario::III, _) => (Mode::Local, false),
            (Scenario::IV, _) => (Mode::Local, true),
            (Scenario::Wsbm, Some(WsbmFlavor::GlobalSqrt)) => (Mode::Global, true),
            (Scenario::Wsbm, Some(WsbmFlavor::Local)) => (Mode::Local, false),
            (Scenario::Wsbm, Some(WsbmFlavor::LocalSqrt)) => (Mode::Local, true),
            (Scenario::Wsbm, _) => (Mode::Global, false),
        };
        let metric = if root { MetricSpec::square_root() } else { MetricSpec::Frobenius };
        FitConfig { mode, metric, family: KernelFamily::Gaussian, bandwidth: BandwidthRule::Loocv(None) }
    }
}
