use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};

use super::{Scenario, ScenarioSpec, SimulationError, WsbmFlavor, WsbmParams};
use crate::graph::{half_len, laplacian_matrix_from_half, laplacian_unchecked};
use crate::regression::Dataset;

/// `Beta(a, b)` that tolerates a vanishing shape parameter: all mass at 0
/// when `a <= 0`, at 1 when `b <= 0`.
pub(crate) fn beta_draw(rng: &mut impl Rng, a: f64, b: f64) -> f64 {
    if a <= 0.0 {
        return 0.0;
    }
    if b <= 0.0 {
        return 1.0;
    }
    Beta::new(a, b).expect("positive finite shape parameters").sample(rng).clamp(0.0, 1.0)
}

/// `U(0, 1)` excluding both endpoints.
pub(crate) fn open_uniform(rng: &mut impl Rng) -> f64 {
    loop {
        let x: f64 = rng.random();
        if x > 0.0 && x < 1.0 {
            return x;
        }
    }
}

/// Shape parameter `a` of `Beta(a, 1 - a)` for edge weights at predictor `x`.
pub(crate) fn shape(scenario: Scenario, flavor: Option<WsbmFlavor>, x: f64) -> f64 {
    let sine = || (std::f64::consts::PI * x).sin().clamp(0.0, 1.0);
    match (scenario, flavor) {
        (Scenario::I, _) => x,
        (Scenario::II, _) => 0.1 * x,
        (Scenario::III | Scenario::IV, _) => sine(),
        (Scenario::Wsbm, Some(WsbmFlavor::Local | WsbmFlavor::LocalSqrt)) => sine(),
        (Scenario::Wsbm, _) => x,
    }
}

/// Draws the off-diagonal half-vector `(-w_1, ..., -w_d)` of one network
/// with edge-weight shape `a`.
pub(crate) fn draw_half(rng: &mut impl Rng, m: usize, a: f64, wsbm: Option<&WsbmParams>) -> Vec<f64> {
    let mut v = Vec::with_capacity(half_len(m));
    let dist = (a > 0.0 && a < 1.0).then(|| Beta::new(a, 1.0 - a).expect("shape in (0, 1)"));
    for i in 0..m {
        for j in (i + 1)..m {
            let present = match wsbm {
                Some(w) => rng.random::<f64>() < w.probability(i, j),
                None => true,
            };
            let w = match (&dist, present) {
                (_, false) => 0.0,
                (Some(d), true) => d.sample(rng).clamp(0.0, 1.0),
                (None, true) => beta_draw(rng, a, 1.0 - a),
            };
            v.push(0.0 - w);
        }
    }
    v
}

fn sample(spec: &ScenarioSpec) -> Result<Dataset, SimulationError> {
    spec.validate()?;
    let flavor = spec.wsbm.map(|w| w.flavor);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut xs = Vec::with_capacity(spec.n);
    let mut roots = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let x = open_uniform(&mut rng);
        let v = draw_half(&mut rng, spec.m, shape(spec.scenario, flavor, x), spec.wsbm.as_ref());
        xs.push(vec![x]);
        roots.push(laplacian_unchecked(laplacian_matrix_from_half(&v, spec.m), 1.0));
    }
    let squared_response = match spec.scenario {
        Scenario::II => true,
        Scenario::Wsbm => flavor == Some(WsbmFlavor::GlobalSqrt),
        _ => false,
    };
    let data = if squared_response { Dataset::squared(xs, &roots, None)? } else { Dataset::new(xs, roots)? };
    Ok(data)
}

/// Draws `n` pairs `(X_k, L_k)` with `X_k ~ U(0, 1)` and independent
/// `Beta(a(X), 1 - a(X))` edge weights, `a = X` (I), `0.1 X` (II) or
/// `sin πX` (III, IV). Scenario II returns `F_2(L_k)` in the squared
/// response space with `W` taken from the data; the others use `W = 1`.
pub fn simulate_scenario(spec: &ScenarioSpec) -> Result<Dataset, SimulationError> {
    if spec.scenario == Scenario::Wsbm {
        return wsbm_sample(spec);
    }
    sample(spec)
}

/// Block-model sample: edge `(i, j)` exists with the probability of its
/// block pair and carries a beta weight depending on `X`.
pub fn wsbm_sample(spec: &ScenarioSpec) -> Result<Dataset, SimulationError> {
    if spec.scenario != Scenario::Wsbm {
        return Err(SimulationError::InvalidSpec(format!("scenario {} is not a block model", spec.scenario)));
    }
    sample(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::validate_laplacian;
    use crate::regression::{validate_squared, ResponseSpace};

    #[test]
    fn scenario_one_entries_in_box_and_deterministic() {
        let spec = ScenarioSpec::new(Scenario::I, 50, 7);
        let a = simulate_scenario(&spec).unwrap();
        let b = simulate_scenario(&spec).unwrap();
        assert_eq!(a, b);
        for r in a.responses() {
            assert!(validate_laplacian(r, 1.0).is_ok());
            for i in 0..10 {
                for j in 0..10 {
                    if i != j {
                        assert!((-1.0..=0.0).contains(&r[(i, j)]));
                    }
                }
            }
        }
        assert!(a.predictors().iter().all(|x| x[0] > 0.0 && x[0] < 1.0));
        let c = simulate_scenario(&ScenarioSpec::new(Scenario::I, 50, 8)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn scenario_one_conditional_mean() {
        // draws with X near 0.5 have edge weights with mean near 0.5
        let data = simulate_scenario(&ScenarioSpec::new(Scenario::I, 4000, 11)).unwrap();
        let mut vals = Vec::new();
        for k in 0..data.len() {
            if (data.predictor(k)[0] - 0.5).abs() <= 0.05 {
                let r = data.response(k);
                for i in 0..10 {
                    for j in (i + 1)..10 {
                        vals.push(-r[(i, j)]);
                    }
                }
            }
        }
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((mean - 0.5).abs() < 3.0 * sd / n.sqrt(), "{mean}");
    }

    #[test]
    fn scenario_two_lives_in_squared_space() {
        let d = simulate_scenario(&ScenarioSpec::new(Scenario::II, 40, 3)).unwrap();
        assert_eq!(d.space(), ResponseSpace::Squared);
        for r in d.responses() {
            assert!(validate_squared(r, d.bound()).is_ok());
        }
        assert!(d.bound() > 0.0);
    }

    #[test]
    fn scenarios_three_and_four_share_responses() {
        let a = simulate_scenario(&ScenarioSpec::new(Scenario::III, 30, 5)).unwrap();
        let b = simulate_scenario(&ScenarioSpec::new(Scenario::IV, 30, 5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn wsbm_extremes() {
        let base = ScenarioSpec::new(Scenario::Wsbm, 20, 1);
        let mut none = WsbmParams::standard(WsbmFlavor::Global);
        none.p11 = 0.0;
        none.p12 = 0.0;
        none.p22 = 0.0;
        let d = wsbm_sample(&base.with_wsbm(none)).unwrap();
        assert!(d.responses().iter().all(|r| r.iter().all(|&v| v == 0.0)));
        let mut all = none;
        all.p11 = 1.0;
        all.p12 = 1.0;
        all.p22 = 1.0;
        let d = wsbm_sample(&base.with_wsbm(all)).unwrap();
        for r in d.responses() {
            for i in 0..10 {
                for j in 0..10 {
                    if i != j {
                        assert!(r[(i, j)] < 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn wsbm_block_pattern() {
        let spec = ScenarioSpec::new(Scenario::Wsbm, 300, 2);
        assert_eq!(spec.wsbm.unwrap(), WsbmParams { block_sizes: (5, 5), p11: 0.5, p12: 0.2, p22: 0.5, flavor: WsbmFlavor::Global });
        let d = wsbm_sample(&spec).unwrap();
        let (mut within, mut nw, mut between, mut nb) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        for r in d.responses() {
            for i in 0..10 {
                for j in (i + 1)..10 {
                    let e = if r[(i, j)] < 0.0 { 1.0 } else { 0.0 };
                    if (i < 5) == (j < 5) {
                        within += e;
                        nw += 1.0;
                    } else {
                        between += e;
                        nb += 1.0;
                    }
                }
            }
        }
        let (pw, pb) = (within / nw, between / nb);
        let se = (pw * (1.0 - pw) / nw + pb * (1.0 - pb) / nb).sqrt();
        assert!(pw - pb > 3.0 * se);
        let sq = wsbm_sample(&spec.with_wsbm(WsbmParams::standard(WsbmFlavor::GlobalSqrt))).unwrap();
        assert_eq!(sq.space(), ResponseSpace::Squared);
    }

    #[test]
    fn invalid_specs() {
        assert!(simulate_scenario(&ScenarioSpec::new(Scenario::I, 1, 0)).is_err());
        assert!(simulate_scenario(&ScenarioSpec::new(Scenario::I, 5, 0).with_m(1)).is_err());
        let mut w = WsbmParams::standard(WsbmFlavor::Global);
        w.p12 = 1.5;
        assert!(wsbm_sample(&ScenarioSpec::new(Scenario::Wsbm, 5, 0).with_wsbm(w)).is_err());
        w.p12 = 0.2;
        w.block_sizes = (3, 3);
        assert!(wsbm_sample(&ScenarioSpec::new(Scenario::Wsbm, 5, 0).with_wsbm(w)).is_err());
    }

    #[test]
    fn beta_edge_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(beta_draw(&mut rng, 0.0, 1.0), 0.0);
        assert_eq!(beta_draw(&mut rng, 1.0, 0.0), 1.0);
        for _ in 0..1000 {
            let v = beta_draw(&mut rng, 1e-3, 1.0 - 1e-3);
            assert!((0.0..=1.0).contains(&v));
        }
    }
}
