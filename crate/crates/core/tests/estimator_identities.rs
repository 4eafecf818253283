mod common;

use nalgebra::DMatrix;
use netreg::graph::validate_laplacian;
use netreg::metric::MetricSpec;
use netreg::regression::{fit, frechet_mean, global_weights, Dataset, KernelSpec, Mode};

#[test]
fn weight_means_are_one() {
    let (global, local) = common::weight_mean_errors(100, 40);
    assert!(global <= 1e-12, "{global:e}");
    assert!(local <= 1e-10, "{local:e}");
}

#[test]
fn unit_power_equals_frobenius() {
    assert!(common::alpha_one_gap(20, 41) <= 1e-8);
}

#[test]
fn constant_responses_are_reproduced() {
    assert!(common::constant_response_error(42) <= 1e-8);
}

#[test]
fn frobenius_predictions_minimize_weighted_objective() {
    assert!(common::minimizer_violation(100, 200, 43) <= 1e-10);
}

#[test]
fn two_point_global_example() {
    let l1 = validate_laplacian(&DMatrix::from_row_slice(2, 2, &[0.3, -0.3, -0.3, 0.3]), 1.0).unwrap();
    let l2 = validate_laplacian(&DMatrix::from_row_slice(2, 2, &[0.8, -0.8, -0.8, 0.8]), 1.0).unwrap();
    let data = Dataset::new(vec![vec![0.0], vec![1.0]], vec![l1.clone(), l2.clone()]).unwrap();
    assert_eq!(global_weights(&data, &[1.0]).unwrap(), vec![0.0, 2.0]);
    let model = fit(data, Mode::Global, MetricSpec::Frobenius, None).unwrap();
    assert!((model.predict(&[1.0]).unwrap().0.matrix() - l2.matrix()).amax() < 1e-12);
    let mean = frechet_mean(&[l1, l2], &MetricSpec::Frobenius).unwrap();
    assert!((model.predict(&[0.5]).unwrap().0.matrix() - mean.matrix()).amax() < 1e-12);
}

#[test]
fn local_prediction_is_continuous_in_bandwidth() {
    let mut rng = common::rng(44);
    let data = common::random_dataset(&mut rng, 40, 1, 5);
    let hs: Vec<f64> = (0..40).map(|i| 0.3 * 1.05f64.powi(i)).collect();
    let preds: Vec<DMatrix<f64>> = hs
        .iter()
        .map(|&h| {
            let m = fit(data.clone(), Mode::Local, MetricSpec::Frobenius, Some(KernelSpec::gaussian(h).unwrap())).unwrap();
            m.predict(&[0.5]).unwrap().0.into_matrix()
        })
        .collect();
    let steps: Vec<f64> = preds.windows(2).map(|w| (&w[1] - &w[0]).norm()).collect();
    for k in 1..steps.len() - 1 {
        let neighbours = steps[k - 1].max(steps[k + 1]);
        assert!(steps[k] <= 10.0 * neighbours + 1e-12, "jump at h = {}", hs[k]);
    }
}
