use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use lod_consensus::model::{
    clairvoyant_llr, local_lod_statistic, observation_moments, sample_observation,
};
use lod_consensus::{Hypothesis, NodePosition, ScenarioParams};

/// Log of a normal density written out directly, without the simplified
/// difference form used by the library.
fn log_normal_pdf(z: f64, mean: f64, var: f64) -> f64 {
    let pdf = (-(z - mean).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt();
    pdf.ln()
}

fn params(lambda_b: f64, sigma_w2: f64) -> ScenarioParams {
    ScenarioParams {
        lambda_b,
        sigma_w2,
        ..ScenarioParams::default()
    }
}

#[test]
fn llr_matches_density_ratio_on_random_inputs() {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let p = params(rng.random_range(0.1..2.0), rng.random_range(0.1..2.0));
        let z = rng.random_range(-3.0..5.0);
        let lambda = rng.random_range(0.0..3.0);
        let v0 = p.lambda_b + p.sigma_w2;
        let oracle = log_normal_pdf(z, lambda + p.lambda_b, lambda + v0) - log_normal_pdf(z, p.lambda_b, v0);
        let got = clairvoyant_llr(z, lambda, &p);
        assert!((got - oracle).abs() < 1e-12, "z={z} λ={lambda}: {got} vs {oracle}");
    }
}

#[test]
fn llr_slope_at_zero_intensity_is_shifted_lod() {
    let p = ScenarioParams::default();
    let v0 = p.lambda_b + p.sigma_w2;
    for z in [-1.0, 0.0, 0.3, 0.5, 1.7, 4.0] {
        let coarse = clairvoyant_llr(z, 1e-6, &p) / 1e-6;
        let fine = clairvoyant_llr(z, 1e-7, &p) / 1e-7;
        let limit = (local_lod_statistic(z, &p) - 0.5) / v0;
        assert!((coarse - fine).abs() <= 1e-4 * fine.abs().max(1.0), "z={z}");
        assert!((fine - limit).abs() <= 1e-4 * limit.abs().max(1.0), "z={z}");
    }
}

#[test]
fn h0_samples_have_the_stated_moments() {
    let p = ScenarioParams::default();
    let node = NodePosition::new(0.0, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 1_000_000;
    let values: Vec<f64> = (0..n)
        .map(|i| sample_observation(Hypothesis::H0, i, &node, &p, &mut rng).value)
        .collect();
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    assert!((mean - 0.5).abs() < 0.003, "mean {mean}");
    assert!((var - 1.0).abs() < 0.01, "variance {var}");
}

#[test]
fn h1_samples_track_the_source_rate() {
    let p = ScenarioParams::default();
    let node = NodePosition::new(0.5, 1.5);
    let (mean, var) = observation_moments(Hypothesis::H1, &node, &p);
    // λ_c = 0.5 / 1² = 0.5
    assert!((mean - 1.0).abs() < 1e-15);
    assert!((var - 1.5).abs() < 1e-15);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let n = 200_000;
    let sample_mean = (0..n)
        .map(|i| sample_observation(Hypothesis::H1, i, &node, &p, &mut rng).value)
        .sum::<f64>()
        / n as f64;
    assert!((sample_mean - mean).abs() < 5.0 * (var / n as f64).sqrt());
}

proptest! {
    #[test]
    fn lod_is_bounded_below_and_convex(
        lambda_b in 0.01f64..5.0,
        sigma_w2 in 0.0f64..5.0,
        z in -20.0f64..20.0,
        h in 0.01f64..2.0,
    ) {
        let p = params(lambda_b, sigma_w2);
        let v0 = lambda_b + sigma_w2;
        let f = |z| local_lod_statistic(z, &p);
        prop_assert!(f(z) >= -v0 / 2.0 - 1e-12);
        prop_assert!(f(z - h) + f(z + h) - 2.0 * f(z) > 0.0);
        // minimum sits at z = λ_b − v0
        prop_assert!((f(lambda_b - v0) + v0 / 2.0).abs() < 1e-9 * v0.max(1.0));
    }

    #[test]
    fn llr_vanishes_without_source(z in -10.0f64..10.0, lambda_b in 0.01f64..3.0) {
        let p = params(lambda_b, 0.5);
        prop_assert_eq!(clairvoyant_llr(z, 0.0, &p), 0.0);
    }
}
