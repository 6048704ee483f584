//! Radiation signal model and the per-node / centralized test statistics.
//!
//! Each node observes `z_i = b_i + w_i` with no source present (H0) or
//! `z_i = c_i + b_i + w_i` with the source present (H1). Background and
//! source counts are Poisson and the noise is Gaussian; the whole model is
//! handled through its Gaussian approximation:
//!
//! ```text
//! H0: z_i ~ N(λ_b,          λ_b + σ_w²)
//! H1: z_i ~ N(λ_ci + λ_b,   λ_ci + λ_b + σ_w²)
//! ```
//!
//! with `λ_ci = I_s / d_i²` decaying with the squared distance to the source.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("invalid scenario parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("test statistic is undefined for an empty observation set")]
    EmptyObservations,
    #[error("observation count {observations} does not match rate count {rates}")]
    LengthMismatch { observations: usize, rates: usize },
}

/// Two-dimensional sensor or source coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NodePosition {
    pub x: f64,
    pub y: f64,
}

impl NodePosition {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist2(&self, other: &NodePosition) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hypothesis {
    /// Source absent.
    H0,
    /// Source present.
    H1,
}

impl Hypothesis {
    pub fn is_present(self) -> bool {
        matches!(self, Hypothesis::H1)
    }
}

impl std::fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Hypothesis::H0 => f.write_str("h0"),
            Hypothesis::H1 => f.write_str("h1"),
        }
    }
}

/// Physical parameters of one detection scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    /// Background mean count per sensing interval.
    pub lambda_b: f64,
    /// Measurement noise variance.
    pub sigma_w2: f64,
    /// Source intensity `I_s`.
    pub source_intensity: f64,
    pub source_pos: NodePosition,
    /// Lower clamp on the squared node-to-source distance.
    pub min_dist2: f64,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            lambda_b: 0.5,
            sigma_w2: 0.5,
            source_intensity: 0.5,
            source_pos: NodePosition::new(1.5, 1.5),
            min_dist2: 1e-6,
        }
    }
}

impl ScenarioParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = |name, value: f64| {
            if value > 0.0 && value.is_finite() {
                Ok(())
            } else {
                Err(ModelError::InvalidParameter {
                    name,
                    value,
                    reason: "must be finite and > 0",
                })
            }
        };
        positive("lambda_b", self.lambda_b)?;
        positive("sigma_w2", self.sigma_w2)?;
        positive("min_dist2", self.min_dist2)?;
        if !(self.source_intensity >= 0.0 && self.source_intensity.is_finite()) {
            return Err(ModelError::InvalidParameter {
                name: "source_intensity",
                value: self.source_intensity,
                reason: "must be finite and >= 0",
            });
        }
        if !self.source_pos.is_finite() {
            return Err(ModelError::InvalidParameter {
                name: "source_pos",
                value: f64::NAN,
                reason: "coordinates must be finite",
            });
        }
        Ok(())
    }

    /// Variance of a single observation under H0.
    pub fn h0_variance(&self) -> f64 {
        self.lambda_b + self.sigma_w2
    }
}

/// One sensing-interval observation at a node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub node_id: usize,
    pub value: f64,
    pub hypothesis: Hypothesis,
}

/// Source-induced mean count `λ_ci` at `node`, inverse-square in distance.
pub fn source_rate(node: &NodePosition, params: &ScenarioParams) -> f64 {
    let d2 = node.dist2(&params.source_pos).max(params.min_dist2);
    params.source_intensity / d2
}

/// Mean and variance of an observation at `node` under `hyp`.
pub fn observation_moments(
    hyp: Hypothesis,
    node: &NodePosition,
    params: &ScenarioParams,
) -> (f64, f64) {
    let rate = match hyp {
        Hypothesis::H0 => 0.0,
        Hypothesis::H1 => source_rate(node, params),
    };
    (rate + params.lambda_b, rate + params.h0_variance())
}

pub fn sample_observation<R: Rng + ?Sized>(
    hyp: Hypothesis,
    node_id: usize,
    node: &NodePosition,
    params: &ScenarioParams,
    rng: &mut R,
) -> Observation {
    let (mean, var) = observation_moments(hyp, node, params);
    // var > 0 whenever params validate.
    let normal = Normal::new(mean, var.sqrt()).expect("observation variance is positive");
    Observation {
        node_id,
        value: normal.sample(rng),
        hypothesis: hyp,
    }
}

/// Draws one observation per node, in node order.
pub fn sample_observations<R: Rng + ?Sized>(
    hyp: Hypothesis,
    positions: &[NodePosition],
    params: &ScenarioParams,
    rng: &mut R,
) -> Vec<Observation> {
    positions
        .iter()
        .enumerate()
        .map(|(i, pos)| sample_observation(hyp, i, pos, params, rng))
        .collect()
}

/// Per-node locally optimum statistic
/// `f(z) = (z − λ_b) + (z − λ_b)² / (2(λ_b + σ_w²))`.
pub fn local_lod_statistic(z: f64, params: &ScenarioParams) -> f64 {
    let u = z - params.lambda_b;
    u + u * u / (2.0 * params.h0_variance())
}

/// Global locally optimum statistic `Σ_i f(z_i)`.
pub fn centralized_lod(observations: &[f64], params: &ScenarioParams) -> Result<f64, ModelError> {
    if observations.is_empty() {
        return Err(ModelError::EmptyObservations);
    }
    Ok(observations
        .iter()
        .map(|&z| local_lod_statistic(z, params))
        .sum())
}

/// `log f1(z; λ_ci) − log f0(z)` for the Gaussian approximations of both
/// hypotheses.
pub fn clairvoyant_llr(z: f64, lambda_ci: f64, params: &ScenarioParams) -> f64 {
    let v0 = params.h0_variance();
    let v1 = lambda_ci + v0;
    let r0 = z - params.lambda_b;
    let r1 = r0 - lambda_ci;
    -0.5 * (v1 / v0).ln() - r1 * r1 / (2.0 * v1) + r0 * r0 / (2.0 * v0)
}

/// Centralized clairvoyant LRT statistic: sum of per-node log-likelihood
/// ratios given the true source rates.
pub fn clairvoyant_lrt(
    observations: &[f64],
    rates: &[f64],
    params: &ScenarioParams,
) -> Result<f64, ModelError> {
    if observations.is_empty() {
        return Err(ModelError::EmptyObservations);
    }
    if observations.len() != rates.len() {
        return Err(ModelError::LengthMismatch {
            observations: observations.len(),
            rates: rates.len(),
        });
    }
    Ok(observations
        .iter()
        .zip(rates)
        .map(|(&z, &rate)| clairvoyant_llr(z, rate, params))
        .sum())
}
