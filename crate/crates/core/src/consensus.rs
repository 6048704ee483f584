//! Decentralized ADMM averaging of local statistics.
//!
//! Every node `i` keeps a state `x_i`, a scaled dual `α_i` and its fixed
//! local statistic `f_i`. One iteration is
//!
//! ```text
//! x_i ← (ρ d_i x_i + ρ S_i − α_i + f_i) / (1 + 2ρ d_i)
//! broadcast x, recompute S
//! α_i ← α_i + ρ (d_i x_i − S_i)
//! ```
//!
//! where `d_i` is the degree of node `i` and `S_i` aggregates the values
//! announced by its neighbors. The vanilla scheme uses the plain sum; the
//! robust scheme uses [`gamma_p`], which trims the `p` smallest and `p`
//! largest announcements. Exactly one broadcast happens per iteration and
//! the aggregate computed after it feeds both the dual update and the next
//! state update.

use std::collections::BTreeSet;
use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topology::Topology;

#[derive(Debug, Error, PartialEq)]
pub enum ConsensusError {
    #[error("consensus needs at least one node")]
    Empty,
    #[error("trimming requires more than 2p = {} neighbor values, got {len}", 2 * .p)]
    TooFewValues { len: usize, p: usize },
    #[error("robust update with p = {p} needs every degree > 2p: {detail}")]
    TrimPrecondition { p: usize, detail: String },
    #[error("{got} local statistics supplied for a {expected}-node topology")]
    SizeMismatch { expected: usize, got: usize },
    #[error("byzantine node {id} is outside 0..{n_nodes}")]
    ByzantineOutOfRange { id: usize, n_nodes: usize },
    #[error("invalid consensus config: {0}")]
    InvalidConfig(String),
    #[error("non-finite state at iteration {iter}, node {node}")]
    NonFinite { iter: usize, node: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Variant {
    Vanilla,
    /// Neighbor aggregates pass through the trim operator with parameter `p`.
    Robust { p: usize },
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::Vanilla => "vanilla",
            Variant::Robust { .. } => "robust",
        }
    }

    pub fn trim(&self) -> Option<usize> {
        match *self {
            Variant::Vanilla => None,
            Variant::Robust { p } => Some(p),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Variant::Vanilla => f.write_str("vanilla"),
            Variant::Robust { p } => write!(f, "robust(p={p})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsensusConfig {
    pub rho: f64,
    pub max_iters: usize,
    pub variant: Variant,
    /// Stop once `max_i |x_i^{k+1} − x_i^k|` falls below this value.
    pub early_stop_tol: Option<f64>,
}

impl Default for ConsensusConfig {
    fn default() -> Self {
        Self {
            rho: 1.0,
            max_iters: 100,
            variant: Variant::Vanilla,
            early_stop_tol: None,
        }
    }
}

impl ConsensusConfig {
    pub fn validate(&self) -> Result<(), ConsensusError> {
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(ConsensusError::InvalidConfig(format!(
                "rho must be > 0, got {}",
                self.rho
            )));
        }
        if let Some(tol) = self.early_stop_tol {
            if !(tol > 0.0) {
                return Err(ConsensusError::InvalidConfig(format!(
                    "early_stop_tol must be > 0, got {tol}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeState {
    pub x: f64,
    pub alpha: f64,
    pub f_local: f64,
}

/// Byzantine data falsification: each listed node announces its true state
/// plus a fresh `N(mu_x, sigma_x2)` offset every round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub byzantine_ids: BTreeSet<usize>,
    pub mu_x: f64,
    pub sigma_x2: f64,
}

impl AttackConfig {
    pub fn validate(&self, n_nodes: usize) -> Result<(), ConsensusError> {
        if let Some(&id) = self.byzantine_ids.iter().find(|&&id| id >= n_nodes) {
            return Err(ConsensusError::ByzantineOutOfRange { id, n_nodes });
        }
        if !(self.sigma_x2 >= 0.0 && self.sigma_x2.is_finite()) || !self.mu_x.is_finite() {
            return Err(ConsensusError::InvalidConfig(format!(
                "attack needs finite mu_x and sigma_x2 >= 0, got ({}, {})",
                self.mu_x, self.sigma_x2
            )));
        }
        Ok(())
    }

    pub fn is_byzantine(&self, node: usize) -> bool {
        self.byzantine_ids.contains(&node)
    }
}

/// Per-iteration states of one consensus run.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTrace {
    /// Row `k` holds `x^k`; row 0 is the initialization.
    pub states: Vec<Vec<f64>>,
    pub honest_mask: Vec<bool>,
}

impl ConvergenceTrace {
    pub fn n_nodes(&self) -> usize {
        self.honest_mask.len()
    }

    /// Number of iterations actually run.
    pub fn iterations(&self) -> usize {
        self.states.len() - 1
    }

    pub fn final_states(&self) -> &[f64] {
        self.states.last().expect("trace holds the initial row")
    }

    pub fn honest_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.honest_mask
            .iter()
            .enumerate()
            .filter(|(_, &h)| h)
            .map(|(i, _)| i)
    }

    /// Lowest-index honest node; its state is the network's decision score.
    pub fn designated_node(&self) -> Option<usize> {
        self.honest_nodes().next()
    }

    /// Largest `|x_i − target|` over honest nodes at row `k`.
    pub fn max_honest_deviation(&self, k: usize, target: f64) -> f64 {
        self.honest_nodes()
            .map(|i| (self.states[k][i] - target).abs())
            .fold(0.0, f64::max)
    }

    /// Writes `iter,node_id,x,is_byzantine` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["iter", "node_id", "x", "is_byzantine"])?;
        for (k, row) in self.states.iter().enumerate() {
            for (i, x) in row.iter().enumerate() {
                out.write_record([
                    k.to_string(),
                    i.to_string(),
                    x.to_string(),
                    (!self.honest_mask[i]).to_string(),
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Each node starts at its own local statistic with a zero dual.
pub fn init_states(f_locals: &[f64]) -> Result<Vec<NodeState>, ConsensusError> {
    if f_locals.is_empty() {
        return Err(ConsensusError::Empty);
    }
    Ok(f_locals
        .iter()
        .map(|&f| NodeState {
            x: f,
            alpha: 0.0,
            f_local: f,
        })
        .collect())
}

/// Values every node announces this round. Byzantine offsets are drawn in
/// ascending node order, one per Byzantine per round.
pub fn broadcast_round<R: Rng + ?Sized>(
    states: &[NodeState],
    attack: Option<&AttackConfig>,
    rng: &mut R,
) -> Vec<f64> {
    let mut announced: Vec<f64> = states.iter().map(|s| s.x).collect();
    if let Some(attack) = attack {
        let offset = Normal::new(attack.mu_x, attack.sigma_x2.sqrt())
            .expect("validated attack variance");
        for &id in &attack.byzantine_ids {
            announced[id] += offset.sample(rng);
        }
    }
    announced
}

/// Trimmed neighbor aggregate `Γ_p`.
///
/// Sorts the values (stable, so ties keep their input order), replaces the
/// `p` smallest and `p` largest with the mean `m` of the remaining `d − 2p`
/// values, and returns the sum of the modified set, i.e. `d·m`.
/// With `p = 0` this is the plain sum in input order.
pub fn gamma_p(values: &[f64], p: usize) -> Result<f64, ConsensusError> {
    let d = values.len();
    if d <= 2 * p {
        return Err(ConsensusError::TooFewValues { len: d, p });
    }
    if p == 0 {
        return Ok(values.iter().sum());
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let middle = &sorted[p..d - p];
    let kept: f64 = middle.iter().sum();
    let mean = kept / middle.len() as f64;
    Ok(kept + 2.0 * p as f64 * mean)
}

/// Neighbor aggregate `S_i` for every node.
pub fn neighbor_aggregates(
    topology: &Topology,
    announced: &[f64],
    variant: Variant,
) -> Result<Vec<f64>, ConsensusError> {
    let mut buf = Vec::new();
    (0..topology.n_nodes())
        .map(|i| {
            buf.clear();
            buf.extend(topology.neighbors(i).iter().map(|&j| announced[j]));
            match variant {
                Variant::Vanilla => Ok(buf.iter().sum()),
                Variant::Robust { p } => gamma_p(&buf, p),
            }
        })
        .collect()
}

fn admm_step<R: Rng + ?Sized>(
    states: &mut [NodeState],
    topology: &Topology,
    aggregates: &mut Vec<f64>,
    rho: f64,
    variant: Variant,
    attack: Option<&AttackConfig>,
    rng: &mut R,
) -> Result<(), ConsensusError> {
    for (i, state) in states.iter_mut().enumerate() {
        let d = topology.degree(i) as f64;
        state.x = (rho * d * state.x + rho * aggregates[i] - state.alpha + state.f_local)
            / (1.0 + 2.0 * rho * d);
    }
    let announced = broadcast_round(states, attack, rng);
    *aggregates = neighbor_aggregates(topology, &announced, variant)?;
    for (i, state) in states.iter_mut().enumerate() {
        let d = topology.degree(i) as f64;
        state.alpha += rho * (d * state.x - aggregates[i]);
    }
    Ok(())
}

/// One vanilla iteration. `aggregates` holds the neighbor sums from the
/// previous broadcast on entry and the sums from this round's broadcast on
/// return.
pub fn vanilla_step<R: Rng + ?Sized>(
    states: &mut [NodeState],
    topology: &Topology,
    aggregates: &mut Vec<f64>,
    rho: f64,
    attack: Option<&AttackConfig>,
    rng: &mut R,
) -> Result<(), ConsensusError> {
    admm_step(states, topology, aggregates, rho, Variant::Vanilla, attack, rng)
}

/// One robust iteration; identical to [`vanilla_step`] with every neighbor
/// sum replaced by `Γ_p`.
pub fn robust_step<R: Rng + ?Sized>(
    states: &mut [NodeState],
    topology: &Topology,
    aggregates: &mut Vec<f64>,
    rho: f64,
    p: usize,
    attack: Option<&AttackConfig>,
    rng: &mut R,
) -> Result<(), ConsensusError> {
    let report = topology.validate_for_trim(p);
    if !report.passed() {
        return Err(ConsensusError::TrimPrecondition {
            p,
            detail: report.to_string(),
        });
    }
    admm_step(states, topology, aggregates, rho, Variant::Robust { p }, attack, rng)
}

/// Runs a full consensus: initialization, round-0 broadcast, then up to
/// `max_iters` iterations, recording every state vector.
pub fn run_consensus<R: Rng + ?Sized>(
    f_locals: &[f64],
    topology: &Topology,
    config: &ConsensusConfig,
    attack: Option<&AttackConfig>,
    rng: &mut R,
) -> Result<ConvergenceTrace, ConsensusError> {
    config.validate()?;
    let n = topology.n_nodes();
    if f_locals.len() != n {
        return Err(ConsensusError::SizeMismatch {
            expected: n,
            got: f_locals.len(),
        });
    }
    if let Some(attack) = attack {
        attack.validate(n)?;
    }
    if let Variant::Robust { p } = config.variant {
        let report = topology.validate_for_trim(p);
        if !report.passed() {
            return Err(ConsensusError::TrimPrecondition {
                p,
                detail: report.to_string(),
            });
        }
    }

    let mut states = init_states(f_locals)?;
    let honest_mask = (0..n)
        .map(|i| !attack.is_some_and(|a| a.is_byzantine(i)))
        .collect();
    let mut trace = ConvergenceTrace {
        states: Vec::with_capacity(config.max_iters + 1),
        honest_mask,
    };
    trace.states.push(f_locals.to_vec());

    let announced = broadcast_round(&states, attack, rng);
    let mut aggregates = neighbor_aggregates(topology, &announced, config.variant)?;

    for iter in 1..=config.max_iters {
        admm_step(
            &mut states,
            topology,
            &mut aggregates,
            config.rho,
            config.variant,
            attack,
            rng,
        )?;
        if let Some(node) = states
            .iter()
            .position(|s| !(s.x.is_finite() && s.alpha.is_finite()))
        {
            return Err(ConsensusError::NonFinite { iter, node });
        }
        let row: Vec<f64> = states.iter().map(|s| s.x).collect();
        let change = row
            .iter()
            .zip(trace.final_states())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        trace.states.push(row);
        if config.early_stop_tol.is_some_and(|tol| change < tol) {
            break;
        }
    }
    Ok(trace)
}

/// Consensus target: the mean of the local statistics, which minimizes
/// `Σ_i (x − f_i)² / 2`.
pub fn consensus_oracle(f_locals: &[f64]) -> Result<f64, ConsensusError> {
    if f_locals.is_empty() {
        return Err(ConsensusError::Empty);
    }
    Ok(f_locals.iter().sum::<f64>() / f_locals.len() as f64)
}
