//! Experiment configuration document (TOML). Every field is optional and
//! falls back to the default scenario: 10 nodes in a 3×3 region, λ_b = 0.5,
//! σ_w² = 0.5, ρ = 1.0, 1000 Monte-Carlo trials.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::consensus::{AttackConfig, ConsensusConfig, Variant};
use crate::model::{Hypothesis, NodePosition, ScenarioParams};
use crate::topology::{GraphKind, TopologyConfig};
use crate::ExperimentError;

pub const DEFAULT_MASTER_SEED: u64 = 42;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    pub n_trials: usize,
    pub output_dir: PathBuf,
    /// Hypothesis used by single-instance experiments (convergence, scaling, overhead).
    pub hypothesis: Hypothesis,
    pub scenario: ScenarioSection,
    pub topology: TopologySection,
    pub consensus: ConsensusSection,
    pub attack: Option<AttackSection>,
    pub convergence: ConvergenceSection,
    pub roc: RocSection,
    pub scaling: ScalingSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            master_seed: DEFAULT_MASTER_SEED,
            n_trials: 1000,
            output_dir: PathBuf::from("out"),
            hypothesis: Hypothesis::H1,
            scenario: ScenarioSection::default(),
            topology: TopologySection::default(),
            consensus: ConsensusSection::default(),
            attack: None,
            convergence: ConvergenceSection::default(),
            roc: RocSection::default(),
            scaling: ScalingSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSection {
    pub lambda_b: f64,
    pub sigma_w2: f64,
    pub source_intensity: f64,
    /// Fixed source coordinates; drawn uniformly in the region when absent.
    pub source_pos: Option<[f64; 2]>,
    pub min_dist2: f64,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        let d = ScenarioParams::default();
        Self {
            lambda_b: d.lambda_b,
            sigma_w2: d.sigma_w2,
            source_intensity: d.source_intensity,
            source_pos: None,
            min_dist2: d.min_dist2,
        }
    }
}

impl ScenarioSection {
    pub fn params(&self, source_pos: NodePosition) -> ScenarioParams {
        ScenarioParams {
            lambda_b: self.lambda_b,
            sigma_w2: self.sigma_w2,
            source_intensity: self.source_intensity,
            source_pos,
            min_dist2: self.min_dist2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphKindName {
    Geometric,
    KNearest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologySection {
    pub n_nodes: usize,
    pub region: f64,
    pub kind: GraphKindName,
    pub radius: f64,
    pub k: usize,
    pub max_retries: usize,
    pub min_degree: usize,
}

impl Default for TopologySection {
    fn default() -> Self {
        Self {
            n_nodes: 10,
            region: 3.0,
            kind: GraphKindName::Geometric,
            radius: 1.5,
            k: 10,
            max_retries: 1000,
            min_degree: 0,
        }
    }
}

impl TopologySection {
    pub fn config(&self) -> TopologyConfig {
        TopologyConfig {
            n_nodes: self.n_nodes,
            region: self.region,
            kind: match self.kind {
                GraphKindName::Geometric => GraphKind::Geometric {
                    radius: self.radius,
                },
                GraphKindName::KNearest => GraphKind::KNearest { k: self.k },
            },
            max_retries: self.max_retries,
            min_degree: self.min_degree,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariantName {
    Vanilla,
    Robust,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConsensusSection {
    pub rho: f64,
    pub max_iters: usize,
    pub variant: VariantName,
    /// Trim count `p` for the robust variant.
    pub trim: usize,
    pub early_stop_tol: Option<f64>,
}

impl Default for ConsensusSection {
    fn default() -> Self {
        Self {
            rho: 1.0,
            max_iters: 100,
            variant: VariantName::Vanilla,
            trim: 1,
            early_stop_tol: None,
        }
    }
}

impl ConsensusSection {
    pub fn resolve(&self, name: VariantName) -> Variant {
        match name {
            VariantName::Vanilla => Variant::Vanilla,
            VariantName::Robust => Variant::Robust { p: self.trim },
        }
    }

    pub fn config(&self) -> ConsensusConfig {
        self.config_for(self.resolve(self.variant))
    }

    pub fn config_for(&self, variant: Variant) -> ConsensusConfig {
        ConsensusConfig {
            rho: self.rho,
            max_iters: self.max_iters,
            variant,
            early_stop_tol: self.early_stop_tol,
        }
    }
}

/// Attack description; Byzantine identities are fixed when `byzantine_ids`
/// is given and otherwise drawn uniformly per trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackSection {
    pub n_byzantine: usize,
    pub byzantine_ids: Option<Vec<usize>>,
    pub mu_x: f64,
    pub sigma_x2: f64,
}

impl Default for AttackSection {
    fn default() -> Self {
        Self {
            n_byzantine: 1,
            byzantine_ids: None,
            mu_x: 1.5,
            sigma_x2: 0.1,
        }
    }
}

impl AttackSection {
    pub fn with_ids(&self, ids: BTreeSet<usize>) -> AttackConfig {
        AttackConfig {
            byzantine_ids: ids,
            mu_x: self.mu_x,
            sigma_x2: self.sigma_x2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceSection {
    /// Honest nodes must stay within `(1 − band_fraction)·|target|`.
    pub band_fraction: f64,
    pub atol: f64,
}

impl Default for ConvergenceSection {
    fn default() -> Self {
        Self {
            band_fraction: 0.95,
            atol: crate::metrics::DEFAULT_ATOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RocSection {
    pub intensities: Vec<f64>,
    pub variants: Vec<VariantName>,
    /// Draw a new placement, source and graph every trial instead of one
    /// network per experiment.
    pub redraw_geometry: bool,
    /// Relative band used for the per-trial "close to the oracle" tally.
    pub closeness: f64,
}

impl Default for RocSection {
    fn default() -> Self {
        Self {
            intensities: vec![0.1, 0.5],
            variants: vec![VariantName::Vanilla],
            redraw_geometry: false,
            closeness: 0.10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScalingSection {
    pub n_values: Vec<usize>,
    /// Neighbors proposed per node; capped at `N − 1`.
    pub k: usize,
    pub max_iters: usize,
}

impl Default for ScalingSection {
    fn default() -> Self {
        Self {
            n_values: vec![10, 20, 50, 100],
            k: 10,
            max_iters: 500,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ExperimentError> {
        toml::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(|source| ExperimentError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text).map_err(|e| match e {
            ExperimentError::Config(msg) => {
                ExperimentError::Config(format!("{}: {msg}", path.display()))
            }
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.n_trials == 0 {
            return Err(ExperimentError::Config("n_trials must be >= 1".into()));
        }
        let band = self.convergence.band_fraction;
        if !(band > 0.0 && band < 1.0) {
            return Err(ExperimentError::Config(format!(
                "convergence.band_fraction must lie in (0, 1), got {band}"
            )));
        }
        self.scenario.params(NodePosition::default()).validate()?;
        self.topology.config().validate()?;
        self.consensus.config().validate()?;
        if let Some(attack) = &self.attack {
            let ids = attack.byzantine_ids.clone().unwrap_or_default();
            attack
                .with_ids(ids.into_iter().collect())
                .validate(self.topology.n_nodes)?;
            if attack.byzantine_ids.is_none() && attack.n_byzantine > self.topology.n_nodes {
                return Err(ExperimentError::Config(format!(
                    "attack.n_byzantine {} exceeds {} nodes",
                    attack.n_byzantine, self.topology.n_nodes
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = ExperimentConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn nested_sections_parse() {
        let cfg = ExperimentConfig::from_toml_str(
            r#"
            master_seed = 7
            n_trials = 50
            [topology]
            kind = "k_nearest"
            k = 4
            [consensus]
            variant = "robust"
            trim = 2
            [attack]
            mu_x = 2.5
            byzantine_ids = [3]
            "#,
        )
        .unwrap();
        assert_eq!(cfg.master_seed, 7);
        assert_eq!(cfg.topology.config().kind, GraphKind::KNearest { k: 4 });
        assert_eq!(cfg.consensus.config().variant, Variant::Robust { p: 2 });
        let attack = cfg.attack.unwrap();
        assert_eq!(attack.mu_x, 2.5);
        assert_eq!(attack.sigma_x2, 0.1);
        assert_eq!(attack.byzantine_ids, Some(vec![3]));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_toml_str("nodes = 3").is_err());
    }

    #[test]
    fn toml_round_trip() {
        let mut cfg = ExperimentConfig::default();
        cfg.attack = Some(AttackSection::default());
        cfg.scenario.source_pos = Some([1.0, 2.0]);
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn validation_catches_bad_values() {
        let mut cfg = ExperimentConfig::default();
        cfg.n_trials = 0;
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::default();
        cfg.attack = Some(AttackSection {
            byzantine_ids: Some(vec![10]),
            ..Default::default()
        });
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::default();
        cfg.scenario.lambda_b = -1.0;
        assert!(cfg.validate().is_err());
    }
}
