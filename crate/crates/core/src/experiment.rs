//! Monte-Carlo experiment drivers.
//!
//! Every random draw comes from a stream keyed by `(master seed, tag, trial)`
//! (see [`crate::rng`]), trials run in parallel, and results are gathered in
//! trial order, so the CSV outputs depend only on the resolved config.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{AttackSection, ExperimentConfig};
use crate::consensus::{
    consensus_oracle, run_consensus, AttackConfig, ConsensusConfig, ConvergenceTrace, Variant,
};
use crate::metrics::{empirical_roc, iterations_to_within, relative_convergence_rate};
use crate::model::{
    clairvoyant_lrt, local_lod_statistic, sample_observations, source_rate, Hypothesis,
    NodePosition, ScenarioParams,
};
use crate::rng::{stream, stream_id};
use crate::topology::{generate, sample_position, GraphKind, Topology, TopologyConfig};
use crate::ExperimentError;

const INSTANCE_TAG: &str = "instance";
const BYZANTINE_TAG: &str = "byzantine";
const CONSENSUS_TAG: &str = "consensus";

/// Node placement, graph and source position.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    pub topology: Topology,
    pub source: NodePosition,
}

/// One detection trial: observations and local statistics on a geometry.
#[derive(Debug, Clone)]
pub struct Instance {
    pub geometry: Geometry,
    pub params: ScenarioParams,
    pub hypothesis: Hypothesis,
    pub observations: Vec<f64>,
    /// True source rates `λ_ci` (zero contribution under H0 sampling).
    pub rates: Vec<f64>,
    pub f_locals: Vec<f64>,
}

impl Instance {
    pub fn observe<R: Rng + ?Sized>(
        geometry: Geometry,
        params: ScenarioParams,
        hypothesis: Hypothesis,
        rng: &mut R,
    ) -> Self {
        let positions = geometry.topology.positions();
        let observations: Vec<f64> = sample_observations(hypothesis, positions, &params, rng)
            .into_iter()
            .map(|o| o.value)
            .collect();
        let rates = positions.iter().map(|p| source_rate(p, &params)).collect();
        let f_locals = observations
            .iter()
            .map(|&z| local_lod_statistic(z, &params))
            .collect();
        Self {
            geometry,
            params,
            hypothesis,
            observations,
            rates,
            f_locals,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.f_locals.len()
    }

    pub fn oracle(&self) -> f64 {
        consensus_oracle(&self.f_locals).expect("instances have nodes")
    }

    pub fn clairvoyant_score(&self) -> f64 {
        clairvoyant_lrt(&self.observations, &self.rates, &self.params).expect("lengths match")
    }
}

/// Summary of one consensus run against its oracle.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub trace: ConvergenceTrace,
    pub oracle: f64,
    pub t_star: Option<usize>,
    pub rel_rate: Option<f64>,
    /// Largest honest `|x − oracle|` in the final row.
    pub final_max_deviation: f64,
    pub final_relative_deviation: f64,
    /// Final state of the designated (lowest-index honest) node.
    pub score: f64,
}

pub fn draw_geometry<R: Rng + ?Sized>(
    cfg: &ExperimentConfig,
    topology: &TopologyConfig,
    rng: &mut R,
) -> Result<Geometry, ExperimentError> {
    let topology_graph = generate(topology, rng)?;
    let source = match cfg.scenario.source_pos {
        Some([x, y]) => NodePosition::new(x, y),
        None => sample_position(topology.region, rng),
    };
    Ok(Geometry {
        topology: topology_graph,
        source,
    })
}

/// Picks the Byzantine set for one trial.
pub fn draw_attack<R: Rng + ?Sized>(
    attack: Option<&AttackSection>,
    n_nodes: usize,
    rng: &mut R,
) -> Result<Option<AttackConfig>, ExperimentError> {
    let Some(section) = attack else {
        return Ok(None);
    };
    let ids: BTreeSet<usize> = match &section.byzantine_ids {
        Some(ids) => ids.iter().copied().collect(),
        None => {
            if section.n_byzantine > n_nodes {
                return Err(ExperimentError::Config(format!(
                    "cannot pick {} byzantines among {n_nodes} nodes",
                    section.n_byzantine
                )));
            }
            sample(rng, n_nodes, section.n_byzantine).into_iter().collect()
        }
    };
    let attack = section.with_ids(ids);
    attack.validate(n_nodes)?;
    Ok(Some(attack))
}

/// Topology constraints needed by the given variants (degree > 2p).
pub fn topology_for(base: &TopologyConfig, variants: &[Variant]) -> TopologyConfig {
    let needed = variants
        .iter()
        .filter_map(Variant::trim)
        .map(|p| 2 * p + 1)
        .max()
        .unwrap_or(0);
    TopologyConfig {
        min_degree: base.min_degree.max(needed),
        ..base.clone()
    }
}

/// Draws trial `trial` of the shared single-instance stream used by the
/// convergence, scaling and overhead experiments.
pub fn draw_instance(
    cfg: &ExperimentConfig,
    topology: &TopologyConfig,
    trial: u64,
) -> Result<Instance, ExperimentError> {
    let mut rng = stream(cfg.master_seed, INSTANCE_TAG, trial);
    let geometry = draw_geometry(cfg, topology, &mut rng)?;
    let params = cfg.scenario.params(geometry.source);
    params.validate()?;
    Ok(Instance::observe(geometry, params, cfg.hypothesis, &mut rng))
}

pub fn run_instance(
    cfg: &ExperimentConfig,
    instance: &Instance,
    consensus: &ConsensusConfig,
    attack: Option<&AttackConfig>,
    consensus_tag: &str,
    trial: u64,
) -> Result<RunOutcome, ExperimentError> {
    let mut rng = stream(cfg.master_seed, consensus_tag, trial);
    let trace = run_consensus(
        &instance.f_locals,
        &instance.geometry.topology,
        consensus,
        attack,
        &mut rng,
    )?;
    let oracle = instance.oracle();
    let t_star = iterations_to_within(
        &trace,
        oracle,
        cfg.convergence.band_fraction,
        cfg.convergence.atol,
    );
    let last = trace.iterations();
    let final_max_deviation = trace.max_honest_deviation(last, oracle);
    let final_relative_deviation = if oracle == 0.0 {
        if final_max_deviation == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        final_max_deviation / oracle.abs()
    };
    let designated = trace
        .designated_node()
        .ok_or_else(|| ExperimentError::Config("every node is byzantine".into()))?;
    let score = trace.final_states()[designated];
    Ok(RunOutcome {
        rel_rate: relative_convergence_rate(t_star, trace.n_nodes()),
        trace,
        oracle,
        t_star,
        final_max_deviation,
        final_relative_deviation,
        score,
    })
}

/// Trial `trial` of the convergence experiment with the configured variant
/// and attack.
pub fn convergence_trial(
    cfg: &ExperimentConfig,
    trial: u64,
) -> Result<(Instance, Option<AttackConfig>, RunOutcome), ExperimentError> {
    let consensus = cfg.consensus.config();
    let topology = topology_for(&cfg.topology.config(), &[consensus.variant]);
    let instance = draw_instance(cfg, &topology, trial)?;
    let mut byz_rng = stream(cfg.master_seed, BYZANTINE_TAG, trial);
    let attack = draw_attack(cfg.attack.as_ref(), instance.n_nodes(), &mut byz_rng)?;
    let outcome = run_instance(cfg, &instance, &consensus, attack.as_ref(), CONSENSUS_TAG, trial)?;
    Ok((instance, attack, outcome))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config: ExperimentConfig,
    pub master_seed: u64,
    pub version: String,
    pub timestamp_unix: u64,
}

impl Provenance {
    fn new(cfg: &ExperimentConfig) -> Self {
        Self {
            config: cfg.clone(),
            master_seed: cfg.master_seed,
            version: concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION")).to_string(),
            timestamp_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryInfo {
    pub positions: Vec<[f64; 2]>,
    pub source: [f64; 2],
    pub degrees: Vec<usize>,
}

impl From<&Geometry> for GeometryInfo {
    fn from(g: &Geometry) -> Self {
        Self {
            positions: g.topology.positions().iter().map(|p| [p.x, p.y]).collect(),
            source: [g.source.x, g.source.y],
            degrees: g.topology.degrees(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceSummary {
    pub variant: Variant,
    pub n_nodes: usize,
    pub iterations: usize,
    pub oracle: f64,
    pub t_star: Option<usize>,
    pub rel_rate: Option<f64>,
    pub final_max_deviation: f64,
    pub final_relative_deviation: f64,
    pub byzantine_ids: Vec<usize>,
    pub geometry: GeometryInfo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocEntry {
    /// `vanilla`, `robust`, `centralized` or `clairvoyant`.
    pub detector: String,
    pub intensity: f64,
    pub auc: f64,
    pub min_error_probability: f64,
    /// Mean final honest `|x − oracle|`; consensus detectors only.
    pub mean_max_deviation: Option<f64>,
    /// Fraction of trials whose honest nodes all end within the closeness band.
    pub close_fraction: Option<f64>,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocSummary {
    pub n_trials: usize,
    pub entries: Vec<RocEntry>,
    /// The shared network when geometry is frozen.
    pub geometry: Option<GeometryInfo>,
}

impl RocSummary {
    pub fn entry(&self, detector: &str, intensity: f64) -> Option<&RocEntry> {
        self.entries
            .iter()
            .find(|e| e.detector == detector && e.intensity == intensity)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub n: usize,
    pub k: usize,
    pub trials: usize,
    pub converged: usize,
    pub mean_t_star: Option<f64>,
    pub mean_rel_rate: Option<f64>,
    pub mean_degree: f64,
    pub max_degree: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingSummary {
    pub variant: Variant,
    pub rows: Vec<ScalingRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverheadSummary {
    pub robust: Variant,
    pub n_pairs: usize,
    pub vanilla_converged: usize,
    pub robust_converged: usize,
    pub mean_rate_vanilla: Option<f64>,
    pub mean_rate_robust: Option<f64>,
    /// Mean of `T*/N(robust) − T*/N(vanilla)` over pairs where both converged.
    pub mean_paired_overhead: Option<f64>,
    /// `mean_paired_overhead / mean_rate_vanilla`; only defined when every
    /// pair converged.
    pub relative_overhead: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "snake_case")]
pub enum Summary {
    Convergence(ConvergenceSummary),
    Roc(RocSummary),
    Scaling(ScalingSummary),
    Overhead(OverheadSummary),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: u64,
    pub label: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intensity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_nodes: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hypothesis: Option<Hypothesis>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_star: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_max_deviation: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub byzantine_ids: Vec<usize>,
}

impl TrialRecord {
    fn new(trial: u64, label: impl Into<String>) -> Self {
        Self {
            trial,
            label: label.into(),
            intensity: None,
            n_nodes: None,
            hypothesis: None,
            score: None,
            oracle: None,
            t_star: None,
            final_max_deviation: None,
            byzantine_ids: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub summary: Summary,
    pub records: Vec<TrialRecord>,
    /// Output files, relative to the output directory.
    pub files: Vec<String>,
    pub provenance: Provenance,
}

impl ExperimentReport {
    fn finish(
        cfg: &ExperimentConfig,
        experiment: &str,
        summary: Summary,
        records: Vec<TrialRecord>,
        mut files: Vec<String>,
    ) -> Result<Self, ExperimentError> {
        files.push("report.json".into());
        let report = Self {
            experiment: experiment.into(),
            summary,
            records,
            files,
            provenance: Provenance::new(cfg),
        };
        write_file(&cfg.output_dir, "report.json", |w| {
            serde_json::to_writer_pretty(&mut *w, &report).map_err(std::io::Error::other)?;
            writeln!(w)
        })?;
        Ok(report)
    }
}

fn write_file<F>(dir: &Path, name: &str, body: F) -> Result<(), ExperimentError>
where
    F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
{
    let io_err = |path: PathBuf| move |source| ExperimentError::Io { path, source };
    std::fs::create_dir_all(dir).map_err(io_err(dir.to_path_buf()))?;
    let path = dir.join(name);
    let file = File::create(&path).map_err(io_err(path.clone()))?;
    let mut writer = BufWriter::new(file);
    body(&mut writer)
        .and_then(|_| writer.flush())
        .map_err(io_err(path))
}

fn csv_to_io(e: csv::Error) -> std::io::Error {
    std::io::Error::other(e)
}

fn opt_to_string<T: ToString>(value: Option<T>) -> String {
    value.map(|v| v.to_string()).unwrap_or_default()
}

fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, count) = values
        .into_iter()
        .fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    (count > 0).then(|| sum / count as f64)
}

/// Single consensus run (trial 0) with the configured variant and attack;
/// writes `trace.csv`.
pub fn run_convergence_demo(cfg: &ExperimentConfig) -> Result<ExperimentReport, ExperimentError> {
    cfg.validate()?;
    let (instance, attack, outcome) = convergence_trial(cfg, 0)?;
    write_file(&cfg.output_dir, "trace.csv", |w| {
        outcome.trace.write_csv(w).map_err(csv_to_io)
    })?;
    let byzantine_ids: Vec<usize> = attack
        .map(|a| a.byzantine_ids.into_iter().collect())
        .unwrap_or_default();
    let summary = ConvergenceSummary {
        variant: cfg.consensus.config().variant,
        n_nodes: instance.n_nodes(),
        iterations: outcome.trace.iterations(),
        oracle: outcome.oracle,
        t_star: outcome.t_star,
        rel_rate: outcome.rel_rate,
        final_max_deviation: outcome.final_max_deviation,
        final_relative_deviation: outcome.final_relative_deviation,
        byzantine_ids: byzantine_ids.clone(),
        geometry: GeometryInfo::from(&instance.geometry),
    };
    let record = TrialRecord {
        hypothesis: Some(instance.hypothesis),
        score: Some(outcome.score),
        oracle: Some(outcome.oracle),
        t_star: outcome.t_star,
        final_max_deviation: Some(outcome.final_max_deviation),
        byzantine_ids,
        ..TrialRecord::new(0, summary.variant.name())
    };
    ExperimentReport::finish(
        cfg,
        "converge",
        Summary::Convergence(summary),
        vec![record],
        vec!["trace.csv".into()],
    )
}

struct RocTrialResult {
    hypothesis: Hypothesis,
    byzantine_ids: Vec<usize>,
    /// Per intensity: (centralized, clairvoyant, per-variant outcomes).
    per_intensity: Vec<(f64, f64, Vec<(f64, f64, f64)>)>,
}

/// Monte-Carlo ROC for each consensus variant and intensity, plus the
/// centralized LOD and clairvoyant LRT baselines.
///
/// Trials alternate H0/H1. One network (placement, source, graph) is shared
/// by all trials unless `roc.redraw_geometry` is set; Byzantine identities
/// are redrawn every trial. Scores are the designated node's state after
/// exactly `max_iters` iterations.
pub fn run_roc_experiment(
    cfg: &ExperimentConfig,
    intensities: &[f64],
    variants: &[Variant],
) -> Result<ExperimentReport, ExperimentError> {
    cfg.validate()?;
    if intensities.is_empty() {
        return Err(ExperimentError::Config("roc needs at least one intensity".into()));
    }
    let topology = topology_for(&cfg.topology.config(), variants);
    let frozen = if cfg.roc.redraw_geometry {
        None
    } else {
        let mut rng = stream(cfg.master_seed, "roc/geometry", 0);
        Some(draw_geometry(cfg, &topology, &mut rng)?)
    };
    let consensus: Vec<ConsensusConfig> = variants
        .iter()
        .map(|&v| ConsensusConfig {
            early_stop_tol: None,
            ..cfg.consensus.config_for(v)
        })
        .collect();
    let closeness = cfg.roc.closeness;

    let trials: Vec<RocTrialResult> = (0..cfg.n_trials as u64)
        .into_par_iter()
        .map(|t| -> Result<RocTrialResult, ExperimentError> {
            let hypothesis = if t % 2 == 0 { Hypothesis::H0 } else { Hypothesis::H1 };
            let geometry = match &frozen {
                Some(g) => g.clone(),
                None => draw_geometry(cfg, &topology, &mut stream(cfg.master_seed, "roc/geometry", t))?,
            };
            let n = geometry.topology.n_nodes();
            let attack = draw_attack(
                cfg.attack.as_ref(),
                n,
                &mut stream(cfg.master_seed, "roc/byzantine", t),
            )?;
            let mut per_intensity = Vec::with_capacity(intensities.len());
            for &intensity in intensities {
                let params = ScenarioParams {
                    source_intensity: intensity,
                    ..cfg.scenario.params(geometry.source)
                };
                params.validate()?;
                // same stream for every intensity: common random numbers
                let mut obs_rng = stream(cfg.master_seed, "roc/observe", t);
                let instance = Instance::observe(geometry.clone(), params, hypothesis, &mut obs_rng);
                let mut outcomes = Vec::with_capacity(consensus.len());
                for (v, c) in variants.iter().zip(&consensus) {
                    let tag = format!("roc/consensus/{}", v.name());
                    let out = run_instance(cfg, &instance, c, attack.as_ref(), &tag, t)?;
                    outcomes.push((out.score, out.final_max_deviation, out.final_relative_deviation));
                }
                per_intensity.push((instance.oracle(), instance.clairvoyant_score(), outcomes));
            }
            Ok(RocTrialResult {
                hypothesis,
                byzantine_ids: attack
                    .map(|a| a.byzantine_ids.into_iter().collect())
                    .unwrap_or_default(),
                per_intensity,
            })
        })
        .collect::<Result<_, _>>()?;

    let mut entries = Vec::new();
    let mut files = Vec::new();
    let mut records = Vec::new();
    for (ii, &intensity) in intensities.iter().enumerate() {
        let mut detectors: Vec<(String, Vec<(f64, Option<(f64, f64)>)>)> = variants
            .iter()
            .enumerate()
            .map(|(vi, v)| {
                let rows = trials
                    .iter()
                    .map(|tr| {
                        let (score, dev, rel) = tr.per_intensity[ii].2[vi];
                        (score, Some((dev, rel)))
                    })
                    .collect();
                (v.name().to_string(), rows)
            })
            .collect();
        detectors.push((
            "centralized".into(),
            trials.iter().map(|tr| (tr.per_intensity[ii].0, None)).collect(),
        ));
        detectors.push((
            "clairvoyant".into(),
            trials.iter().map(|tr| (tr.per_intensity[ii].1, None)).collect(),
        ));

        for (name, rows) in detectors {
            let split = |h: Hypothesis| -> Vec<f64> {
                rows.iter()
                    .zip(&trials)
                    .filter(|(_, tr)| tr.hypothesis == h)
                    .map(|(r, _)| r.0)
                    .collect()
            };
            let (h0, h1) = (split(Hypothesis::H0), split(Hypothesis::H1));
            if h0.is_empty() || h1.is_empty() {
                return Err(ExperimentError::Config(
                    "roc needs n_trials >= 2 so both hypotheses are sampled".into(),
                ));
            }
            let curve = empirical_roc(&h0, &h1)?;
            let file = format!("roc_{name}_{intensity}.csv");
            write_file(&cfg.output_dir, &file, |w| curve.write_csv(w))?;
            let devs: Vec<(f64, f64)> = rows.iter().filter_map(|r| r.1).collect();
            entries.push(RocEntry {
                detector: name.clone(),
                intensity,
                auc: curve.auc,
                min_error_probability: curve.min_error_probability(),
                mean_max_deviation: mean(devs.iter().map(|d| d.0)),
                close_fraction: (!devs.is_empty()).then(|| {
                    devs.iter().filter(|d| d.1 <= closeness).count() as f64 / devs.len() as f64
                }),
                file: file.clone(),
            });
            files.push(file);
            for ((score, dev), (t, tr)) in rows.iter().zip(trials.iter().enumerate()) {
                records.push(TrialRecord {
                    intensity: Some(intensity),
                    hypothesis: Some(tr.hypothesis),
                    score: Some(*score),
                    oracle: Some(tr.per_intensity[ii].0),
                    final_max_deviation: dev.map(|d| d.0),
                    byzantine_ids: tr.byzantine_ids.clone(),
                    ..TrialRecord::new(t as u64, name.clone())
                });
            }
        }
    }
    let summary = RocSummary {
        n_trials: cfg.n_trials,
        entries,
        geometry: frozen.as_ref().map(GeometryInfo::from),
    };
    ExperimentReport::finish(cfg, "roc", Summary::Roc(summary), records, files)
}

/// Convergence time versus network size on bounded-degree k-nearest graphs.
pub fn run_scaling_experiment(
    cfg: &ExperimentConfig,
    n_values: &[usize],
) -> Result<ExperimentReport, ExperimentError> {
    cfg.validate()?;
    if n_values.is_empty() || n_values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ExperimentError::Config(
            "scaling n_values must be non-empty and strictly ascending".into(),
        ));
    }
    let consensus = ConsensusConfig {
        max_iters: cfg.scaling.max_iters,
        ..cfg.consensus.config()
    };
    let mut rows = Vec::new();
    let mut records = Vec::new();
    for &n in n_values {
        if n < 2 {
            return Err(ExperimentError::Config(format!("scaling needs N >= 2, got {n}")));
        }
        let k = cfg.scaling.k.min(n - 1);
        let topology = topology_for(
            &TopologyConfig {
                n_nodes: n,
                kind: GraphKind::KNearest { k },
                ..cfg.topology.config()
            },
            &[consensus.variant],
        );
        let results: Vec<(Option<usize>, Option<f64>, Vec<usize>)> = (0..cfg.n_trials as u64)
            .into_par_iter()
            .map(|t| {
                let instance = draw_instance(cfg, &topology, t)?;
                let out = run_instance(cfg, &instance, &consensus, None, CONSENSUS_TAG, t)?;
                Ok((out.t_star, out.rel_rate, instance.geometry.topology.degrees()))
            })
            .collect::<Result<_, ExperimentError>>()?;
        let degrees: Vec<usize> = results.iter().flat_map(|r| r.2.iter().copied()).collect();
        rows.push(ScalingRow {
            n,
            k,
            trials: results.len(),
            converged: results.iter().filter(|r| r.0.is_some()).count(),
            mean_t_star: mean(results.iter().filter_map(|r| r.0.map(|t| t as f64))),
            mean_rel_rate: mean(results.iter().filter_map(|r| r.1)),
            mean_degree: mean(degrees.iter().map(|&d| d as f64)).unwrap_or(0.0),
            max_degree: degrees.iter().copied().max().unwrap_or(0),
        });
        for (t, r) in results.into_iter().enumerate() {
            records.push(TrialRecord {
                n_nodes: Some(n),
                t_star: r.0,
                ..TrialRecord::new(t as u64, consensus.variant.name())
            });
        }
    }
    write_file(&cfg.output_dir, "scaling.csv", |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["n", "trial", "t_star", "rel_rate"])?;
        for r in &records {
            let n = r.n_nodes.expect("scaling records carry n");
            out.write_record([
                n.to_string(),
                r.trial.to_string(),
                opt_to_string(r.t_star),
                opt_to_string(relative_convergence_rate(r.t_star, n)),
            ])?;
        }
        out.flush()
    })?;
    let summary = ScalingSummary {
        variant: consensus.variant,
        rows,
    };
    ExperimentReport::finish(
        cfg,
        "scaling",
        Summary::Scaling(summary),
        records,
        vec!["scaling.csv".into()],
    )
}

/// Attack-free, seed-paired comparison of vanilla and robust convergence.
pub fn run_overhead_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport, ExperimentError> {
    cfg.validate()?;
    let robust = Variant::Robust { p: cfg.consensus.trim };
    let variants = [Variant::Vanilla, robust];
    let topology = topology_for(&cfg.topology.config(), &variants);
    let pairs: Vec<(u64, [RunOutcome; 2])> = (0..cfg.n_trials as u64)
        .into_par_iter()
        .map(|t| {
            let instance = draw_instance(cfg, &topology, t)?;
            let run = |v: Variant| {
                run_instance(cfg, &instance, &cfg.consensus.config_for(v), None, CONSENSUS_TAG, t)
            };
            Ok((t, [run(variants[0])?, run(variants[1])?]))
        })
        .collect::<Result<_, ExperimentError>>()?;

    let mut records = Vec::with_capacity(2 * pairs.len());
    for (t, outs) in &pairs {
        for (v, out) in variants.iter().zip(outs) {
            records.push(TrialRecord {
                t_star: out.t_star,
                oracle: Some(out.oracle),
                final_max_deviation: Some(out.final_max_deviation),
                ..TrialRecord::new(*t, v.name())
            });
        }
    }
    write_file(&cfg.output_dir, "overhead.csv", |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["seed", "variant", "t_star", "rel_rate"])?;
        for (t, outs) in &pairs {
            let seed = stream_id(cfg.master_seed, INSTANCE_TAG, *t);
            for (v, o) in variants.iter().zip(outs) {
                out.write_record([
                    seed.to_string(),
                    v.name().to_string(),
                    opt_to_string(o.t_star),
                    opt_to_string(o.rel_rate),
                ])?;
            }
        }
        out.flush()
    })?;

    let rates = |i: usize| pairs.iter().filter_map(move |(_, o)| o[i].rel_rate);
    let both: Vec<(f64, f64)> = pairs
        .iter()
        .filter_map(|(_, o)| Some((o[0].rel_rate?, o[1].rel_rate?)))
        .collect();
    let mean_paired_overhead = mean(both.iter().map(|(v, r)| r - v));
    let mean_rate_vanilla = mean(rates(0));
    let relative_overhead = if both.len() == pairs.len() {
        match (mean_paired_overhead, mean_rate_vanilla) {
            (Some(d), Some(base)) if base > 0.0 => Some(d / base),
            (Some(d), Some(_)) if d == 0.0 => Some(0.0),
            _ => None,
        }
    } else {
        None
    };
    let summary = OverheadSummary {
        robust,
        n_pairs: pairs.len(),
        vanilla_converged: rates(0).count(),
        robust_converged: rates(1).count(),
        mean_rate_vanilla,
        mean_rate_robust: mean(rates(1)),
        mean_paired_overhead,
        relative_overhead,
    };
    ExperimentReport::finish(
        cfg,
        "overhead",
        Summary::Overhead(summary),
        records,
        vec!["overhead.csv".into()],
    )
}

/// Draws one topology from the configured model and writes `topology.json`.
pub fn run_topology_gen(cfg: &ExperimentConfig) -> Result<(Topology, PathBuf), ExperimentError> {
    cfg.validate()?;
    let topology = generate(
        &cfg.topology.config(),
        &mut stream(cfg.master_seed, "topology-gen", 0),
    )?;
    write_file(&cfg.output_dir, "topology.json", |w| {
        writeln!(w, "{}", topology.to_json())
    })?;
    Ok((topology, cfg.output_dir.join("topology.json")))
}
