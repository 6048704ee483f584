use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lod_consensus::config::{AttackSection, VariantName};
use lod_consensus::experiment::{
    run_convergence_demo, run_overhead_experiment, run_roc_experiment, run_scaling_experiment,
    run_topology_gen, ExperimentReport, Summary,
};
use lod_consensus::{ExperimentConfig, ExperimentError};

const DEFAULTS: &str = "\
Defaults (every config key is optional):
  scenario:   lambda_b = 0.5, sigma_w2 = 0.5, source_intensity = 0.5,
              source position uniform in the region, min_dist2 = 1e-6
  topology:   n_nodes = 10, region = 3.0 (square side), kind = geometric,
              radius = 1.5, k = 10 (k_nearest), max_retries = 1000
  consensus:  rho = 1.0, max_iters = 100, variant = vanilla, trim = 1
  attack:     off; when enabled n_byzantine = 1 (uniform per trial),
              mu_x = 1.5, sigma_x2 = 0.1
  experiment: n_trials = 1000, master_seed = 42, output_dir = out,
              hypothesis = h1 (converge/scaling/overhead)
  roc:        intensities = [0.1, 0.5], variants = [vanilla], one shared network
  scaling:    n_values = [10, 20, 50, 100], k = 10, max_iters = 500
  convergence band: 95% of the consensus target (5% relative band)

Seed precedence: --seed, then $LOD_SEED, then the config file.";

#[derive(Parser, Debug)]
#[command(
    name = "lodsim",
    version,
    about = "Locally optimum radiation detection over decentralized ADMM consensus",
    after_help = DEFAULTS
)]
struct Cli {
    /// TOML config document; sections mirror the experiment config.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Master seed (overrides $LOD_SEED and the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Monte-Carlo trial count.
    #[arg(long, global = true)]
    trials: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct ConsensusArgs {
    /// Consensus variant.
    #[arg(long, value_enum)]
    variant: Option<VariantArg>,
    /// Trim count p for the robust variant.
    #[arg(long)]
    trim: Option<usize>,
}

#[derive(Args, Debug, Default)]
struct AttackArgs {
    /// Number of randomly chosen Byzantine nodes (enables the attack).
    #[arg(long)]
    byzantines: Option<usize>,
    /// Mean of the falsification offset (enables the attack).
    #[arg(long)]
    mu_x: Option<f64>,
    /// Variance of the falsification offset (enables the attack).
    #[arg(long)]
    sigma_x2: Option<f64>,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
enum VariantArg {
    Vanilla,
    Robust,
}

impl From<VariantArg> for VariantName {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Vanilla => VariantName::Vanilla,
            VariantArg::Robust => VariantName::Robust,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Single consensus run; writes trace.csv.
    Converge {
        #[command(flatten)]
        consensus: ConsensusArgs,
        #[command(flatten)]
        attack: AttackArgs,
    },
    /// Monte-Carlo ROC per variant and source intensity; writes roc_*.csv.
    Roc {
        /// Comma-separated source intensities.
        #[arg(long, value_delimiter = ',')]
        intensities: Option<Vec<f64>>,
        /// Comma-separated consensus variants.
        #[arg(long, value_delimiter = ',', value_enum)]
        variants: Option<Vec<VariantArg>>,
        /// Redraw placement, source and graph every trial.
        #[arg(long)]
        redraw_geometry: bool,
        #[arg(long)]
        trim: Option<usize>,
        #[command(flatten)]
        attack: AttackArgs,
    },
    /// T* and T*/N versus network size on k-nearest graphs; writes scaling.csv.
    Scaling {
        /// Comma-separated network sizes, ascending.
        #[arg(long, value_delimiter = ',')]
        n_values: Option<Vec<usize>>,
        #[command(flatten)]
        consensus: ConsensusArgs,
    },
    /// Paired vanilla vs robust convergence without attack; writes overhead.csv.
    Overhead {
        #[arg(long)]
        trim: Option<usize>,
    },
    /// Draws one topology; writes topology.json.
    TopologyGen,
}

fn apply_consensus(cfg: &mut ExperimentConfig, args: &ConsensusArgs) {
    if let Some(v) = args.variant {
        cfg.consensus.variant = v.into();
    }
    if let Some(p) = args.trim {
        cfg.consensus.trim = p;
    }
}

fn apply_attack(cfg: &mut ExperimentConfig, args: &AttackArgs) {
    if args.byzantines.is_none() && args.mu_x.is_none() && args.sigma_x2.is_none() {
        return;
    }
    let attack = cfg.attack.get_or_insert_with(AttackSection::default);
    if let Some(n) = args.byzantines {
        attack.n_byzantine = n;
        attack.byzantine_ids = None;
    }
    if let Some(mu) = args.mu_x {
        attack.mu_x = mu;
    }
    if let Some(s2) = args.sigma_x2 {
        attack.sigma_x2 = s2;
    }
}

fn resolve_config(cli: &Cli) -> Result<ExperimentConfig, ExperimentError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    } else if let Ok(raw) = std::env::var("LOD_SEED") {
        cfg.master_seed = raw
            .trim()
            .parse()
            .map_err(|_| ExperimentError::Config(format!("LOD_SEED is not a u64: {raw:?}")))?;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(trials) = cli.trials {
        cfg.n_trials = trials;
    }
    Ok(cfg)
}

fn print_summary(report: &ExperimentReport, cfg: &ExperimentConfig) {
    match &report.summary {
        Summary::Convergence(s) => println!(
            "{}: N={} oracle={:.6} T*={} final max deviation={:.3e}",
            s.variant,
            s.n_nodes,
            s.oracle,
            s.t_star.map_or("none".into(), |t| t.to_string()),
            s.final_max_deviation
        ),
        Summary::Roc(s) => {
            for e in &s.entries {
                println!("{:<12} I_s={:<6} AUC={:.4}", e.detector, e.intensity, e.auc);
            }
        }
        Summary::Scaling(s) => {
            for r in &s.rows {
                println!(
                    "N={:<4} mean T*={} mean T*/N={} converged {}/{}",
                    r.n,
                    r.mean_t_star.map_or("none".into(), |v| format!("{v:.2}")),
                    r.mean_rel_rate.map_or("none".into(), |v| format!("{v:.3}")),
                    r.converged,
                    r.trials
                );
            }
        }
        Summary::Overhead(s) => println!(
            "pairs={} vanilla T*/N={:?} robust T*/N={:?} relative overhead={:?}",
            s.n_pairs, s.mean_rate_vanilla, s.mean_rate_robust, s.relative_overhead
        ),
    }
    println!(
        "trials={} seed={} wrote {} file(s) to {}",
        cfg.n_trials,
        cfg.master_seed,
        report.files.len(),
        cfg.output_dir.display()
    );
}

fn run(cli: Cli) -> Result<(), ExperimentError> {
    let mut cfg = resolve_config(&cli)?;
    match &cli.command {
        Command::Converge { consensus, attack } => {
            apply_consensus(&mut cfg, consensus);
            apply_attack(&mut cfg, attack);
            let report = run_convergence_demo(&cfg)?;
            print_summary(&report, &cfg);
        }
        Command::Roc {
            intensities,
            variants,
            redraw_geometry,
            trim,
            attack,
        } => {
            if let Some(list) = intensities {
                cfg.roc.intensities = list.clone();
            }
            if let Some(list) = variants {
                cfg.roc.variants = list.iter().map(|&v| v.into()).collect();
            }
            if *redraw_geometry {
                cfg.roc.redraw_geometry = true;
            }
            if let Some(p) = trim {
                cfg.consensus.trim = *p;
            }
            apply_attack(&mut cfg, attack);
            let variants: Vec<_> = cfg
                .roc
                .variants
                .iter()
                .map(|&v| cfg.consensus.resolve(v))
                .collect();
            let report = run_roc_experiment(&cfg, &cfg.roc.intensities, &variants)?;
            print_summary(&report, &cfg);
        }
        Command::Scaling { n_values, consensus } => {
            if let Some(list) = n_values {
                cfg.scaling.n_values = list.clone();
            }
            apply_consensus(&mut cfg, consensus);
            let report = run_scaling_experiment(&cfg, &cfg.scaling.n_values)?;
            print_summary(&report, &cfg);
        }
        Command::Overhead { trim } => {
            if let Some(p) = trim {
                cfg.consensus.trim = *p;
            }
            cfg.attack = None;
            let report = run_overhead_experiment(&cfg)?;
            print_summary(&report, &cfg);
        }
        Command::TopologyGen => {
            let (topology, path) = run_topology_gen(&cfg)?;
            println!(
                "N={} edges={} degrees={:?} -> {}",
                topology.n_nodes(),
                topology.n_edges(),
                topology.degrees(),
                path.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lodsim: error: {e}");
            ExitCode::FAILURE
        }
    }
}
