use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lod_consensus::consensus::{broadcast_round, init_states, vanilla_step, NodeState};
use lod_consensus::topology::generate;
use lod_consensus::{
    consensus_oracle, gamma_p, run_consensus, AttackConfig, ConsensusConfig, NodePosition,
    Topology, TopologyConfig, Variant,
};

fn trimmed_sum(values: &[f64], p: usize) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let middle = &v[p..v.len() - p];
    values.len() as f64 * middle.iter().sum::<f64>() / middle.len() as f64
}

fn values_and_trim() -> impl Strategy<Value = (Vec<f64>, usize)> {
    prop::collection::vec(-1e3f64..1e3, 1..25).prop_flat_map(|v| {
        let max_p = (v.len() - 1) / 2;
        (Just(v), 0..=max_p)
    })
}

fn random_topology(seed: u64, n: usize, min_degree: usize) -> Topology {
    generate(
        &TopologyConfig {
            n_nodes: n,
            min_degree,
            max_retries: 100_000,
            ..TopologyConfig::default()
        },
        &mut ChaCha8Rng::seed_from_u64(seed),
    )
    .unwrap()
}

fn config(variant: Variant, max_iters: usize) -> ConsensusConfig {
    ConsensusConfig {
        max_iters,
        variant,
        ..ConsensusConfig::default()
    }
}

proptest! {
    #[test]
    fn gamma_is_size_times_trimmed_mean((values, p) in values_and_trim()) {
        let g = gamma_p(&values, p).unwrap();
        let scale = values.iter().map(|v| v.abs()).sum::<f64>().max(1.0);
        prop_assert!((g - trimmed_sum(&values, p)).abs() <= 1e-12 * scale);
    }

    #[test]
    fn gamma_zero_is_the_plain_sum(values in prop::collection::vec(-1e3f64..1e3, 1..25)) {
        prop_assert_eq!(gamma_p(&values, 0).unwrap(), values.iter().sum::<f64>());
    }

    #[test]
    fn gamma_ignores_order((values, p) in values_and_trim(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let mut shuffled = values.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let scale = values.iter().map(|v| v.abs()).sum::<f64>().max(1.0);
        prop_assert!((gamma_p(&shuffled, p).unwrap() - gamma_p(&values, p).unwrap()).abs() <= 1e-12 * scale);
    }

    #[test]
    fn gamma_influence_is_bounded(
        (values, p) in values_and_trim(),
        seed in any::<u64>(),
        big in prop::sample::select(vec![1e12, 1e300, f64::INFINITY]),
    ) {
        prop_assume!(p > 0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let touched: BTreeSet<usize> = (0..rng.random_range(1..=p))
            .map(|_| rng.random_range(0..values.len()))
            .collect();
        let mut attacked = values.clone();
        for &i in &touched {
            attacked[i] = if rng.random_bool(0.5) { big } else { -big };
        }
        let clean: Vec<f64> = (0..values.len()).filter(|i| !touched.contains(i)).map(|i| values[i]).collect();
        let lo = clean.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = clean.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let d = values.len() as f64;
        let out = gamma_p(&attacked, p).unwrap();
        let slack = 1e-9 * d * lo.abs().max(hi.abs()).max(1.0);
        prop_assert!(out >= d * lo - slack && out <= d * hi + slack, "{out} not in [{}, {}]", d * lo, d * hi);
    }

    #[test]
    fn robust_p0_is_bitwise_vanilla(seed in any::<u64>(), n in 2usize..12) {
        let topology = random_topology(seed, n, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let f: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..4.0)).collect();
        let a = run_consensus(&f, &topology, &config(Variant::Vanilla, 60), None, &mut rng.clone()).unwrap();
        let b = run_consensus(&f, &topology, &config(Variant::Robust { p: 0 }, 60), None, &mut rng).unwrap();
        for (ra, rb) in a.states.iter().zip(&b.states) {
            for (x, y) in ra.iter().zip(rb) {
                prop_assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn vanilla_fixed_point_is_the_mean(seed in any::<u64>(), n in 2usize..11) {
        let topology = random_topology(seed, n, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 2);
        let f: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..4.0)).collect();
        let mean = f.iter().sum::<f64>() / n as f64;
        let trace = run_consensus(&f, &topology, &config(Variant::Vanilla, 500), None, &mut rng).unwrap();
        for x in trace.final_states() {
            prop_assert!((x - mean).abs() <= 1e-8 * mean.abs().max(1.0));
        }
    }
}

#[test]
fn consensus_with_consistent_duals_is_a_fixed_point() {
    let topology = random_topology(21, 10, 0);
    let f: Vec<f64> = (0..10).map(|i| (i as f64 * 0.37).sin() * 2.0).collect();
    let mean = f.iter().sum::<f64>() / 10.0;
    let mut states: Vec<NodeState> = f
        .iter()
        .map(|&f_local| NodeState {
            x: mean,
            alpha: f_local - mean,
            f_local,
        })
        .collect();
    let mut aggregates: Vec<f64> = topology.degrees().iter().map(|&d| d as f64 * mean).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    vanilla_step(&mut states, &topology, &mut aggregates, 1.0, None, &mut rng).unwrap();
    for s in &states {
        assert!((s.x - mean).abs() < 1e-12);
    }
}

#[test]
fn two_nodes_reach_the_average() {
    let topology = Topology::complete(vec![NodePosition::new(0.0, 0.0), NodePosition::new(1.0, 0.0)]);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let trace = run_consensus(&[1.0, 3.0], &topology, &config(Variant::Vanilla, 60), None, &mut rng).unwrap();
    assert_eq!(consensus_oracle(&[1.0, 3.0]).unwrap(), 2.0);
    for x in trace.final_states() {
        assert!((x - 2.0).abs() < 1e-6, "{x}");
    }
}

/// After a 20-iteration burn-in the worst deviation over each 10-iteration
/// window never exceeds the one over the previous window.
#[test]
fn vanilla_deviation_never_grows_late() {
    for seed in 0..50 {
        let topology = random_topology(seed, 10, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        let f: Vec<f64> = (0..10).map(|_| rng.random_range(-0.5..3.0)).collect();
        let mean = f.iter().sum::<f64>() / 10.0;
        let trace = run_consensus(&f, &topology, &config(Variant::Vanilla, 200), None, &mut rng).unwrap();
        let window = |k: usize| {
            (k..k + 10)
                .map(|j| trace.max_honest_deviation(j, mean))
                .fold(0.0, f64::max)
        };
        for k in 20..=trace.iterations() - 19 {
            let (now, later) = (window(k), window(k + 10));
            assert!(later <= now + 1e-12, "seed {seed}: window at {k} {now} -> {later}");
        }
    }
}

#[test]
fn robust_stays_bounded_under_huge_falsification() {
    let positions = (0..10).map(|i| NodePosition::new(i as f64 * 0.1, 0.0)).collect();
    let topology = Topology::complete(positions);
    let f: Vec<f64> = (0..10).map(|i| 0.1 * i as f64).collect();
    let attack = AttackConfig {
        byzantine_ids: BTreeSet::from([4]),
        mu_x: 1e6,
        sigma_x2: 0.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let trace = run_consensus(&f, &topology, &config(Variant::Robust { p: 1 }, 200), Some(&attack), &mut rng)
        .unwrap();
    let (lo, hi) = (0.0, 0.9);
    for row in &trace.states {
        for i in trace.honest_nodes() {
            assert!(row[i] > lo - 1.0 && row[i] < hi + 1.0, "node {i} escaped: {}", row[i]);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let vanilla = run_consensus(&f, &topology, &config(Variant::Vanilla, 200), Some(&attack), &mut rng).unwrap();
    let mean = f.iter().sum::<f64>() / 10.0;
    assert!(vanilla.max_honest_deviation(200, mean) > 1e3);
}

#[test]
fn falsified_offsets_have_the_configured_mean() {
    let states = init_states(&[0.0, 1.0, 2.0]).unwrap();
    let attack = AttackConfig {
        byzantine_ids: BTreeSet::from([1]),
        mu_x: 2.5,
        sigma_x2: 0.1,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 100_000;
    let mut sum = 0.0;
    for _ in 0..n {
        let announced = broadcast_round(&states, Some(&attack), &mut rng);
        assert_eq!(announced[0], 0.0);
        assert_eq!(announced[2], 2.0);
        sum += announced[1] - 1.0;
    }
    let mean = sum / n as f64;
    assert!((mean - 2.5).abs() < 3.0 * (0.1 / n as f64).sqrt(), "{mean}");
}

#[test]
fn oracle_matches_least_squares_grid_scan() {
    let f = [0.3, -1.2, 2.5, 0.9, 4.1];
    let cost = |x: f64| f.iter().map(|v| (x - v).powi(2)).sum::<f64>();
    let best = (0..=200_000)
        .map(|i| -3.0 + i as f64 * 1e-4 * 0.5)
        .min_by(|a, b| cost(*a).total_cmp(&cost(*b)))
        .unwrap();
    assert!((consensus_oracle(&f).unwrap() - best).abs() <= 1e-4);
}

#[test]
fn robust_attack_free_settles_near_the_mean() {
    let mut within = 0;
    let trials = 100;
    for seed in 0..trials {
        let topology = random_topology(seed, 10, 3);
        let params = lod_consensus::ScenarioParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000);
        let obs = lod_consensus::model::sample_observations(
            lod_consensus::Hypothesis::H1,
            topology.positions(),
            &params,
            &mut rng,
        );
        let f: Vec<f64> = obs
            .iter()
            .map(|o| lod_consensus::model::local_lod_statistic(o.value, &params))
            .collect();
        let mean = f.iter().sum::<f64>() / f.len() as f64;
        let trace = run_consensus(&f, &topology, &config(Variant::Robust { p: 1 }, 300), None, &mut rng).unwrap();
        if trace.max_honest_deviation(300, mean) <= 0.05 * mean.abs() {
            within += 1;
        }
    }
    assert!(within == trials, "{within}/{trials} robust runs settle within 5% of the mean");
}
