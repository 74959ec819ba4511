//! Seeded simulation against exact error probabilities.

use cavity_learning::cavity::CavityEngine;
use cavity_learning::model::{Decider, SignalModel, TieBreakRule, UpdateRule};
use cavity_learning::sim::{
    interior_nodes, interior_nodes_of_degree, simulate, standard_error, MajorityPolicy, RunResult, SimConfig,
    TablePolicy,
};
use cavity_learning::trees::{ball, sample_configuration_graph, tree_ball_radius};
use cavity_learning::{DegreeDistribution, TreeGraph};

const SAMPLES: u64 = 1_000_000;

fn setup(noise: f64) -> (SignalModel<f64>, Decider<f64>) {
    let m = SignalModel::binary_symmetric(noise).unwrap();
    let d = Decider::identity(&m, TieBreakRule::OwnSignal).unwrap();
    (m, d)
}

fn exact(d: usize, noise: f64, rule: UpdateRule<f64>, rounds: usize) -> (CavityEngine<f64>, Vec<f64>) {
    let (m, dec) = setup(noise);
    let mut e = CavityEngine::regular(d, m, dec, rule).unwrap();
    e.advance_to(rounds).unwrap();
    let errors = (0..=rounds).map(|t| e.error_probability(0, t).unwrap()).collect();
    (e, errors)
}

fn run(graph: &TreeGraph, noise: f64, rule: &UpdateRule<f64>, engine: &CavityEngine<f64>, config: SimConfig) -> RunResult {
    let (m, dec) = setup(noise);
    match rule {
        UpdateRule::Majority => simulate(graph, &m, &MajorityPolicy::new(&m, &dec), config).unwrap(),
        _ => simulate(graph, &m, &TablePolicy::new(engine, graph).unwrap(), config).unwrap(),
    }
}

fn within(rate: f64, p: f64, n: u64) -> bool {
    (rate - p).abs() <= 4.0 * standard_error(p, n)
}

/// Within 4 standard errors of the interval of values that round to a
/// two-significant-figure `published` figure.
fn within_rounded(rate: f64, published: f64, n: u64) -> bool {
    let half_unit = 0.5 * 10f64.powf(published.log10().floor() - 1.0);
    let (lo, hi) = (published - half_unit, published + half_unit);
    let slack = 4.0 * standard_error(published, n);
    rate >= lo - slack && rate <= hi + slack
}

#[test]
fn regular_tree_centers_match_exact_values() {
    for d in [3, 5] {
        for noise in [0.15, 0.3] {
            for rule in [UpdateRule::Bayesian, UpdateRule::Majority] {
                let (engine, errors) = exact(d, noise, rule.clone(), 2);
                let graph = TreeGraph::regular_tree(d, 3);
                let config = SimConfig {
                    rounds: 2,
                    samples: SAMPLES,
                    seed: 17,
                    focus: Some(0),
                };
                let r = run(&graph, noise, &rule, &engine, config);
                for (t, &p) in errors.iter().enumerate() {
                    let rate = r.rate(0, t).unwrap();
                    assert!(within(rate, p, SAMPLES), "d={d} noise={noise} {rule:?} t={t}: {rate} vs {p}");
                }
            }
        }
    }
}

#[test]
fn published_round_one_and_two_values() {
    let (engine, _) = exact(5, 0.15, UpdateRule::Bayesian, 1);
    let config = SimConfig {
        rounds: 1,
        samples: SAMPLES,
        seed: 1,
        focus: Some(0),
    };
    let r = run(&TreeGraph::regular_tree(5, 5), 0.15, &UpdateRule::Bayesian, &engine, config);
    let rate = r.rate(0, 1).unwrap();
    assert!(within_rounded(rate, 2.7e-2, SAMPLES), "{rate}");

    let config = SimConfig { rounds: 2, ..config };
    let r = run(&TreeGraph::regular_tree(3, 6), 0.15, &UpdateRule::Majority, &engine, config);
    let rate = r.rate(0, 2).unwrap();
    assert!(within_rounded(rate, 3.0e-2, SAMPLES), "{rate}");
    let (_, majority) = exact(3, 0.15, UpdateRule::Majority, 2);
    assert!(within(rate, majority[2], SAMPLES), "{rate}");
}

#[test]
fn configuration_model_interior_nodes_look_like_the_regular_tree() {
    let sample = sample_configuration_graph(&DegreeDistribution::point(3), 2000, 8).unwrap();
    let graph = &sample.graph;
    let interior = interior_nodes(graph, 2);
    assert!(interior.len() > graph.n() / 2);
    for rule in [UpdateRule::Bayesian, UpdateRule::Majority] {
        let (engine, errors) = exact(3, 0.15, rule.clone(), 2);
        for (k, &node) in interior.iter().take(2).enumerate() {
            let config = SimConfig {
                rounds: 2,
                samples: SAMPLES,
                seed: 100 + k as u64,
                focus: Some(node),
            };
            let r = run(graph, 0.15, &rule, &engine, config);
            for (t, &p) in errors.iter().enumerate() {
                let rate = r.rate(node, t).unwrap();
                assert!(within(rate, p, SAMPLES), "{rule:?} node {node} t={t}: {rate} vs {p}");
            }
        }
    }
}

/// Isomorphism with the depth-t regular ball, checked by counting: the
/// ball is a tree with the right number of nodes at every distance.
fn regular_ball_by_counting(graph: &TreeGraph, i: usize, d: usize, t: usize) -> bool {
    if t == 0 {
        return true;
    }
    if tree_ball_radius(graph, i).is_some_and(|r| r < t) {
        return false;
    }
    let mut expected = 1;
    let mut layer = 1;
    for r in 1..=t {
        layer = if r == 1 { d } else { layer * (d - 1) };
        expected += layer;
        if ball(graph, i, r).len() != expected {
            return false;
        }
    }
    true
}

#[test]
fn interior_nodes_agree_with_counting_test() {
    let rho = DegreeDistribution::new(vec![2, 3], vec![0.3, 0.7]).unwrap();
    for seed in 0..3 {
        let sample = sample_configuration_graph(&rho, 300, seed).unwrap();
        let g = &sample.graph;
        for t in 0..=3 {
            let got = interior_nodes_of_degree(g, 3, t);
            let want: Vec<usize> = (0..g.n()).filter(|&i| regular_ball_by_counting(g, i, 3, t)).collect();
            assert_eq!(got, want, "seed {seed} t={t}");
        }
    }
}

#[test]
fn interior_error_counts_are_exchangeable() {
    // reported only: chi-square of round-2 error counts across interior nodes
    let (m, dec) = setup(0.3);
    let graph = TreeGraph::regular_tree(3, 4);
    let samples = 100_000;
    let r = simulate(
        &graph,
        &m,
        &MajorityPolicy::new(&m, &dec),
        SimConfig {
            rounds: 2,
            samples,
            seed: 4,
            focus: None,
        },
    )
    .unwrap();
    let nodes = interior_nodes(&graph, 2);
    let counts: Vec<f64> = nodes.iter().map(|&v| r.tally(v, 2).unwrap().errors as f64).collect();
    let mean = counts.iter().sum::<f64>() / counts.len() as f64;
    let chi2: f64 = counts.iter().map(|c| (c - mean).powi(2) / mean).sum();
    println!("chi-square {chi2:.2} over {} interior nodes (df {})", counts.len(), counts.len() - 1);
}

#[test]
fn majority_late_round_on_degree_three() {
    let (engine, errors) = exact(3, 0.15, UpdateRule::Majority, 7);
    let samples = 200_000;
    let config = SimConfig {
        rounds: 7,
        samples,
        seed: 23,
        focus: Some(0),
    };
    let r = run(&TreeGraph::regular_tree(3, 8), 0.15, &UpdateRule::Majority, &engine, config);
    for (t, &p) in errors.iter().enumerate() {
        let rate = r.rate(0, t).unwrap();
        assert!(within(rate, p, samples), "t={t}: {rate} vs {p}");
    }
}
