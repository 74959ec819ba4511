use cavity_learning::bounds::{
    binomial_tail, directed_bound_sequence, noise_threshold, undirected_bound_sequence,
};
use cavity_learning::model::{map_decision, signal_posterior, UtilityTable};
use cavity_learning::oracle::{feasible_set, oracle_error_probability, unroll, OracleConfig};
use cavity_learning::sim::{simulate, MajorityPolicy, SimConfig};
use cavity_learning::trees::{ball, directed_subtree};
use cavity_learning::verify::oracle_equivalence;
use cavity_learning::{Decider, DegreeDistribution, SignalModel, TieBreakRule, Trajectory, TreeGraph, UpdateRule};
use proptest::prelude::*;
use std::collections::{BTreeMap, BTreeSet};

/// Random labelled tree: node `k > 0` hangs below `parents[k - 1] % k`.
fn tree_from(parents: &[usize]) -> TreeGraph {
    let edges: Vec<(usize, usize)> = parents.iter().enumerate().map(|(k, &p)| (p % (k + 1), k + 1)).collect();
    TreeGraph::new(parents.len() + 1, &edges, &[], &[]).unwrap()
}

fn pascal_tail(n: usize, p: f64, k: usize) -> f64 {
    let mut law = vec![1.0f64];
    for _ in 0..n {
        let mut next = vec![0.0; law.len() + 1];
        for (j, &w) in law.iter().enumerate() {
            next[j] += w * (1.0 - p);
            next[j + 1] += w * p;
        }
        law = next;
    }
    law[k.min(law.len())..].iter().sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn trajectory_round_trip(alphabet in 2usize..=3, seq in prop::collection::vec(0usize..3, 1..=13)) {
        let seq: Vec<usize> = seq.into_iter().map(|a| a % alphabet).collect();
        let t = Trajectory::encode(&seq, alphabet).unwrap();
        prop_assert_eq!(t.decode(), seq.clone());
        prop_assert!(t.code() < (alphabet as u64).pow(seq.len() as u32));
        let h = seq.len() - 1;
        for k in 0..=h {
            prop_assert_eq!(t.prefix(k).decode(), seq[..=k].to_vec());
        }
    }

    #[test]
    fn concentrated_posterior_picks_its_state(states in 2usize..=5, k in 0usize..5) {
        let k = k % states;
        let mut post = vec![0.0f64; states];
        post[k] = 1.0;
        let kernel = map_decision(&post, &UtilityTable::identity(states), TieBreakRule::LowestIndex, 0, None).unwrap();
        prop_assert_eq!(kernel.probability(k), 1.0);
    }

    #[test]
    fn signal_posterior_commutes_with_flip(noise in 0.01f64..0.49, x in 0usize..2) {
        let m = SignalModel::binary_symmetric(noise).unwrap();
        let a = signal_posterior(&m, x).unwrap();
        let b = signal_posterior(&m, 1 - x).unwrap();
        prop_assert_eq!(a[0], b[1]);
        prop_assert_eq!(a[1], b[0]);
    }

    #[test]
    fn balls_grow_and_stay_bounded(parents in prop::collection::vec(0usize..64, 1..40), t in 0usize..5, i in 0usize..64) {
        let g = tree_from(&parents);
        let i = i % g.n();
        let inner: BTreeSet<usize> = ball(&g, i, t).into_iter().collect();
        let outer: BTreeSet<usize> = ball(&g, i, t + 1).into_iter().collect();
        prop_assert!(inner.is_subset(&outer));
        let d = g.max_degree();
        let bound: usize = 1 + (1..=t).map(|r| d * (d.max(2) - 1).pow(r as u32 - 1)).sum::<usize>();
        prop_assert!(inner.len() <= bound);
    }

    #[test]
    fn directed_subtrees_are_disjoint(parents in prop::collection::vec(0usize..64, 1..30), i in 0usize..64) {
        let g = tree_from(&parents);
        let i = i % g.n();
        let mut seen = BTreeSet::new();
        let mut total = 1;
        for &j in g.neighbors(i) {
            let sub = directed_subtree(&g, j, i).unwrap();
            total += sub.nodes.len();
            for v in sub.nodes {
                prop_assert!(seen.insert(v));
            }
        }
        prop_assert_eq!(total, g.n());
    }

    #[test]
    fn edge_perspective_is_a_law(degrees in prop::collection::btree_map(1usize..10, 0.01f64..1.0, 1..5)) {
        let total: f64 = degrees.values().sum();
        let rho = DegreeDistribution::new(degrees.keys().copied().collect(), degrees.values().map(|p| p / total).collect()).unwrap();
        let e = rho.edge_perspective().unwrap();
        prop_assert!((e.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let mean = rho.mean();
        for &d in rho.support() {
            prop_assert!((e.prob(d) - d as f64 * rho.prob(d) / mean).abs() < 1e-12);
        }
    }

    #[test]
    fn binomial_tails_match_pascal(n in 0usize..=20, k in 0usize..=21, p in 0.0f64..=1.0) {
        prop_assert!((binomial_tail(n, p, k) - pascal_tail(n, p, k)).abs() < 1e-14);
    }

    #[test]
    fn bound_sequences_are_probabilities(d in 3usize..12, delta in 0.0f64..=1.0, rounds in 0usize..8) {
        for seq in [undirected_bound_sequence(d, delta, rounds).unwrap(), directed_bound_sequence(d, delta, rounds).unwrap()] {
            prop_assert_eq!(seq.values[0], delta);
            prop_assert_eq!(seq.values.len(), rounds + 1);
            prop_assert!(seq.values.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn below_threshold_the_bound_contracts(d in 5usize..12, frac in 0.01f64..0.99) {
        let delta = frac * noise_threshold::<f64>(d).unwrap();
        let seq = undirected_bound_sequence(d, delta, 8).unwrap();
        for t in 1..8 {
            prop_assert!(seq.values[t + 1] < seq.values[t] || seq.values[t] == 0.0, "{:?}", seq.values);
        }
    }

    #[test]
    fn fair_noise_on_even_directed_trees_never_improves(half in 1usize..8, rounds in 1usize..6) {
        let seq = directed_bound_sequence(2 * half, 0.5f64, rounds).unwrap();
        prop_assert!(seq.values.iter().all(|&v| v >= 0.5));
    }

    #[test]
    fn repeated_simulation_is_identical(parents in prop::collection::vec(0usize..16, 1..8), seed in any::<u64>()) {
        let g = tree_from(&parents);
        let m = SignalModel::binary_symmetric(0.3).unwrap();
        let d = Decider::identity(&m, TieBreakRule::UniformRandom).unwrap();
        let config = SimConfig { rounds: 3, samples: 64, seed, focus: None };
        let policy = MajorityPolicy::new(&m, &d);
        let a = simulate(&g, &m, &policy, config).unwrap();
        let b = simulate(&g, &m, &policy, config).unwrap();
        prop_assert_eq!(a, b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn engine_matches_oracle_on_random_trees(
        parents in prop::collection::vec(0usize..8, 1..6),
        noise in 0.05f64..0.45,
        majority in any::<bool>(),
    ) {
        let g = tree_from(&parents);
        let m = SignalModel::binary_symmetric(noise).unwrap();
        let d = Decider::identity(&m, TieBreakRule::OwnSignal).unwrap();
        let rule = if majority { UpdateRule::Majority } else { UpdateRule::Bayesian };
        let check = oracle_equivalence("random", &g, &m, &d, &rule, 2).unwrap();
        prop_assert!(check.passed, "{}", check);
    }

    #[test]
    fn feasible_sets_partition_own_signal_worlds(
        parents in prop::collection::vec(0usize..8, 1..5),
        noise in 0.05f64..0.45,
        t in 0usize..3,
    ) {
        let g = tree_from(&parents);
        let m = SignalModel::binary_symmetric(noise).unwrap();
        let d = Decider::identity(&m, TieBreakRule::OwnSignal).unwrap();
        let tensor = unroll(&g, &m, &d, &[UpdateRule::Bayesian], t, OracleConfig::default()).unwrap();
        for i in 0..g.n() {
            for x in 0..2 {
                let mut groups: BTreeMap<Vec<u64>, Vec<usize>> = BTreeMap::new();
                for w in (0..tensor.world_count()).filter(|&w| tensor.signal(i, w) == x) {
                    let key = tensor.observation(i, w, t).iter().map(Trajectory::code).collect();
                    groups.entry(key).or_default().push(w);
                }
                let mut covered = 0;
                for worlds in groups.values() {
                    let observed = tensor.observation(i, worlds[0], t);
                    let feasible = feasible_set(&tensor, i, x, &observed).unwrap();
                    prop_assert_eq!(&feasible, worlds);
                    covered += feasible.len();
                }
                prop_assert_eq!(covered, tensor.world_count() / 2);
            }
        }
    }

    #[test]
    fn oracle_is_relabeling_equivariant(parents in prop::collection::vec(0usize..8, 1..5), shift in 1usize..6) {
        let g = tree_from(&parents);
        let n = g.n();
        let perm: Vec<usize> = (0..n).map(|v| (v + shift) % n).collect();
        let edges: Vec<(usize, usize)> = g.edges().iter().map(|&(a, b)| (perm[a], perm[b])).collect();
        let h = TreeGraph::new(n, &edges, &[], &[]).unwrap();
        let m = SignalModel::binary_symmetric(0.2).unwrap();
        let d = Decider::identity(&m, TieBreakRule::OwnSignal).unwrap();
        let a = unroll(&g, &m, &d, &[UpdateRule::Majority], 2, OracleConfig::default()).unwrap();
        let b = unroll(&h, &m, &d, &[UpdateRule::Majority], 2, OracleConfig::default()).unwrap();
        for v in 0..n {
            for t in 0..=2 {
                let x = oracle_error_probability(&a, v, t).unwrap();
                let y = oracle_error_probability(&b, perm[v], t).unwrap();
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn edge_perspective_twice_differs_from_once() {
    let rho = DegreeDistribution::new(vec![2, 4], vec![0.5, 0.5]).unwrap();
    let once = rho.edge_perspective().unwrap();
    let twice = once.edge_perspective().unwrap();
    assert!((once.prob(4) - 2.0 / 3.0).abs() < 1e-12);
    assert!((twice.prob(4) - once.prob(4)).abs() > 0.1);
    let point = DegreeDistribution::point(5);
    assert_eq!(point.edge_perspective().unwrap().edge_perspective().unwrap(), point);
}

#[test]
fn exhaustive_round_trip_to_horizon_twelve() {
    for alphabet in [2usize, 3] {
        for len in 1..=13u32 {
            for code in 0..(alphabet as u64).pow(len) {
                let t = Trajectory::from_code(code, len as usize - 1, alphabet).unwrap();
                assert_eq!(Trajectory::encode(&t.decode(), alphabet).unwrap(), t);
            }
        }
    }
}
