//! Seeded Monte Carlo replay of the learning process on finite graphs.
//!
//! Agents never compute posteriors here: Bayesian agents replay decision
//! tables produced by the cavity engine, majority agents count votes.
//! Every random draw comes from a ChaCha8 stream selected by the sample
//! index, at a word position determined by the draw site (the state, a
//! node's signal, or a node's tie-break in some round), so results do not
//! depend on how samples are scheduled across threads.

use std::collections::{HashMap, VecDeque};
use std::fmt::Write as _;

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use smallvec::SmallVec;

use crate::cavity::{CavityEngine, DecisionTable};
use crate::error::{Error, Result};
use crate::model::{signal_posterior, Decider, SignalModel};
use crate::num::Real;
use crate::trees::TreeGraph;

/// Samples per parallel work item.
const BATCH: u64 = 1 << 12;

/// Distribution over actions.
pub type ActionDraw<T> = SmallVec<[(usize, T); 2]>;

/// How an agent picks its round-`round` action.
pub trait Policy<T: Real>: Sync {
    fn name(&self) -> &str;

    fn num_actions(&self) -> usize;

    /// `observed[k]` is the trajectory code (round 0 least significant)
    /// through `round - 1` of `graph.observed(node)[k]`.
    fn act(&self, node: usize, round: usize, signal: usize, observed: &[u64]) -> Result<ActionDraw<T>>;

    /// Last round the policy can play, if bounded.
    fn horizon(&self) -> Option<usize> {
        None
    }
}

/// Replays cavity-engine decision tables.
pub struct TablePolicy<'a, T: Real> {
    tables: Vec<Vec<&'a DecisionTable<T>>>,
    /// Table per graph node; `None` for nodes the engine does not cover.
    class: Vec<Option<usize>>,
    /// Position in `graph.observed(node)` of each table input slot.
    slots: Vec<Vec<usize>>,
    actions: usize,
}

impl<'a, T: Real> TablePolicy<'a, T> {
    /// Tables of `engine`, which must describe `graph` (finite topology) or
    /// be homogeneous, in which case every node uses the single class.
    pub fn new(engine: &'a CavityEngine<T>, graph: &TreeGraph) -> Result<Self> {
        if engine.config().activation.is_some() {
            return Err(Error::InvalidModel("simulation does not model inactive edges".into()));
        }
        let topology = engine.topology();
        let n = graph.n();
        let mut class = vec![None; n];
        let mut slots = vec![Vec::new(); n];
        if topology.homogeneous {
            if topology.nodes.len() != 1 {
                return Err(Error::InvalidModel(
                    "homogeneous tables with several degree classes cannot be assigned to nodes".into(),
                ));
            }
            for i in 0..n {
                class[i] = Some(0);
                slots[i] = (0..graph.observed(i).len()).collect();
            }
        } else {
            for i in 0..n {
                let Some(k) = topology.class_of(i) else { continue };
                let observed = graph.observed(i);
                let mut order = Vec::with_capacity(observed.len());
                for &m in &topology.nodes[k].inputs {
                    let sender = topology.edges[m]
                        .map(|(j, _)| j)
                        .ok_or_else(|| Error::MissingEntry(format!("input of node {i} is not a graph edge")))?;
                    let pos = observed
                        .iter()
                        .position(|&j| j == sender)
                        .ok_or_else(|| Error::MissingEntry(format!("node {i} does not observe {sender}")))?;
                    order.push(pos);
                }
                class[i] = Some(k);
                slots[i] = order;
            }
        }
        let tables = (0..=engine.horizon())
            .map(|t| {
                (0..topology.nodes.len())
                    .map(|k| engine.decision_table(t, k).expect("computed horizon"))
                    .collect()
            })
            .collect();
        Ok(Self {
            tables,
            class,
            slots,
            actions: engine.decider().num_actions(),
        })
    }
}

impl<T: Real> Policy<T> for TablePolicy<'_, T> {
    fn name(&self) -> &str {
        "tables"
    }

    fn num_actions(&self) -> usize {
        self.actions
    }

    fn horizon(&self) -> Option<usize> {
        Some(self.tables.len() - 1)
    }

    fn act(&self, node: usize, round: usize, signal: usize, observed: &[u64]) -> Result<ActionDraw<T>> {
        let k = self.class[node].ok_or_else(|| Error::MissingEntry(format!("no table for node {node}")))?;
        let table = self.tables.get(round).ok_or(Error::BeyondHorizon {
            requested: round,
            available: self.tables.len() - 1,
        })?[k];
        let slots = &self.slots[node];
        if slots.len() != table.degree || observed.len() != table.degree {
            return Err(Error::MissingEntry(format!(
                "node {node} observes {} neighbors, its table expects {}",
                observed.len(),
                table.degree
            )));
        }
        if signal >= table.signals {
            return Err(Error::SignalOutOfRange {
                signal,
                signals: table.signals,
            });
        }
        let inputs: SmallVec<[u64; 8]> = slots.iter().map(|&p| observed[p]).collect();
        let last = (self.actions as u32).pow(round as u32);
        Ok(table
            .outcomes(table.index(signal, &inputs))
            .into_iter()
            .map(|(code, p)| ((code / last) as usize % self.actions, p))
            .collect())
    }
}

/// Majority dynamics: round 0 plays the MAP action of the own signal, later
/// rounds the plurality of the neighbors' previous votes.
pub struct MajorityPolicy<'a, T: Real> {
    model: &'a SignalModel<T>,
    decider: &'a Decider<T>,
}

impl<'a, T: Real> MajorityPolicy<'a, T> {
    pub fn new(model: &'a SignalModel<T>, decider: &'a Decider<T>) -> Self {
        Self { model, decider }
    }
}

impl<T: Real> Policy<T> for MajorityPolicy<'_, T> {
    fn name(&self) -> &str {
        "majority"
    }

    fn num_actions(&self) -> usize {
        self.decider.num_actions()
    }

    fn act(&self, _node: usize, round: usize, signal: usize, observed: &[u64]) -> Result<ActionDraw<T>> {
        let kernel = if round == 0 {
            self.decider.decide(&signal_posterior(self.model, signal)?, signal)?
        } else {
            let a = self.decider.num_actions() as u64;
            let place = a.pow(round as u32 - 1);
            self.decider
                .majority(observed.iter().map(|&c| Some((c / place % a) as usize)), signal)?
        };
        Ok(kernel.support())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimConfig {
    pub rounds: usize,
    pub samples: u64,
    pub seed: u64,
    /// Simulate only what this node's actions through `rounds` depend on.
    pub focus: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub node: usize,
    pub round: usize,
    pub errors: u64,
    pub samples: u64,
}

impl Tally {
    pub fn rate(&self) -> f64 {
        self.errors as f64 / self.samples as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub seed: u64,
    pub samples: u64,
    pub rounds: usize,
    pub focus: Option<usize>,
    pub graph: String,
    pub rule: String,
    pub model_hash: String,
    /// Sorted by node, then round.
    pub tallies: Vec<Tally>,
}

impl RunResult {
    pub fn tally(&self, node: usize, round: usize) -> Option<&Tally> {
        self.tallies
            .binary_search_by_key(&(node, round), |t| (t.node, t.round))
            .ok()
            .map(|k| &self.tallies[k])
    }

    pub fn rate(&self, node: usize, round: usize) -> Option<f64> {
        self.tally(node, round).map(Tally::rate)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("node,round,errors,samples\n");
        for t in &self.tallies {
            let _ = writeln!(out, "{},{},{},{}", t.node, t.round, t.errors, t.samples);
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// `sqrt(p (1 - p) / n)`.
pub fn standard_error(p: f64, n: u64) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

pub fn describe_graph(graph: &TreeGraph) -> String {
    format!(
        "n={} edges={} directed={} hubs={}",
        graph.n(),
        graph.edges().len(),
        graph.directed_edges().len(),
        graph.hubs().len()
    )
}

/// SHA-256 of the model parameters in a fixed textual form.
pub fn model_hash<T: Real>(model: &SignalModel<T>) -> String {
    let mut text = String::from("prior");
    for p in model.prior() {
        let _ = write!(text, " {:.17e}", p.as_f64());
    }
    for row in model.likelihood_rows() {
        text.push_str("\nrow");
        for p in row {
            let _ = write!(text, " {:.17e}", p.as_f64());
        }
    }
    Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Draw sites within one sample's stream.
struct Sites {
    nodes: u64,
    rounds: u64,
}

impl Sites {
    const STATE: u64 = 0;

    fn signal(&self, local: usize) -> u64 {
        1 + local as u64
    }

    fn tie(&self, local: usize, round: usize) -> u64 {
        1 + self.nodes + local as u64 * (self.rounds + 1) + round as u64
    }
}

fn uniform(rng: &mut ChaCha8Rng, site: u64) -> f64 {
    // two 32-bit words per site
    rng.set_word_pos(site as u128 * 2);
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn categorical(u: f64, weights: impl IntoIterator<Item = f64>) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (k, w) in weights.into_iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        acc += w;
        last = k;
        if u < acc {
            return k;
        }
    }
    last
}

fn distances(graph: &TreeGraph, root: usize, radius: usize) -> HashMap<usize, usize> {
    let mut dist = HashMap::from([(root, 0)]);
    let mut queue = VecDeque::from([root]);
    while let Some(u) = queue.pop_front() {
        if dist[&u] == radius {
            continue;
        }
        for &v in graph.neighbors(u) {
            if !dist.contains_key(&v) {
                dist.insert(v, dist[&u] + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}

/// Runs `config.samples` independent realizations: draw the state from the
/// prior, signals i.i.d. given it, then play `config.rounds + 1` synchronous
/// rounds. Errors (action index differing from the state) are tallied per
/// node and round.
pub fn simulate<T: Real, P: Policy<T>>(
    graph: &TreeGraph,
    model: &SignalModel<T>,
    policy: &P,
    config: SimConfig,
) -> Result<RunResult> {
    if config.samples == 0 {
        return Err(Error::InvalidModel("simulation needs at least one sample".into()));
    }
    let actions = policy.num_actions();
    if actions != model.num_states() {
        return Err(Error::InvalidModel("error tallies need one action per state".into()));
    }
    if let Some(h) = policy.horizon() {
        if config.rounds > h {
            return Err(Error::BeyondHorizon {
                requested: config.rounds,
                available: h,
            });
        }
    }
    // simulated nodes and the last round each one plays
    let (nodes, last_round): (Vec<usize>, Vec<usize>) = match config.focus {
        None => ((0..graph.n()).collect(), vec![config.rounds; graph.n()]),
        Some(f) => {
            if f >= graph.n() {
                return Err(Error::InvalidGraph(format!("focus node {f} out of range")));
            }
            let dist = distances(graph, f, config.rounds);
            let mut nodes: Vec<usize> = dist.keys().copied().collect();
            nodes.sort_unstable();
            let last = nodes.iter().map(|v| config.rounds - dist[v]).collect();
            (nodes, last)
        }
    };
    let local: HashMap<usize, usize> = nodes.iter().enumerate().map(|(k, &v)| (v, k)).collect();
    // observed neighbors in local indices; only consulted while they are live
    let observed: Vec<Vec<usize>> = nodes
        .iter()
        .map(|&v| graph.observed(v).iter().map(|j| local.get(j).copied().unwrap_or(usize::MAX)).collect())
        .collect();
    let m = nodes.len();
    let rounds = config.rounds;
    let prior: Vec<f64> = model.prior().iter().map(|p| p.as_f64()).collect();
    let signals = model.num_signals();
    let sites = Sites {
        nodes: m as u64,
        rounds: rounds as u64,
    };

    let run_batch = |batch: u64| -> Result<Vec<u64>> {
        let mut errors = vec![0u64; m * (rounds + 1)];
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut codes = vec![0u64; m];
        let mut next = vec![0u64; m];
        let mut x = vec![0usize; m];
        let mut obs: Vec<u64> = Vec::new();
        let start = batch * BATCH;
        for sample in start..(start + BATCH).min(config.samples) {
            rng.set_stream(sample);
            let s = categorical(uniform(&mut rng, Sites::STATE), prior.iter().copied());
            for (k, xk) in x.iter_mut().enumerate() {
                let u = uniform(&mut rng, sites.signal(k));
                *xk = categorical(u, (0..signals).map(|y| model.likelihood(y, s).as_f64()));
            }
            codes.iter_mut().for_each(|c| *c = 0);
            let mut place = 1u64;
            for t in 0..=rounds {
                for k in 0..m {
                    if last_round[k] < t {
                        continue;
                    }
                    obs.clear();
                    for &j in &observed[k] {
                        if j == usize::MAX && t > 0 {
                            return Err(Error::MissingEntry(format!(
                                "node {} depends on a node outside the simulated ball",
                                nodes[k]
                            )));
                        }
                        obs.push(if j == usize::MAX { 0 } else { codes[j] });
                    }
                    let draw = policy.act(nodes[k], t, x[k], &obs)?;
                    let action = match draw.as_slice() {
                        [(a, _)] => *a,
                        outcomes => {
                            let u = uniform(&mut rng, sites.tie(k, t));
                            outcomes[categorical(u, outcomes.iter().map(|(_, p)| p.as_f64()))].0
                        }
                    };
                    if action != s {
                        errors[k * (rounds + 1) + t] += 1;
                    }
                    next[k] = codes[k] + action as u64 * place;
                }
                std::mem::swap(&mut codes, &mut next);
                // nodes that did not play keep their previous code
                for k in 0..m {
                    if last_round[k] < t {
                        codes[k] = next[k];
                    }
                }
                place *= actions as u64;
            }
        }
        Ok(errors)
    };

    let batches = config.samples.div_ceil(BATCH);
    let errors = (0..batches)
        .into_par_iter()
        .map(run_batch)
        .try_reduce(
            || vec![0u64; m * (rounds + 1)],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                Ok(a)
            },
        )?;

    let mut tallies: Vec<Tally> = Vec::new();
    for (k, &v) in nodes.iter().enumerate() {
        for t in 0..=last_round[k] {
            tallies.push(Tally {
                node: v,
                round: t,
                errors: errors[k * (rounds + 1) + t],
                samples: config.samples,
            });
        }
    }
    Ok(RunResult {
        seed: config.seed,
        samples: config.samples,
        rounds,
        focus: config.focus,
        graph: describe_graph(graph),
        rule: policy.name().to_string(),
        model_hash: model_hash(model),
        tallies,
    })
}

/// Nodes whose radius-`t` ball is isomorphic to the depth-`t` ball of the
/// `d`-regular tree, with `d` the maximum degree of `graph`.
pub fn interior_nodes(graph: &TreeGraph, t: usize) -> Vec<usize> {
    interior_nodes_of_degree(graph, graph.max_degree(), t)
}

pub fn interior_nodes_of_degree(graph: &TreeGraph, d: usize, t: usize) -> Vec<usize> {
    (0..graph.n()).filter(|&i| regular_ball(graph, i, d, t)).collect()
}

fn regular_ball(graph: &TreeGraph, i: usize, d: usize, t: usize) -> bool {
    let mut dist = HashMap::from([(i, 0usize)]);
    let mut parent = HashMap::from([(i, usize::MAX)]);
    let mut queue = VecDeque::from([i]);
    while let Some(u) = queue.pop_front() {
        let du = dist[&u];
        if du == t {
            // edges between boundary nodes would close a cycle in the ball
            if graph.neighbors(u).iter().any(|v| dist.get(v) == Some(&t)) {
                return false;
            }
            continue;
        }
        if graph.degree(u) != d {
            return false;
        }
        for &v in graph.neighbors(u) {
            if v == parent[&u] {
                continue;
            }
            if dist.contains_key(&v) {
                return false;
            }
            dist.insert(v, du + 1);
            parent.insert(v, u);
            queue.push_back(v);
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{TieBreakRule, UpdateRule};

    fn setup(noise: f64) -> (SignalModel<f64>, Decider<f64>) {
        let m = SignalModel::binary_symmetric(noise).unwrap();
        let d = Decider::identity(&m, TieBreakRule::OwnSignal).unwrap();
        (m, d)
    }

    #[test]
    fn repeated_runs_are_identical() {
        let (m, d) = setup(0.3);
        let g = TreeGraph::regular_tree(3, 3);
        let policy = MajorityPolicy::new(&m, &d);
        for samples in [1, 5000] {
            let config = SimConfig {
                rounds: 2,
                samples,
                seed: 9,
                focus: None,
            };
            let a = simulate(&g, &m, &policy, config).unwrap();
            let b = simulate(&g, &m, &policy, config).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.to_csv(), b.to_csv());
        }
    }

    #[test]
    fn seeds_change_results() {
        let (m, d) = setup(0.3);
        let g = TreeGraph::path(5);
        let policy = MajorityPolicy::new(&m, &d);
        let run = |seed| {
            simulate(
                &g,
                &m,
                &policy,
                SimConfig {
                    rounds: 1,
                    samples: 2000,
                    seed,
                    focus: None,
                },
            )
            .unwrap()
        };
        assert_ne!(run(1).tallies, run(2).tallies);
    }

    #[test]
    fn round_zero_rate_is_noise() {
        let (m, d) = setup(0.3);
        let g = TreeGraph::path(3);
        let r = simulate(
            &g,
            &m,
            &MajorityPolicy::new(&m, &d),
            SimConfig {
                rounds: 0,
                samples: 200_000,
                seed: 3,
                focus: None,
            },
        )
        .unwrap();
        for i in 0..3 {
            let p = r.rate(i, 0).unwrap();
            assert!((p - 0.3).abs() < 4.0 * standard_error(0.3, 200_000), "{p}");
        }
    }

    #[test]
    fn focus_matches_full_simulation_on_center() {
        let (m, d) = setup(0.2);
        let g = TreeGraph::regular_tree(3, 4);
        let policy = MajorityPolicy::new(&m, &d);
        let config = SimConfig {
            rounds: 2,
            samples: 50_000,
            seed: 5,
            focus: Some(0),
        };
        let focused = simulate(&g, &m, &policy, config).unwrap();
        assert_eq!(focused.tallies.iter().filter(|t| t.node == 0).count(), 3);
        assert!(focused.tally(4, 2).is_none());
        let p = focused.rate(0, 2).unwrap();
        let full = simulate(&g, &m, &policy, SimConfig { focus: None, ..config }).unwrap();
        let q = full.rate(0, 2).unwrap();
        assert!((p - q).abs() < 6.0 * standard_error(q, 50_000));
    }

    #[test]
    fn table_policy_matches_engine_on_path() {
        let (m, d) = setup(0.2);
        let g = TreeGraph::path(4);
        let mut engine = CavityEngine::finite(&g, m.clone(), d, UpdateRule::Bayesian).unwrap();
        engine.advance_to(2).unwrap();
        let policy = TablePolicy::new(&engine, &g).unwrap();
        let r = simulate(
            &g,
            &m,
            &policy,
            SimConfig {
                rounds: 2,
                samples: 200_000,
                seed: 11,
                focus: None,
            },
        )
        .unwrap();
        for i in 0..4 {
            let k = engine.topology().class_of(i).unwrap();
            for t in 0..=2 {
                let exact = engine.error_probability(k, t).unwrap();
                let p = r.rate(i, t).unwrap();
                assert!(
                    (p - exact).abs() <= 4.0 * standard_error(exact, 200_000),
                    "node {i} round {t}: {p} vs {exact}"
                );
            }
        }
        assert!(matches!(
            simulate(
                &g,
                &m,
                &policy,
                SimConfig {
                    rounds: 3,
                    samples: 1,
                    seed: 0,
                    focus: None
                }
            ),
            Err(Error::BeyondHorizon { .. })
        ));
    }

    #[test]
    fn homogeneous_tables_reject_boundary_nodes() {
        let (m, d) = setup(0.2);
        let g = TreeGraph::regular_tree(3, 2);
        let mut engine = CavityEngine::regular(3, m.clone(), d, UpdateRule::Bayesian).unwrap();
        engine.advance_to(1).unwrap();
        let policy = TablePolicy::new(&engine, &g).unwrap();
        let config = SimConfig {
            rounds: 1,
            samples: 10,
            seed: 0,
            focus: None,
        };
        assert!(matches!(simulate(&g, &m, &policy, config), Err(Error::MissingEntry(_))));
        let focused = simulate(&g, &m, &policy, SimConfig { focus: Some(0), ..config }).unwrap();
        assert_eq!(focused.tally(0, 1).unwrap().samples, 10);
    }

    #[test]
    fn interior_node_examples() {
        let g = TreeGraph::regular_tree(3, 5);
        let dist = distances(&g, 0, 5);
        let interior = interior_nodes(&g, 2);
        let expected: Vec<usize> = (0..g.n()).filter(|v| dist[v] <= 3).collect();
        assert_eq!(interior, expected);
        assert_eq!(interior_nodes(&g, 0), (0..g.n()).collect::<Vec<_>>());
        // a 4-cycle with pendant edges: the cycle shows up in radius-2 balls
        let c = TreeGraph::new(4, &[(0, 1), (1, 2), (2, 3), (3, 0)], &[], &[]).unwrap();
        assert_eq!(interior_nodes(&c, 1), vec![0, 1, 2, 3]);
        assert!(interior_nodes(&c, 2).is_empty());
    }

    #[test]
    fn csv_and_json_shapes() {
        let (m, d) = setup(0.3);
        let g = TreeGraph::path(2);
        let r = simulate(
            &g,
            &m,
            &MajorityPolicy::new(&m, &d),
            SimConfig {
                rounds: 1,
                samples: 10,
                seed: 1,
                focus: None,
            },
        )
        .unwrap();
        let csv = r.to_csv();
        assert!(csv.starts_with("node,round,errors,samples\n"));
        assert_eq!(csv.lines().count(), 5);
        let back: RunResult = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
        assert_eq!(r.model_hash.len(), 64);
    }
}
