//! Brute-force ground truth: enumerate every private-signal vector (and,
//! optionally, every edge-activation pattern), simulate all agents forward
//! and compute Bayesian posteriors by summing over the feasible set.
//!
//! Exponential in the number of agents. Only meant for small instances that
//! check the cavity engine.

use std::collections::{BTreeMap, HashMap};

use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::model::{
    kernel_from_row, signal_posterior, ActionKernel, Decider, SignalModel, Trajectory, UpdateRule,
};
use crate::num::{CompensatedSum, Real};
use crate::trees::TreeGraph;

/// Default cap on `n * t_max * worlds`.
pub const DEFAULT_BUDGET: u128 = 1_000_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    /// Probability that an edge is active in a round, i.i.d. over edges and
    /// rounds. `None` means every edge is always active.
    pub activation: Option<f64>,
    pub budget: u128,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            activation: None,
            budget: DEFAULT_BUDGET,
        }
    }
}

type ObservationKey = (usize, SmallVec<[u64; 8]>);

/// Every agent's trajectory through `t_max` for every world.
///
/// A world is a signal vector plus, when activations are enabled, one bit
/// per (skeleton edge, round).
#[derive(Debug, Clone)]
pub struct TrajectoryTensor<T> {
    graph: TreeGraph,
    model: SignalModel<T>,
    t_max: usize,
    actions: usize,
    signal_worlds: usize,
    activation: Option<f64>,
    edge_index: HashMap<(usize, usize), usize>,
    /// `trajectories[i][w]`: packed own trajectory through `t_max`.
    trajectories: Vec<Vec<u64>>,
    /// `world_prob[s][w] = P(w | s)`.
    world_prob: Vec<Vec<T>>,
}

/// Simulates every agent on every world through round `t_max`.
///
/// `rules` holds one rule for all agents or one per agent. Only
/// deterministic rules are supported.
pub fn unroll<T: Real>(
    graph: &TreeGraph,
    model: &SignalModel<T>,
    decider: &Decider<T>,
    rules: &[UpdateRule<T>],
    t_max: usize,
    config: OracleConfig,
) -> Result<TrajectoryTensor<T>> {
    let n = graph.n();
    if rules.len() != 1 && rules.len() != n {
        return Err(Error::LengthMismatch(rules.len(), n));
    }
    if !decider.tie_break().is_deterministic() {
        return Err(Error::StochasticRule("random tie-break".into()));
    }
    if let Some(p) = config.activation {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::InvalidActivation(p));
        }
    }
    let signals = model.num_signals();
    let actions = decider.num_actions();
    let skeleton = graph.skeleton_edges();
    let activation_bits = if config.activation.is_some() {
        skeleton.len() * (t_max + 1)
    } else {
        0
    };
    let signal_worlds = (signals as u128).checked_pow(n as u32);
    let worlds = signal_worlds.and_then(|s| s.checked_mul(1u128 << activation_bits.min(127)));
    let needed = worlds
        .and_then(|w| w.checked_mul((n.max(1) * (t_max + 1)) as u128))
        .unwrap_or(u128::MAX);
    if needed > config.budget || activation_bits >= 64 {
        return Err(Error::BudgetExceeded {
            what: format!("oracle over {n} agents through round {t_max}"),
            needed,
            budget: config.budget,
        });
    }
    let signal_worlds = signal_worlds.unwrap() as usize;
    let worlds = worlds.unwrap() as usize;
    let edge_index = skeleton.iter().enumerate().map(|(k, &e)| (e, k)).collect();

    let mut tensor = TrajectoryTensor {
        graph: graph.clone(),
        model: model.clone(),
        t_max,
        actions,
        signal_worlds,
        activation: config.activation,
        edge_index,
        trajectories: vec![vec![0u64; worlds]; n],
        world_prob: Vec::new(),
    };
    tensor.world_prob = (0..model.num_states())
        .map(|s| (0..worlds).map(|w| tensor.world_probability(w, s)).collect())
        .collect();

    let rule_of = |i: usize| if rules.len() == 1 { &rules[0] } else { &rules[i] };
    let mut place = 1u64;
    for t in 0..=t_max {
        let mut round_votes = vec![vec![0u64; worlds]; n];
        for (i, votes) in round_votes.iter_mut().enumerate() {
            match rule_of(i) {
                UpdateRule::Bayesian if t > 0 => {
                    let posts = tensor.posteriors_at(i, t)?;
                    for (w, vote) in votes.iter_mut().enumerate() {
                        let key = tensor.key(i, w, t - 1);
                        let x = key.0;
                        *vote = pure(decider.decide(&posts[&key], x)?)? as u64;
                    }
                }
                UpdateRule::Bayesian | UpdateRule::Majority if t == 0 => {
                    for (w, vote) in votes.iter_mut().enumerate() {
                        let x = tensor.signal(i, w);
                        *vote = pure(decider.decide(&signal_posterior(model, x)?, x)?)? as u64;
                    }
                }
                UpdateRule::Majority => {
                    for (w, vote) in votes.iter_mut().enumerate() {
                        let last: SmallVec<[Option<usize>; 8]> = graph
                            .observed(i)
                            .iter()
                            .map(|&j| tensor.observed_vote(i, j, w, t - 1))
                            .collect();
                        *vote = pure(decider.majority(last, tensor.signal(i, w))?)? as u64;
                    }
                }
                UpdateRule::Custom(rule) => {
                    for (w, vote) in votes.iter_mut().enumerate() {
                        let x = tensor.signal(i, w);
                        let observed = if t == 0 {
                            Vec::new()
                        } else {
                            tensor.observation(i, w, t - 1)
                        };
                        let row = rule.kernel(t, x, &observed);
                        *vote = pure(kernel_from_row(row, actions)?)? as u64;
                    }
                }
                UpdateRule::Bayesian => unreachable!(),
            }
        }
        for (i, votes) in round_votes.into_iter().enumerate() {
            for (w, v) in votes.into_iter().enumerate() {
                tensor.trajectories[i][w] += v * place;
            }
        }
        place *= actions as u64;
    }
    Ok(tensor)
}

fn pure<T>(k: ActionKernel<T>) -> Result<usize> {
    match k {
        ActionKernel::Pure(a) => Ok(a),
        ActionKernel::Mixed(_) => Err(Error::StochasticRule("mixed action kernel".into())),
    }
}

impl<T: Real> TrajectoryTensor<T> {
    pub fn graph(&self) -> &TreeGraph {
        &self.graph
    }

    pub fn horizon(&self) -> usize {
        self.t_max
    }

    pub fn world_count(&self) -> usize {
        self.trajectories.first().map_or(self.signal_worlds, Vec::len)
    }

    /// Alphabet of observed trajectories: actions, plus the inactive marker
    /// when activations are enabled.
    pub fn observation_alphabet(&self) -> usize {
        self.actions + usize::from(self.activation.is_some())
    }

    pub fn signal(&self, i: usize, w: usize) -> usize {
        let signals = self.model.num_signals();
        (w % self.signal_worlds) / signals.pow(i as u32) % signals
    }

    pub fn signals_of(&self, w: usize) -> Vec<usize> {
        (0..self.graph.n()).map(|i| self.signal(i, w)).collect()
    }

    fn active(&self, i: usize, j: usize, w: usize, round: usize) -> bool {
        if self.activation.is_none() {
            return true;
        }
        let e = self.edge_index[&(i.min(j), i.max(j))];
        let bits = w / self.signal_worlds;
        (bits >> (e * (self.t_max + 1) + round)) & 1 == 1
    }

    fn world_probability(&self, w: usize, s: usize) -> T {
        let mut p = T::one();
        for i in 0..self.graph.n() {
            p = p * self.model.likelihood(self.signal(i, w), s);
        }
        if let Some(q) = self.activation {
            let bits = w / self.signal_worlds;
            let total = self.edge_index.len() * (self.t_max + 1);
            for b in 0..total {
                p = p * if (bits >> b) & 1 == 1 {
                    T::lit(q)
                } else {
                    T::lit(1.0 - q)
                };
            }
        }
        p
    }

    pub fn world_prob(&self, w: usize, s: usize) -> T {
        self.world_prob[s][w]
    }

    pub fn trajectory(&self, i: usize, w: usize) -> Trajectory {
        Trajectory::from_code(self.trajectories[i][w], self.t_max, self.actions)
            .expect("tensor codes fit")
    }

    fn observed_vote(&self, i: usize, j: usize, w: usize, round: usize) -> Option<usize> {
        self.active(i, j, w, round)
            .then(|| self.trajectory(j, w).at(round))
    }

    /// Packed trajectory of `j` as seen by `i` through `horizon`.
    fn observed_code(&self, i: usize, j: usize, w: usize, horizon: usize) -> u64 {
        let base = self.observation_alphabet() as u64;
        let own = self.trajectory(j, w);
        let mut code = 0u64;
        for r in (0..=horizon).rev() {
            let d = if self.active(i, j, w, r) {
                own.at(r) as u64
            } else {
                self.actions as u64
            };
            code = code * base + d;
        }
        code
    }

    /// The observed neighbor trajectories of `i` through `horizon`, in
    /// canonical neighbor order.
    pub fn observation(&self, i: usize, w: usize, horizon: usize) -> Vec<Trajectory> {
        let b = self.observation_alphabet();
        self.graph
            .observed(i)
            .iter()
            .map(|&j| {
                Trajectory::from_code(self.observed_code(i, j, w, horizon), horizon, b)
                    .expect("observed codes fit")
            })
            .collect()
    }

    fn key(&self, i: usize, w: usize, horizon: usize) -> ObservationKey {
        let obs = self
            .graph
            .observed(i)
            .iter()
            .map(|&j| self.observed_code(i, j, w, horizon))
            .collect();
        (self.signal(i, w), obs)
    }

    /// Normalized posterior for every observation key of `i` at time `t`
    /// (observations through `t - 1`).
    fn posteriors_at(&self, i: usize, t: usize) -> Result<HashMap<ObservationKey, Vec<T>>> {
        let states = self.model.num_states();
        let mut sums: HashMap<ObservationKey, Vec<CompensatedSum<T>>> = HashMap::new();
        for w in 0..self.world_count() {
            let acc = sums
                .entry(self.key(i, w, t - 1))
                .or_insert_with(|| vec![CompensatedSum::new(); states]);
            for (s, a) in acc.iter_mut().enumerate() {
                a.add(self.world_prob[s][w]);
            }
        }
        let mut out = HashMap::with_capacity(sums.len());
        for (key, acc) in sums {
            let mut post: Vec<T> = acc
                .iter()
                .enumerate()
                .map(|(s, a)| self.model.prior()[s] * a.value())
                .collect();
            let z: T = post.iter().copied().sum();
            if z <= T::zero() {
                return Err(Error::ImpossibleObservation);
            }
            post.iter_mut().for_each(|p| *p = *p / z);
            out.insert(key, post);
        }
        Ok(out)
    }

    /// Posterior of `i` at time `t` given its signal and its neighbors'
    /// trajectories through `t - 1`. `None` if the observation is infeasible.
    pub fn posterior(&self, i: usize, t: usize, x: usize, observed: &[Trajectory]) -> Result<Option<Vec<T>>> {
        if t > self.t_max {
            return Err(Error::BeyondHorizon {
                requested: t,
                available: self.t_max,
            });
        }
        if t == 0 {
            return signal_posterior(&self.model, x).map(Some);
        }
        let worlds = feasible_set(self, i, x, observed)?;
        let states = self.model.num_states();
        let mut post: Vec<T> = (0..states)
            .map(|s| {
                self.model.prior()[s]
                    * worlds
                        .iter()
                        .map(|&w| self.world_prob[s][w])
                        .collect::<CompensatedSum<T>>()
                        .value()
            })
            .collect();
        let z: T = post.iter().copied().sum();
        if z <= T::zero() {
            return Ok(None);
        }
        post.iter_mut().for_each(|p| *p = *p / z);
        Ok(Some(post))
    }
}

/// Worlds with `y_i = x` whose neighbor trajectories (as seen by `i`) match
/// `observed`. An empty `observed` constrains only the own signal.
pub fn feasible_set<T: Real>(
    tensor: &TrajectoryTensor<T>,
    i: usize,
    x: usize,
    observed: &[Trajectory],
) -> Result<Vec<usize>> {
    let neighbors = tensor.graph.observed(i);
    if !observed.is_empty() && observed.len() != neighbors.len() {
        return Err(Error::LengthMismatch(observed.len(), neighbors.len()));
    }
    let horizon = observed.first().map(Trajectory::horizon);
    if let Some(h) = horizon {
        if h > tensor.t_max {
            return Err(Error::BeyondHorizon {
                requested: h,
                available: tensor.t_max,
            });
        }
    }
    Ok((0..tensor.world_count())
        .filter(|&w| tensor.signal(i, w) == x)
        .filter(|&w| match horizon {
            None => true,
            Some(h) => neighbors
                .iter()
                .zip(observed)
                .all(|(&j, o)| tensor.observed_code(i, j, w, h) == o.code()),
        })
        .collect())
}

/// Oracle decision functions: for each node and horizon `t`, a map from
/// `(signal, observed neighbor codes through t - 1)` to the own trajectory
/// code through `t`, over every reachable input.
#[derive(Debug, Clone, Default)]
pub struct OracleDecisions {
    pub tables: Vec<Vec<BTreeMap<(usize, Vec<u64>), u64>>>,
}

pub fn oracle_decision_tables<T: Real>(tensor: &TrajectoryTensor<T>) -> OracleDecisions {
    let n = tensor.graph.n();
    let base = tensor.actions as u64;
    let mut tables = vec![vec![BTreeMap::new(); tensor.t_max + 1]; n];
    for (i, per_node) in tables.iter_mut().enumerate() {
        for (t, table) in per_node.iter_mut().enumerate() {
            for w in 0..tensor.world_count() {
                if (0..tensor.world_prob.len()).all(|s| tensor.world_prob[s][w] <= T::zero()) {
                    continue;
                }
                let obs: Vec<u64> = if t == 0 {
                    Vec::new()
                } else {
                    tensor
                        .graph
                        .observed(i)
                        .iter()
                        .map(|&j| tensor.observed_code(i, j, w, t - 1))
                        .collect()
                };
                let own = tensor.trajectories[i][w] % base.pow(t as u32 + 1);
                table.insert((tensor.signal(i, w), obs), own);
            }
        }
    }
    OracleDecisions { tables }
}

/// `sum_s P(s) sum_w P(w | s) 1[sigma_i(t)(w) != s]` under identity payoff.
pub fn oracle_error_probability<T: Real>(tensor: &TrajectoryTensor<T>, i: usize, t: usize) -> Result<T> {
    if t > tensor.t_max {
        return Err(Error::BeyondHorizon {
            requested: t,
            available: tensor.t_max,
        });
    }
    let mut acc = CompensatedSum::new();
    for (s, probs) in tensor.world_prob.iter().enumerate() {
        let prior = tensor.model.prior()[s];
        for (w, &p) in probs.iter().enumerate() {
            if tensor.trajectory(i, w).at(t) != s {
                acc.add(prior * p);
            }
        }
    }
    Ok(acc.value())
}
