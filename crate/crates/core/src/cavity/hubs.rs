//! Graphs that become forests once a few hub nodes are removed.
//!
//! The tree machinery runs once per assignment of private signals to the
//! hubs inside the relevant ball; the results are mixed with weights
//! `P(x_hubs | s)`. Hub trajectories must be functions of hub signals
//! alone, which holds when every hub that matters past round 0 observes
//! only other hubs.

use std::collections::{HashMap, VecDeque};

use super::engine::{CavityEngine, EngineConfig};
use super::topology::Topology;
use crate::error::{Error, Result};
use crate::model::{signal_posterior, Decider, SignalModel, Trajectory, UpdateRule};
use crate::num::Real;
use crate::oracle::{unroll, OracleConfig};
use crate::trees::{ball, induced_subgraph, TreeGraph};

pub const DEFAULT_HUB_CAP: usize = 4;

/// Posterior of node `i` at time `t` given its signal `x` and its observed
/// neighbors' trajectories through `t - 1` (canonical order; empty for
/// `t = 0`).
#[allow(clippy::too_many_arguments)]
pub fn posterior_with_hubs<T: Real>(
    graph: &TreeGraph,
    model: &SignalModel<T>,
    decider: &Decider<T>,
    rule: &UpdateRule<T>,
    i: usize,
    x: usize,
    observed: &[Trajectory],
    cap: usize,
) -> Result<Vec<T>> {
    let Some(first) = observed.first() else {
        return signal_posterior(model, x);
    };
    let t = first.horizon() + 1;
    let nodes = ball(graph, i, t);
    let dist = distances(graph, i, t);
    let sub = induced_subgraph(graph, &nodes)?;
    let root = nodes.binary_search(&i).expect("ball contains its center");

    let hubs: Vec<usize> = sub.hubs().iter().copied().filter(|&h| h != root).collect();
    if hubs.len() > cap {
        return Err(Error::HubCapExceeded {
            found: hubs.len(),
            cap,
        });
    }
    let mut hub_horizon = 0;
    for &h in &hubs {
        let rounds = t.saturating_sub(dist[&nodes[h]]);
        if rounds >= 1 && sub.observed(h).iter().any(|v| !hubs.contains(v)) {
            return Err(Error::HubNotBroadcast(nodes[h]));
        }
        hub_horizon = hub_horizon.max(rounds);
    }

    let states = model.num_states();
    let (hub_codes, weights) = if hubs.is_empty() {
        (Vec::new(), vec![vec![1.0; states]])
    } else {
        let hub_graph = induced_subgraph(&sub, &hubs)?;
        let tensor = unroll(
            &hub_graph,
            model,
            decider,
            std::slice::from_ref(rule),
            hub_horizon,
            OracleConfig::default(),
        )?;
        let scenarios = tensor.world_count();
        let codes = (0..hubs.len())
            .map(|k| (0..scenarios).map(|c| tensor.trajectory(k, c).code()).collect())
            .collect();
        let weights = (0..scenarios)
            .map(|c| (0..states).map(|s| tensor.world_prob(c, s).as_f64()).collect())
            .collect();
        (codes, weights)
    };

    let forest = sub.with_hubs(&hubs)?;
    let topology = Topology::finite_with_hubs(&forest, &hub_codes, hub_horizon, weights)?;
    let k = topology.class_of(root).expect("center is not a hub here");
    let mut engine = CavityEngine::new(
        topology,
        model.clone(),
        decider.clone(),
        rule.clone(),
        EngineConfig::default(),
    )?;
    engine.advance_to(t)?;
    engine.posterior(k, x, observed)
}

fn distances(graph: &TreeGraph, i: usize, t: usize) -> HashMap<usize, usize> {
    let mut dist = HashMap::from([(i, 0)]);
    let mut queue = VecDeque::from([i]);
    while let Some(u) = queue.pop_front() {
        if dist[&u] == t {
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
