//! Which nodes and directed messages the engine tracks.
//!
//! A *node class* is a set of agents sharing one decision table; a *message
//! class* is a set of directed edges sharing one cavity table. The infinite
//! regular tree has one of each, a finite tree has one per node and per
//! directed edge.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trees::{DegreeDistribution, TreeGraph};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeClass {
    /// Message id feeding each input slot, in canonical neighbor order.
    pub inputs: Vec<usize>,
    /// Original graph node, for finite topologies.
    pub node: Option<usize>,
}

/// One way a message can be produced: the sender is of node class `node`
/// and the receiver sits in its input slot `parent_slot` (`None` when the
/// sender does not observe the receiver).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Alternative {
    pub weight: f64,
    pub node: usize,
    pub parent_slot: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MessageClass {
    /// Law of the sender's trajectory given the receiver's zombie
    /// trajectory, mixed over `alternatives`.
    Cavity { alternatives: Vec<Alternative> },
    /// A trajectory fixed by the scenario (a hub): `codes[c]` over the
    /// action alphabet, known through `horizon`.
    Fixed { codes: Vec<u64>, horizon: usize },
}

impl MessageClass {
    pub fn conditioned(&self) -> bool {
        match self {
            MessageClass::Cavity { alternatives } => {
                alternatives.first().is_some_and(|a| a.parent_slot.is_some())
            }
            MessageClass::Fixed { .. } => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub nodes: Vec<NodeClass>,
    pub messages: Vec<MessageClass>,
    /// `scenario_weights[c][s]`: probability of scenario `c` given state
    /// `s`. A single scenario of weight one when there are no hubs.
    pub scenario_weights: Vec<Vec<f64>>,
    /// Homogeneous topologies describe every node of an infinite graph.
    pub homogeneous: bool,
    /// `(sender, receiver)` graph nodes of each message, finite topologies
    /// only.
    pub edges: Vec<Option<(usize, usize)>>,
}

impl Topology {
    /// The infinite `d`-regular tree.
    pub fn regular(d: usize, states: usize) -> Self {
        Self {
            nodes: vec![NodeClass {
                inputs: vec![0; d],
                node: None,
            }],
            messages: vec![MessageClass::Cavity {
                alternatives: vec![Alternative {
                    weight: 1.0,
                    node: 0,
                    parent_slot: Some(0),
                }],
            }],
            scenario_weights: vec![vec![1.0; states]],
            homogeneous: true,
            edges: vec![None],
        }
    }

    /// The configuration-model limit: one node class per degree in the
    /// support of `rho_v`, one message mixed over the edge-perspective law.
    pub fn configuration(rho_v: &DegreeDistribution, states: usize) -> Result<Self> {
        let rho_e = rho_v.edge_perspective()?;
        let nodes = rho_v
            .support()
            .iter()
            .map(|&d| NodeClass {
                inputs: vec![0; d],
                node: None,
            })
            .collect();
        let alternatives = rho_v
            .support()
            .iter()
            .enumerate()
            .filter(|&(_, &d)| d > 0 && rho_e.prob(d) > 0.0)
            .map(|(k, &d)| Alternative {
                weight: rho_e.prob(d),
                node: k,
                parent_slot: Some(0),
            })
            .collect();
        Ok(Self {
            nodes,
            messages: vec![MessageClass::Cavity { alternatives }],
            scenario_weights: vec![vec![1.0; states]],
            homogeneous: true,
            edges: vec![None],
        })
    }

    /// A finite graph whose skeleton is a forest. Hubs are not allowed here;
    /// see [`Topology::finite_with_hubs`].
    pub fn finite(graph: &TreeGraph, states: usize) -> Result<Self> {
        if !graph.hubs().is_empty() {
            return Err(Error::InvalidGraph("finite topology with hubs needs hub scenarios".into()));
        }
        Self::finite_with_hubs(graph, &[], 0, vec![vec![1.0; states]])
    }

    /// A finite graph where every hub's trajectory is fixed per scenario.
    /// `hub_codes[k][c]` is the trajectory of `graph.hubs()[k]` in scenario
    /// `c`, known through `hub_horizon`.
    pub fn finite_with_hubs(
        graph: &TreeGraph,
        hub_codes: &[Vec<u64>],
        hub_horizon: usize,
        scenario_weights: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if hub_codes.len() != graph.hubs().len() {
            return Err(Error::LengthMismatch(hub_codes.len(), graph.hubs().len()));
        }
        if let Err(d) = graph.validate() {
            return Err(Error::InvalidGraph(d.to_string()));
        }
        let n = graph.n();
        let mut node_class = vec![usize::MAX; n];
        let mut nodes = Vec::new();
        for (i, class) in node_class.iter_mut().enumerate() {
            if !graph.is_hub(i) {
                *class = nodes.len();
                nodes.push(NodeClass {
                    inputs: Vec::new(),
                    node: Some(i),
                });
            }
        }
        let mut messages = Vec::new();
        let mut edges = Vec::new();
        let mut hub_message = HashMap::new();
        for (k, &h) in graph.hubs().iter().enumerate() {
            hub_message.insert(h, messages.len());
            messages.push(MessageClass::Fixed {
                codes: hub_codes[k].clone(),
                horizon: hub_horizon,
            });
            edges.push(None);
        }
        let mut message_id = HashMap::new();
        for i in (0..n).filter(|&i| !graph.is_hub(i)) {
            for &j in graph.observed(i).iter().filter(|&&j| !graph.is_hub(j)) {
                message_id.insert((j, i), messages.len());
                let parent_slot = graph.observed(j).iter().position(|&v| v == i);
                messages.push(MessageClass::Cavity {
                    alternatives: vec![Alternative {
                        weight: 1.0,
                        node: node_class[j],
                        parent_slot,
                    }],
                });
                edges.push(Some((j, i)));
            }
        }
        for i in (0..n).filter(|&i| !graph.is_hub(i)) {
            nodes[node_class[i]].inputs = graph
                .observed(i)
                .iter()
                .map(|&j| {
                    if graph.is_hub(j) {
                        hub_message[&j]
                    } else {
                        message_id[&(j, i)]
                    }
                })
                .collect();
        }
        Ok(Self {
            nodes,
            messages,
            scenario_weights,
            homogeneous: false,
            edges,
        })
    }

    pub fn scenarios(&self) -> usize {
        self.scenario_weights.len()
    }

    /// Node class of graph node `i`, for finite topologies.
    pub fn class_of(&self, i: usize) -> Option<usize> {
        self.nodes.iter().position(|c| c.node == Some(i))
    }

    /// Message id of the directed edge `sender -> receiver`.
    pub fn message_of(&self, sender: usize, receiver: usize) -> Option<usize> {
        self.edges.iter().position(|e| *e == Some((sender, receiver)))
    }

    pub(crate) fn validate(&self) -> Result<()> {
        for (k, node) in self.nodes.iter().enumerate() {
            if let Some(&m) = node.inputs.iter().find(|&&m| m >= self.messages.len()) {
                return Err(Error::InvalidGraph(format!("node class {k} reads unknown message {m}")));
            }
        }
        for (m, msg) in self.messages.iter().enumerate() {
            match msg {
                MessageClass::Cavity { alternatives } => {
                    let conditioned = alternatives.first().map(|a| a.parent_slot.is_some());
                    for a in alternatives {
                        if a.node >= self.nodes.len() {
                            return Err(Error::InvalidGraph(format!("message {m} sent by unknown class")));
                        }
                        if Some(a.parent_slot.is_some()) != conditioned {
                            return Err(Error::InvalidGraph(format!(
                                "message {m} mixes conditioned and unconditioned senders"
                            )));
                        }
                        if a.parent_slot.is_some_and(|p| p >= self.nodes[a.node].inputs.len()) {
                            return Err(Error::InvalidGraph(format!("message {m} parent slot out of range")));
                        }
                    }
                }
                MessageClass::Fixed { codes, .. } => {
                    if codes.len() != self.scenarios() {
                        return Err(Error::LengthMismatch(codes.len(), self.scenarios()));
                    }
                }
            }
        }
        Ok(())
    }
}
