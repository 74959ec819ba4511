//! Finite (almost-)tree topologies, degree distributions and the
//! configuration-model sampler.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sampling attempts per configuration-model graph.
pub const CONFIGURATION_RETRY_BUDGET: usize = 1000;

/// A graph of agents. Undirected edges are mutual observation; a directed
/// edge `(i, j)` means `i` observes `j` but not the reverse. Hubs are the
/// nodes whose removal must leave an acyclic skeleton.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeGraph {
    observed: Vec<Vec<usize>>,
    skeleton: Vec<Vec<usize>>,
    edges: Vec<(usize, usize)>,
    directed: Vec<(usize, usize)>,
    hubs: Vec<usize>,
}

/// Why a graph is not a valid (almost-)tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Diagnostic {
    /// A cycle in the skeleton after hub removal, as a closed node walk.
    Cycle(Vec<usize>),
    /// A directed observation cycle of length greater than two.
    DirectedCycle(Vec<usize>),
    /// An observation list not in increasing node order.
    Unsorted { node: usize },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::Cycle(c) => write!(f, "cycle through nodes {c:?}"),
            Diagnostic::DirectedCycle(c) => write!(f, "directed cycle through nodes {c:?}"),
            Diagnostic::Unsorted { node } => write!(f, "neighbor list of node {node} is unsorted"),
        }
    }
}

impl TreeGraph {
    /// Builds a graph from undirected edges, directed `(observer, observed)`
    /// edges and a hub set. Self-loops and repeated pairs are rejected.
    pub fn new(
        n: usize,
        edges: &[(usize, usize)],
        directed: &[(usize, usize)],
        hubs: &[usize],
    ) -> Result<Self> {
        let mut observed = vec![BTreeSet::new(); n];
        let mut skeleton = vec![BTreeSet::new(); n];
        let mut seen = BTreeSet::new();
        let check = |a: usize, b: usize| -> Result<()> {
            if a >= n || b >= n {
                return Err(Error::InvalidGraph(format!("edge ({a}, {b}) out of range for {n} nodes")));
            }
            if a == b {
                return Err(Error::InvalidGraph(format!("self-loop at {a}")));
            }
            Ok(())
        };
        for &(a, b) in edges {
            check(a, b)?;
            if !seen.insert((a.min(b), a.max(b))) {
                return Err(Error::InvalidGraph(format!("repeated edge ({a}, {b})")));
            }
            observed[a].insert(b);
            observed[b].insert(a);
            skeleton[a].insert(b);
            skeleton[b].insert(a);
        }
        for &(a, b) in directed {
            check(a, b)?;
            if !seen.insert((a.min(b), a.max(b))) {
                return Err(Error::InvalidGraph(format!("repeated edge ({a}, {b})")));
            }
            observed[a].insert(b);
            skeleton[a].insert(b);
            skeleton[b].insert(a);
        }
        let mut hub_list: Vec<usize> = hubs.to_vec();
        hub_list.sort_unstable();
        hub_list.dedup();
        if let Some(&h) = hub_list.iter().find(|&&h| h >= n) {
            return Err(Error::InvalidGraph(format!("hub {h} out of range")));
        }
        Ok(Self {
            observed: observed.into_iter().map(|s| s.into_iter().collect()).collect(),
            skeleton: skeleton.into_iter().map(|s| s.into_iter().collect()).collect(),
            edges: edges.to_vec(),
            directed: directed.to_vec(),
            hubs: hub_list,
        })
    }

    /// Mutual-observation graph from raw adjacency lists, kept in the order
    /// given (so that [`TreeGraph::validate`] can flag unsorted lists).
    pub fn from_adjacency(adjacency: Vec<Vec<usize>>) -> Result<Self> {
        let n = adjacency.len();
        let mut edges = Vec::new();
        for (i, list) in adjacency.iter().enumerate() {
            for &j in list {
                if j >= n || j == i || !adjacency[j].contains(&i) {
                    return Err(Error::InvalidGraph(format!("adjacency ({i}, {j}) is not symmetric")));
                }
                if i < j {
                    edges.push((i, j));
                }
            }
        }
        Ok(Self {
            observed: adjacency.clone(),
            skeleton: adjacency,
            edges,
            directed: Vec::new(),
            hubs: Vec::new(),
        })
    }

    pub fn path(n: usize) -> Self {
        let edges: Vec<_> = (1..n).map(|k| (k - 1, k)).collect();
        Self::new(n, &edges, &[], &[]).expect("path is valid")
    }

    /// Star with center 0 and `leaves` leaves.
    pub fn star(leaves: usize) -> Self {
        let edges: Vec<_> = (1..=leaves).map(|k| (0, k)).collect();
        Self::new(leaves + 1, &edges, &[], &[]).expect("star is valid")
    }

    /// Finite `d`-regular tree of the given depth: node 0 is the center with
    /// `d` children, every other internal node has `d - 1` children. Nodes
    /// are numbered in breadth-first order.
    pub fn regular_tree(d: usize, depth: usize) -> Self {
        Self::layered_tree(depth, |level| if level == 0 { d } else { d.saturating_sub(1) })
    }

    /// Rooted tree where every internal node has `k` children.
    pub fn k_ary_tree(k: usize, depth: usize) -> Self {
        Self::layered_tree(depth, |_| k)
    }

    fn layered_tree(depth: usize, children: impl Fn(usize) -> usize) -> Self {
        let mut edges = Vec::new();
        let mut frontier = vec![0usize];
        let mut next_id = 1;
        for level in 0..depth {
            let mut next = Vec::new();
            for &p in &frontier {
                for _ in 0..children(level) {
                    edges.push((p, next_id));
                    next.push(next_id);
                    next_id += 1;
                }
            }
            frontier = next;
        }
        Self::new(next_id, &edges, &[], &[]).expect("layered tree is valid")
    }

    /// Returns a copy with the given hub set.
    pub fn with_hubs(&self, hubs: &[usize]) -> Result<Self> {
        Self::new(self.n(), &self.edges, &self.directed, hubs)
    }

    pub fn n(&self) -> usize {
        self.observed.len()
    }

    /// Nodes observed by `i`, in canonical (increasing) order.
    pub fn observed(&self, i: usize) -> &[usize] {
        &self.observed[i]
    }

    pub fn observes(&self, i: usize, j: usize) -> bool {
        self.observed[i].binary_search(&j).is_ok()
    }

    /// Neighbors in the undirected skeleton.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.skeleton[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.skeleton[i].len()
    }

    pub fn max_degree(&self) -> usize {
        self.skeleton.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn directed_edges(&self) -> &[(usize, usize)] {
        &self.directed
    }

    pub fn hubs(&self) -> &[usize] {
        &self.hubs
    }

    pub fn is_hub(&self, i: usize) -> bool {
        self.hubs.binary_search(&i).is_ok()
    }

    /// Skeleton edges as unordered pairs `(min, max)`, sorted.
    pub fn skeleton_edges(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<_> = self
            .edges
            .iter()
            .chain(&self.directed)
            .map(|&(a, b)| (a.min(b), a.max(b)))
            .collect();
        out.sort_unstable();
        out
    }

    pub fn validate(&self) -> std::result::Result<(), Diagnostic> {
        validate(self)
    }

    pub fn is_forest(&self) -> bool {
        self.hubs.is_empty() && self.validate().is_ok()
    }

    pub fn to_file(&self) -> GraphFile {
        GraphFile {
            n: self.n(),
            edges: self.edges.iter().map(|&(a, b)| [a, b]).collect(),
            directed_edges: self.directed.iter().map(|&(a, b)| [a, b]).collect(),
            hubs: self.hubs.clone(),
        }
    }
}

/// Checks sortedness, acyclicity of the hub-free skeleton and the absence of
/// directed cycles longer than two.
pub fn validate(graph: &TreeGraph) -> std::result::Result<(), Diagnostic> {
    for (i, list) in graph.observed.iter().enumerate() {
        if list.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Diagnostic::Unsorted { node: i });
        }
    }
    for (i, list) in graph.skeleton.iter().enumerate() {
        if list.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Diagnostic::Unsorted { node: i });
        }
    }
    let n = graph.n();
    let removed: Vec<bool> = (0..n).map(|i| graph.is_hub(i)).collect();
    if let Some(cycle) = find_undirected_cycle(&graph.skeleton, &removed) {
        return Err(Diagnostic::Cycle(cycle));
    }
    if let Some(cycle) = find_long_directed_cycle(graph, &removed) {
        return Err(Diagnostic::DirectedCycle(cycle));
    }
    Ok(())
}

fn find_undirected_cycle(adj: &[Vec<usize>], removed: &[bool]) -> Option<Vec<usize>> {
    let n = adj.len();
    let mut parent = vec![usize::MAX; n];
    let mut visited = vec![false; n];
    for root in 0..n {
        if visited[root] || removed[root] {
            continue;
        }
        visited[root] = true;
        let mut stack = vec![root];
        while let Some(u) = stack.pop() {
            for &v in &adj[u] {
                if removed[v] || v == parent[u] {
                    continue;
                }
                if visited[v] {
                    // u and v are both in the DFS forest: close the cycle
                    // through their lowest common ancestor.
                    let path_u = ancestors(u, &parent);
                    let path_v = ancestors(v, &parent);
                    let common = path_u.iter().find(|x| path_v.contains(x)).copied()?;
                    let mut cycle: Vec<usize> =
                        path_u.iter().take_while(|&&x| x != common).copied().collect();
                    cycle.push(common);
                    let tail: Vec<usize> =
                        path_v.iter().take_while(|&&x| x != common).copied().collect();
                    cycle.extend(tail.into_iter().rev());
                    return Some(cycle);
                }
                visited[v] = true;
                parent[v] = u;
                stack.push(v);
            }
        }
    }
    None
}

fn ancestors(mut u: usize, parent: &[usize]) -> Vec<usize> {
    let mut out = vec![u];
    while parent[u] != usize::MAX {
        u = parent[u];
        out.push(u);
    }
    out
}

fn find_long_directed_cycle(graph: &TreeGraph, removed: &[bool]) -> Option<Vec<usize>> {
    // Mutual pairs are 2-cycles and allowed; only one-way observations can
    // close a longer cycle.
    let n = graph.n();
    let one_way: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            if removed[i] {
                return Vec::new();
            }
            graph.observed[i]
                .iter()
                .copied()
                .filter(|&j| !removed[j])
                .collect()
        })
        .collect();
    // colour: 0 unvisited, 1 on stack, 2 done
    let mut colour = vec![0u8; n];
    let mut stack_path = Vec::new();
    fn dfs(
        u: usize,
        from: usize,
        adj: &[Vec<usize>],
        colour: &mut [u8],
        path: &mut Vec<usize>,
    ) -> Option<Vec<usize>> {
        colour[u] = 1;
        path.push(u);
        for &v in &adj[u] {
            if v == from {
                continue;
            }
            if colour[v] == 1 {
                let pos = path.iter().position(|&x| x == v)?;
                if path.len() - pos > 2 {
                    return Some(path[pos..].to_vec());
                }
            } else if colour[v] == 0 {
                if let Some(c) = dfs(v, u, adj, colour, path) {
                    return Some(c);
                }
            }
        }
        path.pop();
        colour[u] = 2;
        None
    }
    for root in 0..n {
        if colour[root] == 0 {
            if let Some(c) = dfs(root, usize::MAX, &one_way, &mut colour, &mut stack_path) {
                return Some(c);
            }
        }
    }
    None
}

/// Connected component of `j` once the edge `(i, j)` is removed, rooted at
/// `j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subtree {
    pub root: usize,
    /// Original node ids, increasing.
    pub nodes: Vec<usize>,
    /// Induced graph over `nodes`, relabeled by position in `nodes`.
    pub graph: TreeGraph,
}

pub fn directed_subtree(graph: &TreeGraph, j: usize, i: usize) -> Result<Subtree> {
    if i >= graph.n() || j >= graph.n() || !graph.neighbors(j).contains(&i) {
        return Err(Error::NotAnEdge(i, j));
    }
    let mut seen = BTreeSet::from([j]);
    let mut queue = VecDeque::from([j]);
    while let Some(u) = queue.pop_front() {
        for &v in graph.neighbors(u) {
            if (u == j && v == i) || seen.contains(&v) {
                continue;
            }
            if v == i {
                return Err(Error::InvalidGraph("subtree reaches back to its root (not a tree)".into()));
            }
            seen.insert(v);
            queue.push_back(v);
        }
    }
    let nodes: Vec<usize> = seen.into_iter().collect();
    let graph = induced_subgraph(graph, &nodes)?;
    Ok(Subtree { root: j, nodes, graph })
}

/// Induced subgraph over `nodes` (increasing), relabeled by position.
pub fn induced_subgraph(graph: &TreeGraph, nodes: &[usize]) -> Result<TreeGraph> {
    let index: HashMap<usize, usize> = nodes.iter().enumerate().map(|(k, &v)| (v, k)).collect();
    let keep = |&(a, b): &(usize, usize)| Some((*index.get(&a)?, *index.get(&b)?));
    let edges: Vec<_> = graph.edges.iter().filter_map(keep).collect();
    let directed: Vec<_> = graph.directed.iter().filter_map(keep).collect();
    let hubs: Vec<_> = graph.hubs.iter().filter_map(|h| index.get(h).copied()).collect();
    TreeGraph::new(nodes.len(), &edges, &directed, &hubs)
}

/// Nodes within skeleton distance `t` of `i`, increasing.
pub fn ball(graph: &TreeGraph, i: usize, t: usize) -> Vec<usize> {
    let mut dist = HashMap::from([(i, 0usize)]);
    let mut queue = VecDeque::from([i]);
    while let Some(u) = queue.pop_front() {
        let du = dist[&u];
        if du == t {
            continue;
        }
        for &v in graph.neighbors(u) {
            if let std::collections::hash_map::Entry::Vacant(e) = dist.entry(v) {
                e.insert(du + 1);
                queue.push_back(v);
            }
        }
    }
    let mut out: Vec<usize> = dist.into_keys().collect();
    out.sort_unstable();
    out
}

/// Largest `t` such that the ball of radius `t` around `i` induces a tree;
/// `None` when every ball is a tree (the component itself is a tree).
pub fn tree_ball_radius(graph: &TreeGraph, i: usize) -> Option<usize> {
    let mut dist = HashMap::from([(i, 0usize)]);
    let mut layer = vec![i];
    let mut t = 0;
    loop {
        let mut next = Vec::new();
        for &u in &layer {
            for &v in graph.neighbors(u) {
                if let std::collections::hash_map::Entry::Vacant(e) = dist.entry(v) {
                    e.insert(t + 1);
                    next.push(v);
                }
            }
        }
        if next.is_empty() {
            return None;
        }
        // The radius-(t+1) ball is a tree iff every new node has exactly one
        // neighbor in the previous layer and none within its own layer.
        let ok = next.iter().all(|&v| {
            let mut up = 0;
            for &w in graph.neighbors(v) {
                match dist.get(&w) {
                    Some(&dw) if dw == t => up += 1,
                    Some(&dw) if dw == t + 1 => return false,
                    _ => {}
                }
            }
            up == 1
        });
        if !ok {
            return Some(t);
        }
        layer = next;
        t += 1;
    }
}

/// Finite-support degree law, either node-perspective or edge-perspective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeDistribution {
    support: Vec<usize>,
    probs: Vec<f64>,
}

impl DegreeDistribution {
    pub fn new(support: Vec<usize>, probs: Vec<f64>) -> Result<Self> {
        if support.is_empty() || support.len() != probs.len() {
            return Err(Error::InvalidDistribution("support and probs must match and be nonempty".into()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidDistribution("negative probability".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidDistribution(format!("probabilities sum to {total}")));
        }
        let mut sorted = support.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != support.len() {
            return Err(Error::InvalidDistribution("repeated degree in support".into()));
        }
        Ok(Self { support, probs })
    }

    pub fn point(d: usize) -> Self {
        Self {
            support: vec![d],
            probs: vec![1.0],
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: DegreeDistribution = serde_json::from_str(text)?;
        Self::new(raw.support, raw.probs)
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, d: usize) -> f64 {
        self.support
            .iter()
            .position(|&k| k == d)
            .map_or(0.0, |k| self.probs[k])
    }

    pub fn mean(&self) -> f64 {
        self.support
            .iter()
            .zip(&self.probs)
            .map(|(&d, &p)| d as f64 * p)
            .sum()
    }

    pub fn max_degree(&self) -> usize {
        self.support
            .iter()
            .zip(&self.probs)
            .filter(|(_, p)| **p > 0.0)
            .map(|(d, _)| *d)
            .max()
            .unwrap_or(0)
    }

    pub fn edge_perspective(&self) -> Result<DegreeDistribution> {
        edge_perspective(self)
    }
}

/// `rho_E(d) = d rho_V(d) / sum_k k rho_V(k)`: the degree of a node reached
/// along a uniformly random edge.
pub fn edge_perspective(rho_v: &DegreeDistribution) -> Result<DegreeDistribution> {
    let mean = rho_v.mean();
    if mean <= 0.0 {
        return Err(Error::InvalidDistribution("all mass on degree 0".into()));
    }
    let probs = rho_v
        .support
        .iter()
        .zip(&rho_v.probs)
        .map(|(&d, &p)| d as f64 * p / mean)
        .collect();
    Ok(DegreeDistribution {
        support: rho_v.support.clone(),
        probs,
    })
}

/// A configuration-model draw together with each node's tree-ball radius.
#[derive(Debug, Clone)]
pub struct ConfigurationSample {
    pub graph: TreeGraph,
    pub degrees: Vec<usize>,
    /// `None`: the node's whole component is a tree.
    pub tree_radius: Vec<Option<usize>>,
    pub attempts: usize,
}

/// Uniform half-edge pairing with rejection of self-loops and repeated
/// edges.
pub fn sample_configuration_graph(
    rho_v: &DegreeDistribution,
    n: usize,
    seed: u64,
) -> Result<ConfigurationSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let law = WeightedIndex::new(&rho_v.probs)
        .map_err(|e| Error::InvalidDistribution(e.to_string()))?;
    let mut attempts = 0;
    let degrees = loop {
        attempts += 1;
        if attempts > CONFIGURATION_RETRY_BUDGET {
            return Err(Error::RetryBudgetExhausted(CONFIGURATION_RETRY_BUDGET));
        }
        let degrees: Vec<usize> = (0..n).map(|_| rho_v.support[law.sample(&mut rng)]).collect();
        if degrees.iter().sum::<usize>() % 2 == 0 {
            break degrees;
        }
    };
    let mut stubs: Vec<usize> = degrees
        .iter()
        .enumerate()
        .flat_map(|(v, &d)| std::iter::repeat(v).take(d))
        .collect();
    loop {
        if attempts > CONFIGURATION_RETRY_BUDGET {
            return Err(Error::RetryBudgetExhausted(CONFIGURATION_RETRY_BUDGET));
        }
        attempts += 1;
        stubs.shuffle(&mut rng);
        let mut seen = BTreeSet::new();
        let mut edges = Vec::with_capacity(stubs.len() / 2);
        let simple = stubs.chunks_exact(2).all(|pair| {
            let (a, b) = (pair[0].min(pair[1]), pair[0].max(pair[1]));
            edges.push((a, b));
            a != b && seen.insert((a, b))
        });
        if !simple {
            continue;
        }
        edges.sort_unstable();
        let graph = TreeGraph::new(n, &edges, &[], &[])?;
        let tree_radius = (0..n).map(|i| tree_ball_radius(&graph, i)).collect();
        return Ok(ConfigurationSample {
            graph,
            degrees,
            tree_radius,
            attempts,
        });
    }
}

/// JSON graph description.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GraphFile {
    pub n: usize,
    #[serde(default)]
    pub edges: Vec<[usize; 2]>,
    #[serde(default)]
    pub directed_edges: Vec<[usize; 2]>,
    #[serde(default)]
    pub hubs: Vec<usize>,
}

impl GraphFile {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn build(&self) -> Result<TreeGraph> {
        let pairs = |v: &[[usize; 2]]| v.iter().map(|e| (e[0], e[1])).collect::<Vec<_>>();
        TreeGraph::new(self.n, &pairs(&self.edges), &pairs(&self.directed_edges), &self.hubs)
    }
}
