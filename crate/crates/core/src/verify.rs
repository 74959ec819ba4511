//! Cross-checks of the cavity engine: equivalence with the brute-force
//! oracle on small trees, and table invariants on regular trees.

use std::fmt;

use serde::Serialize;

use crate::cavity::{CavityEngine, MIXED};
use crate::error::Result;
use crate::model::{Decider, SignalModel, TieBreakRule, UpdateRule};
use crate::oracle::{oracle_decision_tables, oracle_error_probability, unroll, OracleConfig};
use crate::trees::TreeGraph;

pub const ORACLE_TOLERANCE: f64 = 1e-10;
pub const TABLE_TOLERANCE: f64 = 1e-12;
pub const COUPLING_TOLERANCE: f64 = 1e-9;
pub const FLIP_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mark = if self.passed { "ok  " } else { "FAIL" };
        write!(f, "{mark} {}: {}", self.name, self.detail)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Report {
    pub checks: Vec<Check>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn extend(&mut self, checks: impl IntoIterator<Item = Check>) {
        self.checks.extend(checks);
    }
}

/// Paths on 2..=6 nodes, stars on 4 and 5 nodes and the depth-2 binary
/// tree, restricted to at most `max_nodes` nodes.
pub fn oracle_family(max_nodes: usize) -> Vec<(String, TreeGraph)> {
    let mut family: Vec<(String, TreeGraph)> = (2..=6).map(|n| (format!("path{n}"), TreeGraph::path(n))).collect();
    family.push(("star4".into(), TreeGraph::star(3)));
    family.push(("star5".into(), TreeGraph::star(4)));
    family.push(("binary2".into(), TreeGraph::k_ary_tree(2, 2)));
    family.retain(|(_, g)| g.n() <= max_nodes);
    family
}

/// Compares the finite-tree engine with the oracle on `graph` through
/// `t_max`: every reachable decision-table input and every node's error
/// probability.
pub fn oracle_equivalence(
    name: &str,
    graph: &TreeGraph,
    model: &SignalModel<f64>,
    decider: &Decider<f64>,
    rule: &UpdateRule<f64>,
    t_max: usize,
) -> Result<Check> {
    let label = format!("oracle {name} {} t<={t_max}", rule.name());
    let mut engine = CavityEngine::finite(graph, model.clone(), decider.clone(), rule.clone())?;
    engine.advance_to(t_max)?;
    let tensor = unroll(graph, model, decider, std::slice::from_ref(rule), t_max, OracleConfig::default())?;
    let oracle = oracle_decision_tables(&tensor);

    let mut mismatches = 0usize;
    let mut entries = 0usize;
    let mut max_gap = 0.0f64;
    for i in 0..graph.n() {
        let k = engine.topology().class_of(i).expect("no hubs in the family");
        for t in 0..=t_max {
            let table = engine.decision_table(t, k).expect("advanced");
            for ((x, observed), &own) in &oracle.tables[i][t] {
                entries += 1;
                let code = table.codes[table.index(*x, observed)];
                if code == MIXED || code as u64 != own {
                    mismatches += 1;
                }
            }
            let exact = oracle_error_probability(&tensor, i, t)?;
            let cavity = engine.error_probability(k, t)?;
            max_gap = max_gap.max((exact - cavity).abs());
        }
    }
    let passed = mismatches == 0 && max_gap <= ORACLE_TOLERANCE;
    Ok(Check::new(
        label,
        passed,
        format!("{entries} table entries, {mismatches} mismatches, max error gap {max_gap:.3e}"),
    ))
}

/// Oracle equivalence over [`oracle_family`] for the Bayesian and majority
/// rules, binary symmetric noise 0.15 and 0.3.
pub fn oracle_suite(max_nodes: usize, max_t: usize) -> Result<Report> {
    let mut report = Report::default();
    for noise in [0.15, 0.3] {
        let model = SignalModel::binary_symmetric(noise)?;
        let decider = Decider::identity(&model, TieBreakRule::OwnSignal)?;
        for (name, graph) in oracle_family(max_nodes) {
            for rule in [UpdateRule::Bayesian, UpdateRule::Majority] {
                let mut check = oracle_equivalence(&name, &graph, &model, &decider, &rule, max_t)?;
                check.name = format!("{} noise={noise}", check.name);
                report.checks.push(check);
            }
        }
    }
    Ok(report)
}

/// Flips every digit of a binary code of `len` digits.
fn flip(code: usize, len: usize) -> usize {
    ((1usize << len) - 1) ^ code
}

/// Table invariants of the homogeneous `d`-regular engine through `t_max`
/// under binary symmetric noise.
pub fn invariant_checks(d: usize, noise: f64, rule: &UpdateRule<f64>, t_max: usize) -> Result<Vec<Check>> {
    let label = |what: &str| format!("{what} d={d} noise={noise} {}", rule.name());
    let model = SignalModel::binary_symmetric(noise)?;
    let decider = Decider::identity(&model, TieBreakRule::OwnSignal)?;
    let mut engine = CavityEngine::regular(d, model, decider, rule.clone())?;
    engine.advance_to(t_max)?;
    let mut checks = Vec::new();

    let drift = engine.stats().iter().map(|s| s.max_drift).fold(0.0, f64::max);
    let mut normalization = 0.0f64;
    let mut marginalization = 0.0f64;
    let mut flip_gap = 0.0f64;
    for t in 0..t_max {
        let q = engine.cavity_table(t, 0).expect("advanced");
        normalization = normalization.max(q.normalization_gap());
        if t > 0 {
            marginalization = marginalization.max(q.marginalization_gap(engine.cavity_table(t - 1, 0).expect("advanced")));
        }
        for s in 0..2 {
            for tau in 0..q.n_tau() {
                for omega in 0..q.n_omega() {
                    let a = q.get(0, s, tau, omega);
                    let b = q.get(0, 1 - s, flip(tau, t), flip(omega, t + 1));
                    flip_gap = flip_gap.max((a - b).abs());
                }
            }
        }
    }
    checks.push(Check::new(
        label("normalization"),
        drift <= TABLE_TOLERANCE && normalization <= TABLE_TOLERANCE,
        format!("pre-renormalization drift {drift:.3e}, after {normalization:.3e}"),
    ));
    checks.push(Check::new(
        label("marginalization"),
        marginalization <= TABLE_TOLERANCE,
        format!("max gap {marginalization:.3e}"),
    ));

    let mut coupling = 0.0f64;
    let mut errors = Vec::new();
    for t in 0..=t_max {
        let estimate = engine.error_estimate(0, t)?;
        coupling = coupling.max(estimate.coupling_gap);
        flip_gap = flip_gap.max((estimate.by_state[0] - estimate.by_state[1]).abs());
        errors.push(estimate.value);
    }
    checks.push(Check::new(
        label("coupling"),
        coupling <= COUPLING_TOLERANCE,
        format!("max total-mass gap {coupling:.3e}"),
    ));
    checks.push(Check::new(
        label("flip symmetry"),
        flip_gap <= FLIP_TOLERANCE,
        format!("max gap {flip_gap:.3e}"),
    ));
    if matches!(rule, UpdateRule::Bayesian) {
        let monotone = errors.windows(2).all(|w| w[1] <= w[0]);
        checks.push(Check::new(
            label("monotone error"),
            monotone,
            format!("errors {}", errors.iter().map(|e| format!("{e:.3e}")).collect::<Vec<_>>().join(" ")),
        ));
    }
    Ok(checks)
}

/// [`invariant_checks`] for d in {3, 5}, noise in {0.15, 0.3}, both rules.
pub fn invariant_suite(max_t: usize) -> Result<Report> {
    let mut report = Report::default();
    for d in [3, 5] {
        for noise in [0.15, 0.3] {
            for rule in [UpdateRule::Bayesian, UpdateRule::Majority] {
                report.extend(invariant_checks(d, noise, &rule, max_t)?);
            }
        }
    }
    Ok(report)
}
