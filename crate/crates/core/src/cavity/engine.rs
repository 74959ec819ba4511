use rayon::prelude::*;
use serde::Serialize;
use smallvec::SmallVec;

use super::tables::{mask, CavityTable, DecisionTable, Outcomes, Scope, MIXED};
use super::topology::{Alternative, MessageClass, Topology};
use crate::error::{Error, Result};
use crate::model::{
    digit, kernel_from_row, signal_posterior, ActionKernel, Decider, SignalModel, Trajectory,
    UpdateRule,
};
use crate::num::{checked_pow, CompensatedBuffer, CompensatedSum, Real};
use crate::trees::{DegreeDistribution, TreeGraph};

/// Default cap on table entries allocated by one advance.
pub const DEFAULT_TABLE_BUDGET: u128 = 1 << 28;
/// Pre-renormalization drift above this is logged.
pub const DRIFT_REPORT: f64 = 1e-9;
/// Allowed deviation of the coupling total mass from one (`f64`; `f32`
/// uses a looser per-type bound).
pub const COUPLING_TOLERANCE: f64 = 1e-9;
/// Error probabilities below this are flagged unreliable.
pub const UNRELIABLE_BELOW: f64 = 1e-13;

const CHUNK: usize = 1 << 13;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngineConfig {
    /// Per-round, per-edge activation probability; `None` means always
    /// active.
    pub activation: Option<f64>,
    pub budget: u128,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            activation: None,
            budget: DEFAULT_TABLE_BUDGET,
        }
    }
}

/// Bookkeeping for one [`CavityEngine::advance`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct StepStats {
    /// Horizon of the cavity tables built in this step.
    pub horizon: usize,
    /// Factors multiplied in the cavity sums and posteriors.
    pub products: u64,
    /// Largest pre-renormalization `|sum Q - 1|`.
    pub max_drift: f64,
    /// Slices whose drift exceeded [`DRIFT_REPORT`].
    pub drifted_slices: usize,
    pub cavity_entries: usize,
    pub decision_entries: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorEstimate {
    pub value: f64,
    /// Per-state conditional error, binary models only use both entries.
    pub by_state: [f64; 2],
    /// Largest `|mass - 1|` of the coupling over `(s, c, x)`.
    pub coupling_gap: f64,
    pub unreliable: bool,
}

/// Exact learning dynamics on a tree-like topology.
///
/// Holds decision tables `g^0..g^T` and cavity tables `Q^0..Q^{T-1}`;
/// [`advance`](Self::advance) adds `Q^T` then `g^{T+1}`.
#[derive(Debug, Clone)]
pub struct CavityEngine<T: Real> {
    topology: Topology,
    model: SignalModel<T>,
    decider: Decider<T>,
    rule: UpdateRule<T>,
    config: EngineConfig,
    weights: Vec<Vec<T>>,
    actions: usize,
    observed_alphabet: usize,
    cavity: Vec<Vec<CavityTable<T>>>,
    decisions: Vec<Vec<DecisionTable<T>>>,
    stats: Vec<StepStats>,
}

impl<T: Real> CavityEngine<T> {
    pub fn new(
        topology: Topology,
        model: SignalModel<T>,
        decider: Decider<T>,
        rule: UpdateRule<T>,
        config: EngineConfig,
    ) -> Result<Self> {
        topology.validate()?;
        let states = model.num_states();
        if decider.utility().num_states() != states {
            return Err(Error::LengthMismatch(decider.utility().num_states(), states));
        }
        if topology.scenario_weights.is_empty()
            || topology.scenario_weights.iter().any(|w| w.len() != states)
        {
            return Err(Error::InvalidModel("scenario weights must have one entry per state".into()));
        }
        if let Some(p) = config.activation {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::InvalidActivation(p));
            }
            if topology.messages.iter().any(|m| matches!(m, MessageClass::Fixed { .. })) {
                return Err(Error::InvalidModel("hubs are not supported with inactive edges".into()));
            }
        }
        let actions = decider.num_actions();
        let weights = topology
            .scenario_weights
            .iter()
            .map(|row| row.iter().map(|&w| T::lit(w)).collect())
            .collect();
        let mut engine = Self {
            observed_alphabet: actions + usize::from(config.activation.is_some()),
            topology,
            model,
            decider,
            rule,
            config,
            weights,
            actions,
            cavity: Vec::new(),
            decisions: Vec::new(),
            stats: Vec::new(),
        };
        let g0 = (0..engine.topology.nodes.len())
            .map(|k| engine.initial_decisions(k))
            .collect::<Result<Vec<_>>>()?;
        engine.decisions.push(g0);
        Ok(engine)
    }

    /// The infinite `d`-regular tree.
    pub fn regular(d: usize, model: SignalModel<T>, decider: Decider<T>, rule: UpdateRule<T>) -> Result<Self> {
        let topology = Topology::regular(d, model.num_states());
        Self::new(topology, model, decider, rule, EngineConfig::default())
    }

    /// The configuration-model limit for node degree law `rho_v`.
    pub fn configuration(
        rho_v: &DegreeDistribution,
        model: SignalModel<T>,
        decider: Decider<T>,
        rule: UpdateRule<T>,
    ) -> Result<Self> {
        let topology = Topology::configuration(rho_v, model.num_states())?;
        Self::new(topology, model, decider, rule, EngineConfig::default())
    }

    /// A finite forest with per-node and per-edge tables.
    pub fn finite(graph: &TreeGraph, model: SignalModel<T>, decider: Decider<T>, rule: UpdateRule<T>) -> Result<Self> {
        let topology = Topology::finite(graph, model.num_states())?;
        Self::new(topology, model, decider, rule, EngineConfig::default())
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn model(&self) -> &SignalModel<T> {
        &self.model
    }

    pub fn decider(&self) -> &Decider<T> {
        &self.decider
    }

    pub fn rule(&self) -> &UpdateRule<T> {
        &self.rule
    }

    pub fn config(&self) -> EngineConfig {
        self.config
    }

    pub fn observed_alphabet(&self) -> usize {
        self.observed_alphabet
    }

    /// Largest `t` with `g^t` available.
    pub fn horizon(&self) -> usize {
        self.decisions.len() - 1
    }

    pub fn decision_table(&self, t: usize, node_class: usize) -> Option<&DecisionTable<T>> {
        self.decisions.get(t)?.get(node_class)
    }

    pub fn cavity_table(&self, t: usize, message: usize) -> Option<&CavityTable<T>> {
        self.cavity.get(t)?.get(message)
    }

    pub fn stats(&self) -> &[StepStats] {
        &self.stats
    }

    fn node_scope(&self, k: usize) -> Scope {
        match self.topology.nodes[k].node {
            Some(i) => Scope::Node(i),
            None if self.topology.homogeneous => Scope::Homogeneous,
            None => Scope::Class(k),
        }
    }

    fn message_scope(&self, m: usize) -> Scope {
        match self.topology.edges[m] {
            Some((sender, receiver)) => Scope::Edge { sender, receiver },
            None if self.topology.homogeneous => Scope::Homogeneous,
            None => Scope::Class(m),
        }
    }

    /// Entries allocated by the next advance from horizon `t`.
    pub fn estimate_entries(&self, t: usize) -> u128 {
        let x = self.model.num_signals() as u128;
        let b = self.observed_alphabet as u128;
        let a = self.actions as u128;
        let cs = (self.topology.scenarios() * self.model.num_states()) as u128;
        let pow = |base: u128, e: usize| base.checked_pow(e as u32).unwrap_or(u128::MAX);
        let mut total: u128 = 0;
        for m in &self.topology.messages {
            let tau = if m.conditioned() { pow(a, t) } else { 1 };
            total = total.saturating_add(cs.saturating_mul(tau).saturating_mul(pow(b, t + 1)));
        }
        for node in &self.topology.nodes {
            let inputs = pow(pow(b, t + 1), node.inputs.len());
            total = total.saturating_add(x.saturating_mul(inputs));
        }
        total
    }

    pub fn advance_to(&mut self, t: usize) -> Result<()> {
        while self.horizon() < t {
            self.advance()?;
        }
        Ok(())
    }

    /// Builds `Q^t` from `Q^{t-1}` and `g^t`, then `g^{t+1}` from `Q^t`
    /// and `g^t`, where `t` is the current horizon.
    pub fn advance(&mut self) -> Result<()> {
        let t = self.horizon();
        let needed = self.estimate_entries(t);
        if needed > self.config.budget {
            return Err(Error::BudgetExceeded {
                what: format!("tables for round {}", t + 1),
                needed,
                budget: self.config.budget,
            });
        }
        match checked_pow(self.actions, t + 2) {
            Some(n) if n < MIXED as usize => {}
            _ => {
                return Err(Error::BudgetExceeded {
                    what: format!("trajectory codes through round {}", t + 1),
                    needed: (self.actions as u128).saturating_pow(t as u32 + 2),
                    budget: MIXED as u128,
                })
            }
        }
        let mut stats = StepStats {
            horizon: t,
            ..StepStats::default()
        };
        let mut tables = Vec::with_capacity(self.topology.messages.len());
        for m in 0..self.topology.messages.len() {
            let table = self.cavity_step(m, t, &mut stats)?;
            stats.cavity_entries += table.len();
            tables.push(table);
        }
        if stats.drifted_slices > 0 {
            log::warn!(
                "round {t}: {} cavity slices drifted by up to {:.3e} before renormalization",
                stats.drifted_slices,
                stats.max_drift
            );
        }
        self.cavity.push(tables);
        let mut next = Vec::with_capacity(self.topology.nodes.len());
        for k in 0..self.topology.nodes.len() {
            let (table, products) = self.build_decisions(k, t + 1)?;
            stats.products += products;
            stats.decision_entries += table.len();
            next.push(table);
        }
        self.decisions.push(next);
        log::debug!("advanced to horizon {}: {stats:?}", t + 1);
        self.stats.push(stats);
        Ok(())
    }

    fn round_zero_kernel(&self, x: usize) -> Result<ActionKernel<T>> {
        match &self.rule {
            UpdateRule::Bayesian | UpdateRule::Majority => {
                self.decider.decide(&signal_posterior(&self.model, x)?, x)
            }
            UpdateRule::Custom(rule) => kernel_from_row(rule.kernel(0, x, &[]), self.actions),
        }
    }

    fn initial_decisions(&self, k: usize) -> Result<DecisionTable<T>> {
        let signals = self.model.num_signals();
        let mut table = DecisionTable {
            horizon: 0,
            scope: self.node_scope(k),
            signals,
            actions: self.actions,
            observed_alphabet: self.observed_alphabet,
            degree: self.topology.nodes[k].inputs.len(),
            codes: vec![0; signals],
            mixed: Default::default(),
        };
        for x in 0..signals {
            let outcomes: Outcomes<T> = self
                .round_zero_kernel(x)?
                .support()
                .into_iter()
                .map(|(a, p)| (a as u32, p))
                .collect();
            store(&mut table.codes[x], x, outcomes, &mut table.mixed);
        }
        Ok(table)
    }

    fn cavity_step(&self, m: usize, t: usize, stats: &mut StepStats) -> Result<CavityTable<T>> {
        let states = self.model.num_states();
        let scenarios = self.topology.scenarios();
        let message = &self.topology.messages[m];
        let mut table = CavityTable::zeros(
            t,
            self.message_scope(m),
            self.actions,
            self.observed_alphabet,
            states,
            scenarios,
            message.conditioned(),
        );
        let alternatives = match message {
            MessageClass::Fixed { codes, horizon } => {
                for (c, &code) in codes.iter().enumerate() {
                    let omega = fixed_prefix(code, *horizon, t, self.actions as u64) as usize;
                    for s in 0..states {
                        let start = table.slice_index(c, s, 0);
                        table.values[start + omega] = T::one();
                    }
                }
                return Ok(table);
            }
            MessageClass::Cavity { alternatives } => alternatives,
        };
        let n_tau = table.n_tau();
        let n_omega = table.n_omega();
        let results: Vec<(u64, f64)> = table
            .values
            .par_chunks_mut(n_omega)
            .enumerate()
            .map(|(slice, out)| {
                let tau = slice % n_tau;
                let s = (slice / n_tau) % states;
                let c = slice / (n_tau * states);
                self.cavity_slice(alternatives, t, c, s, tau, out)
            })
            .collect();
        for (products, drift) in results {
            stats.products += products;
            stats.max_drift = stats.max_drift.max(drift);
            if drift > DRIFT_REPORT {
                stats.drifted_slices += 1;
            }
        }
        Ok(table)
    }

    /// One `(c, s, tau)` slice of `Q^t`, renormalized in place. Returns the
    /// product count and the pre-renormalization drift.
    fn cavity_slice(
        &self,
        alternatives: &[Alternative],
        t: usize,
        c: usize,
        s: usize,
        tau: usize,
        out: &mut [T],
    ) -> (u64, f64) {
        let x_count = self.model.num_signals();
        let a = self.actions as u64;
        let b = self.observed_alphabet;
        let radix = b.pow(t as u32);
        let tau_mod = self.actions.pow(t.saturating_sub(1) as u32);
        let mut buf = CompensatedBuffer::zeros(out.len());
        let mut products = 0u64;
        let patterns: Vec<(u64, T)> = match self.config.activation {
            None => vec![(u64::MAX, T::one())],
            Some(p) => activation_patterns(t + 1, T::lit(p)),
        };
        for alt in alternatives {
            let w = T::lit(alt.weight);
            let node = &self.topology.nodes[alt.node];
            let g = &self.decisions[t][alt.node];
            let children: SmallVec<[(usize, usize); 8]> = node
                .inputs
                .iter()
                .enumerate()
                .filter(|&(slot, _)| Some(slot) != alt.parent_slot)
                .map(|(slot, &msg)| (x_count * radix.pow(slot as u32), msg))
                .collect();
            let tuples = if t == 0 { 1 } else { radix.pow(children.len() as u32) };
            let prev = if t == 0 { None } else { Some(&self.cavity[t - 1]) };
            for &(active, wa) in &patterns {
                let parent_offset = match alt.parent_slot {
                    Some(slot) if t > 0 => {
                        let seen = if self.config.activation.is_some() {
                            mask(tau as u64, t, a, active) as usize
                        } else {
                            tau
                        };
                        seen * x_count * radix.pow(slot as u32)
                    }
                    _ => 0,
                };
                for x in 0..x_count {
                    let px = self.model.likelihood(x, s);
                    if px == T::zero() {
                        continue;
                    }
                    let scale = w * wa * px;
                    let mut digits: SmallVec<[usize; 8]> = SmallVec::from_elem(0, children.len());
                    for tuple in 0..tuples {
                        let mut rest = tuple;
                        let mut idx = x + parent_offset;
                        for (d, &(stride, _)) in digits.iter_mut().zip(&children) {
                            *d = rest % radix;
                            rest /= radix;
                            idx += *d * stride;
                        }
                        for (sigma, q) in g.outcomes(idx) {
                            let mut prod = scale * q;
                            if let Some(prev) = prev {
                                let tau_child = sigma as usize % tau_mod;
                                for (&d, &(_, msg)) in digits.iter().zip(&children) {
                                    prod = prod * prev[msg].get(c, s, tau_child, d);
                                }
                                products += children.len() as u64;
                            }
                            if prod == T::zero() {
                                continue;
                            }
                            let omega = if self.config.activation.is_some() {
                                mask(sigma as u64, t + 1, a, active) as usize
                            } else {
                                sigma as usize
                            };
                            buf.add(omega, prod);
                        }
                    }
                }
            }
        }
        let values = buf.into_values();
        let total = values.iter().copied().collect::<CompensatedSum<T>>().value();
        let drift = (total - T::one()).abs().as_f64();
        for (o, v) in out.iter_mut().zip(values) {
            *o = if total > T::zero() { v / total } else { v };
        }
        (products, drift)
    }

    /// `g^t` for node class `k` from `g^{t-1}` and `Q^{t-1}`.
    fn build_decisions(&self, k: usize, t: usize) -> Result<(DecisionTable<T>, u64)> {
        let x_count = self.model.num_signals();
        let deg = self.topology.nodes[k].inputs.len();
        let radix = self.observed_alphabet.pow(t as u32);
        let len = x_count * radix.pow(deg as u32);
        let mut table = DecisionTable {
            horizon: t,
            scope: self.node_scope(k),
            signals: x_count,
            actions: self.actions,
            observed_alphabet: self.observed_alphabet,
            degree: deg,
            codes: vec![0; len],
            mixed: Default::default(),
        };
        let chunks: Vec<Result<(Vec<(usize, Vec<(u32, T)>)>, u64)>> = table
            .codes
            .par_chunks_mut(CHUNK)
            .enumerate()
            .map(|(chunk, codes)| {
                let mut mixed = Vec::new();
                let mut products = 0u64;
                for (offset, code) in codes.iter_mut().enumerate() {
                    let idx = chunk * CHUNK + offset;
                    let (outcomes, p) = self.decision_entry(k, t, idx)?;
                    products += p;
                    let mut local = std::collections::HashMap::new();
                    store(code, idx, outcomes, &mut local);
                    mixed.extend(local);
                }
                Ok((mixed, products))
            })
            .collect();
        let mut products = 0;
        for chunk in chunks {
            let (mixed, p) = chunk?;
            products += p;
            table.mixed.extend(mixed);
        }
        Ok((table, products))
    }

    fn decision_entry(&self, k: usize, t: usize, idx: usize) -> Result<(Outcomes<T>, u64)> {
        let x_count = self.model.num_signals();
        let inputs = &self.topology.nodes[k].inputs;
        let radix = self.observed_alphabet.pow(t as u32);
        let radix_prev = radix / self.observed_alphabet;
        let x = idx % x_count;
        let mut rest = idx / x_count;
        let mut omegas: SmallVec<[usize; 8]> = SmallVec::with_capacity(inputs.len());
        let mut prev_idx = 0;
        let mut stride = 1;
        for _ in inputs {
            let w = rest % radix;
            rest /= radix;
            omegas.push(w);
            prev_idx += (w % radix_prev) * stride;
            stride *= radix_prev;
        }
        let prev_idx = x + x_count * prev_idx;
        let mut out = Outcomes::new();
        let mut products = 0u64;
        let place = (self.actions as u32).pow(t as u32);
        for (sigma, q) in self.decisions[t - 1][k].outcomes(prev_idx) {
            let kernel = match &self.rule {
                UpdateRule::Bayesian => {
                    let tau = sigma as usize % self.actions.pow(t as u32 - 1);
                    let (posterior, p) = self.unnormalized_posterior(k, t - 1, x, tau, &omegas);
                    products += p;
                    let z: T = posterior.iter().copied().collect::<CompensatedSum<T>>().value();
                    if z > T::zero() {
                        let normalized: SmallVec<[T; 4]> = posterior.iter().map(|&v| v / z).collect();
                        self.decider.decide(&normalized, x)?
                    } else {
                        // unreachable input; any fixed choice is consistent
                        self.decider.decide(&signal_posterior(&self.model, x)?, x)?
                    }
                }
                UpdateRule::Majority => {
                    let b = self.observed_alphabet as u64;
                    let votes = omegas.iter().map(|&w| {
                        let v = digit(w as u64, t - 1, b) as usize;
                        (v < self.actions).then_some(v)
                    });
                    self.decider.majority(votes, x)?
                }
                UpdateRule::Custom(rule) => {
                    let observed = omegas
                        .iter()
                        .map(|&w| Trajectory::from_code(w as u64, t - 1, self.observed_alphabet))
                        .collect::<Result<Vec<_>>>()?;
                    kernel_from_row(rule.kernel(t, x, &observed), self.actions)?
                }
            };
            for (a, pa) in kernel.support() {
                out.push((sigma + a as u32 * place, q * pa));
            }
        }
        Ok((out, products))
    }

    /// `P(s) P(x | s) sum_c w_c(s) prod_j Q^h_j(omega_j | tau, s, c)` per
    /// state, with `omega` of horizon `h`.
    fn unnormalized_posterior(
        &self,
        k: usize,
        h: usize,
        x: usize,
        tau: usize,
        omegas: &[usize],
    ) -> (SmallVec<[T; 4]>, u64) {
        let inputs = &self.topology.nodes[k].inputs;
        let tables = &self.cavity[h];
        let mut products = 0u64;
        let post = (0..self.model.num_states())
            .map(|s| {
                let mut mix = CompensatedSum::new();
                for (c, w) in self.weights.iter().enumerate() {
                    let mut prod = w[s];
                    for (&msg, &omega) in inputs.iter().zip(omegas) {
                        prod = prod * tables[msg].get(c, s, tau, omega);
                    }
                    products += inputs.len() as u64;
                    mix.add(prod);
                }
                self.model.prior()[s] * self.model.likelihood(x, s) * mix.value()
            })
            .collect();
        (post, products)
    }

    /// Posterior of node class `k` given its signal and observed neighbor
    /// trajectories through `t - 1` (empty for `t = 0`).
    pub fn posterior(&self, k: usize, x: usize, observed: &[Trajectory]) -> Result<Vec<T>> {
        let inputs = &self.topology.nodes[k].inputs;
        if observed.is_empty() {
            return signal_posterior(&self.model, x);
        }
        if observed.len() != inputs.len() {
            return Err(Error::LengthMismatch(observed.len(), inputs.len()));
        }
        let h = observed[0].horizon();
        if h >= self.cavity.len() {
            return Err(Error::BeyondHorizon {
                requested: h + 1,
                available: self.cavity.len(),
            });
        }
        let prefixes: Vec<Trajectory> = observed
            .iter()
            .map(|o| if h == 0 { *o } else { o.prefix(h - 1) })
            .collect();
        let own = self.decisions[h][k].lookup(x, &prefixes)?;
        let [(sigma, _)] = own.as_slice() else {
            return Err(Error::StochasticRule("own trajectory is random".into()));
        };
        let tau = (sigma.code() % (self.actions as u64).pow(h as u32)) as usize;
        let omegas: Vec<usize> = observed.iter().map(|o| o.code() as usize).collect();
        let (post, _) = self.unnormalized_posterior(k, h, x, tau, &omegas);
        let z: T = post.iter().copied().collect::<CompensatedSum<T>>().value();
        if z <= T::zero() {
            return Err(Error::ImpossibleObservation);
        }
        Ok(post.iter().map(|&v| v / z).collect())
    }

    /// Error probability of node class `k` at round `t` under identity
    /// payoff, averaged over the prior.
    pub fn error_probability(&self, k: usize, t: usize) -> Result<T> {
        let by_state = self.error_by_state(k, t)?;
        Ok(by_state
            .iter()
            .zip(self.model.prior())
            .map(|(&e, &p)| e * p)
            .collect::<CompensatedSum<T>>()
            .value())
    }

    pub fn error_estimate(&self, k: usize, t: usize) -> Result<ErrorEstimate> {
        let (by_state, gap) = self.error_by_state_with_gap(k, t)?;
        let value = by_state
            .iter()
            .zip(self.model.prior())
            .map(|(&e, &p)| e * p)
            .collect::<CompensatedSum<T>>()
            .value()
            .as_f64();
        Ok(ErrorEstimate {
            value,
            by_state: [
                by_state.first().map_or(0.0, |v| v.as_f64()),
                by_state.get(1).map_or(0.0, |v| v.as_f64()),
            ],
            coupling_gap: gap,
            unreliable: value < UNRELIABLE_BELOW,
        })
    }

    /// `P(sigma_i(t) != s | s)` for every state `s`.
    pub fn error_by_state(&self, k: usize, t: usize) -> Result<Vec<T>> {
        self.error_by_state_with_gap(k, t).map(|(v, _)| v)
    }

    fn error_by_state_with_gap(&self, k: usize, t: usize) -> Result<(Vec<T>, f64)> {
        if self.actions != self.model.num_states() {
            return Err(Error::InvalidModel("error probability needs one action per state".into()));
        }
        if t > self.horizon() {
            return Err(Error::BeyondHorizon {
                requested: t,
                available: self.horizon(),
            });
        }
        let g = &self.decisions[t][k];
        let x_count = self.model.num_signals();
        let inputs = &self.topology.nodes[k].inputs;
        let radix = g.input_radix();
        let tau_mod = self.actions.pow(t.saturating_sub(1) as u32);
        let states = self.model.num_states();
        let mut by_state = Vec::with_capacity(states);
        let mut gap = 0.0f64;
        let tolerance = COUPLING_TOLERANCE.max(10.0 * T::SIMPLEX_TOLERANCE.as_f64());
        for s in 0..states {
            let mut err_s = CompensatedSum::new();
            for (c, w) in self.weights.iter().enumerate() {
                if w[s] == T::zero() {
                    continue;
                }
                // per chunk: (mass, error) for each signal
                let span = CHUNK * x_count;
                let partial: Vec<Vec<(T, T)>> = (0..g.len().div_ceil(span))
                    .into_par_iter()
                    .map(|chunk| {
                        let mut acc = vec![(CompensatedSum::new(), CompensatedSum::new()); x_count];
                        for idx in chunk * span..((chunk + 1) * span).min(g.len()) {
                            let x = idx % x_count;
                            let mut rest = idx / x_count;
                            let mut omegas: SmallVec<[usize; 8]> = SmallVec::new();
                            for _ in inputs {
                                omegas.push(rest % radix);
                                rest /= radix;
                            }
                            for (sigma, q) in g.outcomes(idx) {
                                let mut prod = q;
                                if t > 0 {
                                    let tau = sigma as usize % tau_mod;
                                    for (&msg, &omega) in inputs.iter().zip(&omegas) {
                                        prod = prod * self.cavity[t - 1][msg].get(c, s, tau, omega);
                                    }
                                }
                                acc[x].0.add(prod);
                                if digit(sigma as u64, t, self.actions as u64) as usize != s {
                                    acc[x].1.add(prod);
                                }
                            }
                        }
                        acc.into_iter().map(|(m, e)| (m.value(), e.value())).collect()
                    })
                    .collect();
                for x in 0..x_count {
                    let px = self.model.likelihood(x, s);
                    let mass = partial.iter().map(|p| p[x].0).collect::<CompensatedSum<T>>().value();
                    let err = partial.iter().map(|p| p[x].1).collect::<CompensatedSum<T>>().value();
                    if px > T::zero() {
                        let g = (mass - T::one()).abs().as_f64();
                        gap = gap.max(g);
                        if g > tolerance {
                            return Err(Error::CouplingMass { mass: mass.as_f64() });
                        }
                    }
                    err_s.add(w[s] * px * err);
                }
            }
            by_state.push(err_s.value());
        }
        Ok((by_state, gap))
    }
}

fn store<T: Real>(
    code: &mut u32,
    idx: usize,
    outcomes: Outcomes<T>,
    mixed: &mut std::collections::HashMap<usize, Vec<(u32, T)>>,
) {
    if outcomes.len() == 1 {
        *code = outcomes[0].0;
    } else {
        *code = MIXED;
        mixed.insert(idx, outcomes.into_vec());
    }
}

/// Activation bit patterns over `len` rounds with their probabilities,
/// zero-probability patterns dropped.
fn activation_patterns<T: Real>(len: usize, p: T) -> Vec<(u64, T)> {
    (0..1u64 << len)
        .map(|bits| {
            let on = bits.count_ones() as i32;
            (bits, p.powi(on) * (T::one() - p).powi(len as i32 - on))
        })
        .filter(|&(_, w)| w > T::zero())
        .collect()
}

/// Prefix through round `t` of a fixed trajectory known through `known`;
/// later rounds repeat the last known action. Nothing observable depends
/// on the padded rounds (see the hub locality check).
fn fixed_prefix(code: u64, known: usize, t: usize, base: u64) -> u64 {
    let mut out = code % base.pow(known.min(t) as u32 + 1);
    let last = digit(code, known, base);
    for r in known + 1..=t {
        out += last * base.pow(r as u32);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TieBreakRule;

    fn engine(d: usize, noise: f64, rule: UpdateRule<f64>) -> CavityEngine<f64> {
        let m = SignalModel::binary_symmetric(noise).unwrap();
        let dec = Decider::identity(&m, TieBreakRule::OwnSignal).unwrap();
        CavityEngine::regular(d, m, dec, rule).unwrap()
    }

    #[test]
    fn round_zero_error_is_noise() {
        let e = engine(5, 0.15, UpdateRule::Bayesian);
        assert!((e.error_probability(0, 0).unwrap() - 0.15).abs() < 1e-15);
    }

    #[test]
    fn q0_is_signal_law() {
        let mut e = engine(5, 0.15, UpdateRule::Bayesian);
        e.advance().unwrap();
        let q = e.cavity_table(0, 0).unwrap();
        assert!((q.get(0, 0, 0, 0) - 0.85).abs() < 1e-15);
        assert!((q.get(0, 0, 0, 1) - 0.15).abs() < 1e-15);
        assert!((q.get(0, 1, 0, 1) - 0.85).abs() < 1e-15);
    }

    #[test]
    fn round_one_posterior_with_unanimous_neighbors() {
        let mut e = engine(5, 0.15, UpdateRule::Bayesian);
        e.advance().unwrap();
        let plus = Trajectory::encode(&[0], 2).unwrap();
        let post = e.posterior(0, 0, &[plus; 5]).unwrap();
        let hi = 0.85f64.powi(6);
        let lo = 0.15f64.powi(6);
        assert!((post[0] - hi / (hi + lo)).abs() < 1e-12);
        assert!((post[0] - 0.999966).abs() < 1e-5);
    }

    #[test]
    fn fixed_prefix_pads_with_last_action() {
        let code = Trajectory::encode(&[1, 0], 2).unwrap().code();
        let padded = fixed_prefix(code, 1, 3, 2);
        assert_eq!(Trajectory::from_code(padded, 3, 2).unwrap().decode(), vec![1, 0, 0, 0]);
        assert_eq!(fixed_prefix(code, 1, 0, 2), 1);
    }

    #[test]
    fn budget_is_enforced() {
        let m = SignalModel::<f64>::binary_symmetric(0.15).unwrap();
        let dec = Decider::identity(&m, TieBreakRule::OwnSignal).unwrap();
        let topo = Topology::regular(5, 2);
        let config = EngineConfig {
            budget: 100,
            ..EngineConfig::default()
        };
        let mut e = CavityEngine::new(topo, m, dec, UpdateRule::Bayesian, config).unwrap();
        e.advance().unwrap();
        assert!(matches!(e.advance(), Err(Error::BudgetExceeded { .. })));
    }
}
