//! States, signals, actions, trajectories and the single-agent decision.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::num::Real;

/// An agent's action sequence for rounds `0..=horizon`, packed as a base-`|A|`
/// integer with round 0 in the least significant digit.
///
/// With that digit order the prefix through round `h` is `code mod |A|^(h+1)`
/// and appending a round is a single multiply-add.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Trajectory {
    code: u64,
    horizon: u32,
    alphabet: u32,
}

impl Trajectory {
    pub fn encode(seq: &[usize], alphabet: usize) -> Result<Self> {
        if seq.is_empty() {
            return Err(Error::InvalidModel("trajectory needs at least one round".into()));
        }
        if alphabet == 0 {
            return Err(Error::EmptyActionSet);
        }
        let mut code: u64 = 0;
        let mut place: u64 = 1;
        for (round, &a) in seq.iter().enumerate() {
            if a >= alphabet {
                return Err(Error::ActionOutOfRange { action: a, alphabet });
            }
            code = a
                .checked_mul(place as usize)
                .and_then(|v| code.checked_add(v as u64))
                .ok_or_else(|| Error::InvalidModel("trajectory code overflows u64".into()))?;
            if round + 1 < seq.len() {
                place = place
                    .checked_mul(alphabet as u64)
                    .ok_or_else(|| Error::InvalidModel("trajectory code overflows u64".into()))?;
            }
        }
        Ok(Self {
            code,
            horizon: (seq.len() - 1) as u32,
            alphabet: alphabet as u32,
        })
    }

    /// Builds a trajectory from an already packed code.
    pub fn from_code(code: u64, horizon: usize, alphabet: usize) -> Result<Self> {
        let bound = (alphabet as u128).pow(horizon as u32 + 1);
        if (code as u128) >= bound {
            return Err(Error::InvalidModel(format!(
                "code {code} does not fit horizon {horizon} over {alphabet} symbols"
            )));
        }
        Ok(Self {
            code,
            horizon: horizon as u32,
            alphabet: alphabet as u32,
        })
    }

    pub fn decode(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.horizon as usize + 1);
        let mut rest = self.code;
        for _ in 0..=self.horizon {
            out.push((rest % self.alphabet as u64) as usize);
            rest /= self.alphabet as u64;
        }
        out
    }

    pub fn code(&self) -> u64 {
        self.code
    }

    pub fn horizon(&self) -> usize {
        self.horizon as usize
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet as usize
    }

    /// Action at `round`.
    pub fn at(&self, round: usize) -> usize {
        assert!(round <= self.horizon as usize, "round beyond horizon");
        digit(self.code, round, self.alphabet as u64) as usize
    }

    /// The trajectory truncated to rounds `0..=horizon`.
    pub fn prefix(&self, horizon: usize) -> Trajectory {
        assert!(horizon <= self.horizon as usize, "prefix beyond horizon");
        Self {
            code: prefix_code(self.code, horizon + 1, self.alphabet as u64),
            horizon: horizon as u32,
            alphabet: self.alphabet,
        }
    }

    /// Appends the next round's action.
    pub fn extend(&self, action: usize) -> Result<Trajectory> {
        if action >= self.alphabet as usize {
            return Err(Error::ActionOutOfRange {
                action,
                alphabet: self.alphabet as usize,
            });
        }
        let mut seq = self.decode();
        seq.push(action);
        Self::encode(&seq, self.alphabet as usize)
    }
}

impl fmt::Display for Trajectory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.decode().iter().map(|a| a.to_string()).collect();
        write!(f, "[{}]", parts.join(","))
    }
}

/// Digit `round` of a packed code.
#[inline]
pub(crate) fn digit(code: u64, round: usize, base: u64) -> u64 {
    (code / base.pow(round as u32)) % base
}

/// First `len` digits of a packed code (`len = 0` gives the empty prefix, 0).
#[inline]
pub(crate) fn prefix_code(code: u64, len: usize, base: u64) -> u64 {
    code % base.pow(len as u32)
}

/// Prior over states and the conditional law `P(x | s)` of a private signal.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalModel<T> {
    prior: Vec<T>,
    /// `likelihood[s][x] = P(x | s)`.
    likelihood: Vec<Vec<T>>,
}

impl<T: Real> SignalModel<T> {
    pub fn new(prior: Vec<T>, likelihood: Vec<Vec<T>>) -> Result<Self> {
        if prior.is_empty() {
            return Err(Error::InvalidModel("no states".into()));
        }
        check_simplex(&prior, "prior")?;
        if likelihood.len() != prior.len() {
            return Err(Error::InvalidModel(format!(
                "{} likelihood rows for {} states",
                likelihood.len(),
                prior.len()
            )));
        }
        let signals = likelihood[0].len();
        if signals == 0 {
            return Err(Error::InvalidModel("no signals".into()));
        }
        for (s, row) in likelihood.iter().enumerate() {
            if row.len() != signals {
                return Err(Error::InvalidModel(format!("likelihood row {s} is ragged")));
            }
            check_simplex(row, &format!("likelihood row {s}"))?;
        }
        for a in 0..likelihood.len() {
            for b in a + 1..likelihood.len() {
                let same = likelihood[a]
                    .iter()
                    .zip(&likelihood[b])
                    .all(|(p, q)| (*p - *q).abs() <= T::SIMPLEX_TOLERANCE);
                if same {
                    return Err(Error::InvalidModel(format!(
                        "signal is uninformative between states {a} and {b}"
                    )));
                }
            }
        }
        Ok(Self { prior, likelihood })
    }

    /// Two states, two signals, uniform prior, each signal wrong with
    /// probability `noise`.
    pub fn binary_symmetric(noise: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&noise) {
            return Err(Error::InvalidModel(format!("noise {noise} outside [0, 1]")));
        }
        let n = T::lit(noise);
        let c = T::one() - n;
        let half = T::lit(0.5);
        Self::new(vec![half, half], vec![vec![c, n], vec![n, c]])
    }

    pub fn num_states(&self) -> usize {
        self.prior.len()
    }

    pub fn num_signals(&self) -> usize {
        self.likelihood[0].len()
    }

    pub fn prior(&self) -> &[T] {
        &self.prior
    }

    /// `P(x | s)`.
    #[inline]
    pub fn likelihood(&self, x: usize, s: usize) -> T {
        self.likelihood[s][x]
    }

    pub fn likelihood_rows(&self) -> &[Vec<T>] {
        &self.likelihood
    }

    pub fn signal_posterior(&self, x: usize) -> Result<Vec<T>> {
        signal_posterior(self, x)
    }
}

fn check_simplex<T: Real>(v: &[T], what: &str) -> Result<()> {
    if v.iter().any(|p| !(p.is_finite()) || *p < T::zero()) {
        return Err(Error::InvalidModel(format!("{what} has a negative or non-finite entry")));
    }
    let total: T = v.iter().copied().sum();
    if (total - T::one()).abs() > T::SIMPLEX_TOLERANCE {
        return Err(Error::InvalidModel(format!("{what} sums to {total}, not 1")));
    }
    Ok(())
}

/// Posterior over states after seeing only the private signal `x`.
pub fn signal_posterior<T: Real>(model: &SignalModel<T>, x: usize) -> Result<Vec<T>> {
    if x >= model.num_signals() {
        return Err(Error::SignalOutOfRange {
            signal: x,
            signals: model.num_signals(),
        });
    }
    let mut post: Vec<T> = (0..model.num_states())
        .map(|s| model.prior[s] * model.likelihood(x, s))
        .collect();
    let z: T = post.iter().copied().sum();
    if z <= T::zero() {
        return Err(Error::ImpossibleSignal(x));
    }
    for p in &mut post {
        *p = *p / z;
    }
    Ok(post)
}

/// Payoff `u(a, s)` for each action-state pair.
#[derive(Debug, Clone, PartialEq)]
pub struct UtilityTable<T> {
    /// `values[a][s]`.
    values: Vec<Vec<T>>,
}

impl<T: Real> UtilityTable<T> {
    pub fn new(values: Vec<Vec<T>>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyActionSet);
        }
        let states = values[0].len();
        for row in &values {
            if row.len() != states || row.iter().any(|u| !u.is_finite()) {
                return Err(Error::InvalidModel("utility table ragged or non-finite".into()));
            }
        }
        Ok(Self { values })
    }

    /// Actions are states; payoff one for the correct guess.
    pub fn identity(states: usize) -> Self {
        let values = (0..states)
            .map(|a| {
                (0..states)
                    .map(|s| if a == s { T::one() } else { T::zero() })
                    .collect()
            })
            .collect();
        Self { values }
    }

    pub fn num_actions(&self) -> usize {
        self.values.len()
    }

    pub fn num_states(&self) -> usize {
        self.values[0].len()
    }

    pub fn value(&self, action: usize, state: usize) -> T {
        self.values[action][state]
    }

    pub fn is_identity(&self) -> bool {
        self.num_actions() == self.num_states()
            && self.values.iter().enumerate().all(|(a, row)| {
                row.iter().enumerate().all(|(s, u)| {
                    if a == s {
                        *u == T::one()
                    } else {
                        *u == T::zero()
                    }
                })
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TieBreakRule {
    /// Pick the action corresponding to the agent's private signal when it
    /// is among the tied actions; otherwise the lowest tied index.
    #[default]
    OwnSignal,
    LowestIndex,
    /// Uniform over the tied set.
    #[serde(rename = "uniform")]
    UniformRandom,
}

impl TieBreakRule {
    pub fn is_deterministic(&self) -> bool {
        !matches!(self, TieBreakRule::UniformRandom)
    }
}

/// Distribution over actions. Deterministic decisions are `Pure`.
#[derive(Debug, Clone, PartialEq)]
pub enum ActionKernel<T> {
    Pure(usize),
    Mixed(Vec<(usize, T)>),
}

impl<T: Real> ActionKernel<T> {
    pub fn probability(&self, action: usize) -> T {
        match self {
            ActionKernel::Pure(a) => {
                if *a == action {
                    T::one()
                } else {
                    T::zero()
                }
            }
            ActionKernel::Mixed(v) => v
                .iter()
                .filter(|(a, _)| *a == action)
                .map(|(_, p)| *p)
                .sum(),
        }
    }

    pub fn support(&self) -> SmallVec<[(usize, T); 2]> {
        match self {
            ActionKernel::Pure(a) => smallvec::smallvec![(*a, T::one())],
            ActionKernel::Mixed(v) => v.iter().copied().collect(),
        }
    }
}

/// Resolves a tied set of actions.
pub fn resolve_ties<T: Real>(
    tied: &[usize],
    tie_break: TieBreakRule,
    own_signal: usize,
    signal_action: Option<&[usize]>,
) -> Result<ActionKernel<T>> {
    match tied {
        [] => Err(Error::EmptyActionSet),
        [a] => Ok(ActionKernel::Pure(*a)),
        _ => match tie_break {
            TieBreakRule::LowestIndex => Ok(ActionKernel::Pure(tied[0])),
            TieBreakRule::OwnSignal => {
                let map = signal_action.ok_or(Error::MissingSignalCorrespondence)?;
                let own = *map.get(own_signal).ok_or(Error::SignalOutOfRange {
                    signal: own_signal,
                    signals: map.len(),
                })?;
                if tied.contains(&own) {
                    Ok(ActionKernel::Pure(own))
                } else {
                    Ok(ActionKernel::Pure(tied[0]))
                }
            }
            TieBreakRule::UniformRandom => {
                let p = T::one() / T::lit(tied.len() as f64);
                Ok(ActionKernel::Mixed(tied.iter().map(|&a| (a, p)).collect()))
            }
        },
    }
}

/// Expected-utility maximizing action under `posterior`, with ties (utility
/// gaps within [`Real::TIE_TOLERANCE`]) resolved by `tie_break`.
pub fn map_decision<T: Real>(
    posterior: &[T],
    utility: &UtilityTable<T>,
    tie_break: TieBreakRule,
    own_signal: usize,
    signal_action: Option<&[usize]>,
) -> Result<ActionKernel<T>> {
    if utility.num_actions() == 0 {
        return Err(Error::EmptyActionSet);
    }
    if posterior.len() != utility.num_states() {
        return Err(Error::LengthMismatch(posterior.len(), utility.num_states()));
    }
    let total: T = posterior.iter().copied().sum();
    if (total - T::one()).abs() > T::lit(1e-9).max(T::SIMPLEX_TOLERANCE) {
        return Err(Error::InvalidModel(format!("posterior sums to {total}")));
    }
    let eu: SmallVec<[T; 4]> = (0..utility.num_actions())
        .map(|a| {
            posterior
                .iter()
                .enumerate()
                .fold(T::zero(), |acc, (s, p)| acc + utility.value(a, s) * *p)
        })
        .collect();
    let best = eu.iter().copied().fold(T::neg_infinity(), T::max);
    let tied: SmallVec<[usize; 4]> = eu
        .iter()
        .enumerate()
        .filter(|(_, u)| best - **u <= T::TIE_TOLERANCE)
        .map(|(a, _)| a)
        .collect();
    resolve_ties(&tied, tie_break, own_signal, signal_action)
}

/// Payoff, tie-break rule and signal-to-action correspondence shared by all
/// agents.
#[derive(Debug, Clone, PartialEq)]
pub struct Decider<T> {
    utility: UtilityTable<T>,
    tie_break: TieBreakRule,
    signal_action: Option<Vec<usize>>,
}

impl<T: Real> Decider<T> {
    pub fn new(
        utility: UtilityTable<T>,
        tie_break: TieBreakRule,
        signal_action: Option<Vec<usize>>,
    ) -> Result<Self> {
        if let Some(map) = &signal_action {
            if let Some(&a) = map.iter().find(|&&a| a >= utility.num_actions()) {
                return Err(Error::ActionOutOfRange {
                    action: a,
                    alphabet: utility.num_actions(),
                });
            }
        }
        if tie_break == TieBreakRule::OwnSignal && signal_action.is_none() {
            return Err(Error::MissingSignalCorrespondence);
        }
        Ok(Self {
            utility,
            tie_break,
            signal_action,
        })
    }

    /// Identity payoff over the model's states. Signal `k` corresponds to
    /// action `k` whenever there are as many signals as states.
    pub fn identity(model: &SignalModel<T>, tie_break: TieBreakRule) -> Result<Self> {
        let states = model.num_states();
        let map = (model.num_signals() == states).then(|| (0..states).collect());
        Self::new(UtilityTable::identity(states), tie_break, map)
    }

    pub fn utility(&self) -> &UtilityTable<T> {
        &self.utility
    }

    pub fn tie_break(&self) -> TieBreakRule {
        self.tie_break
    }

    pub fn signal_action(&self) -> Option<&[usize]> {
        self.signal_action.as_deref()
    }

    pub fn num_actions(&self) -> usize {
        self.utility.num_actions()
    }

    pub fn decide(&self, posterior: &[T], own_signal: usize) -> Result<ActionKernel<T>> {
        map_decision(
            posterior,
            &self.utility,
            self.tie_break,
            own_signal,
            self.signal_action.as_deref(),
        )
    }

    pub fn break_tie(&self, tied: &[usize], own_signal: usize) -> Result<ActionKernel<T>> {
        resolve_ties(tied, self.tie_break, own_signal, self.signal_action.as_deref())
    }

    /// Plurality of the neighbors' most recent visible votes; `None` entries
    /// (unobserved rounds) are skipped. With no visible vote every action ties.
    pub fn majority<I>(&self, votes: I, own_signal: usize) -> Result<ActionKernel<T>>
    where
        I: IntoIterator<Item = Option<usize>>,
    {
        let mut counts: SmallVec<[usize; 4]> = smallvec::smallvec![0; self.num_actions()];
        for a in votes.into_iter().flatten() {
            counts[a] += 1;
        }
        let top = counts.iter().copied().max().unwrap_or(0);
        let tied: SmallVec<[usize; 4]> = (0..counts.len()).filter(|&a| counts[a] == top).collect();
        self.break_tie(&tied, own_signal)
    }
}

/// A caller-supplied stochastic update rule.
pub trait CustomRule<T>: Send + Sync {
    /// Distribution over actions at `round` given the own signal and the
    /// neighbors' observed trajectories through `round - 1` (empty at round 0).
    fn kernel(&self, round: usize, signal: usize, observed: &[Trajectory]) -> Vec<T>;
}

#[derive(Clone)]
pub enum UpdateRule<T> {
    Bayesian,
    /// Plurality of neighbors' previous votes; the round-0 vote is the MAP
    /// action of the own signal.
    Majority,
    Custom(Arc<dyn CustomRule<T>>),
}

impl<T> fmt::Debug for UpdateRule<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl<T> UpdateRule<T> {
    pub fn name(&self) -> &'static str {
        match self {
            UpdateRule::Bayesian => "bayesian",
            UpdateRule::Majority => "majority",
            UpdateRule::Custom(_) => "custom",
        }
    }
}

impl<T: Real> UpdateRule<T> {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "bayesian" | "bayes" => Ok(UpdateRule::Bayesian),
            "majority" => Ok(UpdateRule::Majority),
            other => Err(Error::InvalidModel(format!("unknown rule {other:?}"))),
        }
    }
}

/// Validates a custom kernel row and packs it as an [`ActionKernel`].
pub(crate) fn kernel_from_row<T: Real>(row: Vec<T>, actions: usize) -> Result<ActionKernel<T>> {
    if row.len() != actions {
        return Err(Error::LengthMismatch(row.len(), actions));
    }
    check_simplex(&row, "custom kernel row")?;
    let support: Vec<(usize, T)> = row
        .into_iter()
        .enumerate()
        .filter(|(_, p)| *p > T::zero())
        .collect();
    Ok(match support.as_slice() {
        [(a, _)] => ActionKernel::Pure(*a),
        _ => ActionKernel::Mixed(support),
    })
}

/// JSON model description.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub states: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signals: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub likelihood: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub tie_break: TieBreakRule,
    /// Shorthand for the binary symmetric model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<f64>,
}

impl ModelConfig {
    pub fn binary_symmetric(noise: f64) -> Self {
        Self {
            noise: Some(noise),
            ..Self::default()
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn build<T: Real>(&self) -> Result<(SignalModel<T>, Decider<T>)> {
        let model = match (&self.likelihood, self.noise) {
            (Some(rows), _) => {
                let states = self.states.unwrap_or(rows.len());
                if states != rows.len() {
                    return Err(Error::InvalidModel("states disagrees with likelihood rows".into()));
                }
                if let Some(signals) = self.signals {
                    if rows.iter().any(|r| r.len() != signals) {
                        return Err(Error::InvalidModel("signals disagrees with likelihood".into()));
                    }
                }
                let prior = match &self.prior {
                    Some(p) => p.iter().map(|v| T::lit(*v)).collect(),
                    None => vec![T::one() / T::lit(states as f64); states],
                };
                let rows = rows
                    .iter()
                    .map(|r| r.iter().map(|v| T::lit(*v)).collect())
                    .collect();
                SignalModel::new(prior, rows)?
            }
            (None, Some(noise)) => {
                if self.states.is_some_and(|s| s != 2) || self.signals.is_some_and(|s| s != 2) {
                    return Err(Error::InvalidModel("noise shorthand is binary only".into()));
                }
                let m = SignalModel::<T>::binary_symmetric(noise)?;
                match &self.prior {
                    Some(p) => SignalModel::new(
                        p.iter().map(|v| T::lit(*v)).collect(),
                        m.likelihood_rows().to_vec(),
                    )?,
                    None => m,
                }
            }
            (None, None) => {
                return Err(Error::InvalidModel("need either likelihood or noise".into()))
            }
        };
        let decider = Decider::identity(&model, self.tie_break)?;
        Ok((model, decider))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn single_entry_trajectory() {
        let t = Trajectory::encode(&[1], 2).unwrap();
        assert_eq!(t.code(), 1);
        assert_eq!(t.horizon(), 0);
    }

    #[test]
    fn roundtrip_and_prefix() {
        let t = Trajectory::encode(&[0, 1, 1], 2).unwrap();
        assert_eq!(t.decode(), vec![0, 1, 1]);
        assert_eq!(t.prefix(1).decode(), vec![0, 1]);
        assert_eq!(t.prefix(1), Trajectory::encode(&[0, 1], 2).unwrap());
        assert_eq!(t.extend(0).unwrap().decode(), vec![0, 1, 1, 0]);
    }

    #[test]
    fn encode_rejects_out_of_alphabet() {
        assert!(matches!(
            Trajectory::encode(&[0, 2], 2),
            Err(Error::ActionOutOfRange { action: 2, alphabet: 2 })
        ));
        assert!(Trajectory::from_code(8, 2, 2).is_err());
    }

    #[test]
    fn exhaustive_roundtrip_small_alphabets() {
        for alphabet in [2usize, 3] {
            for horizon in 0..=12usize {
                let count = alphabet.pow(horizon as u32 + 1) as u64;
                for code in 0..count {
                    let t = Trajectory::from_code(code, horizon, alphabet).unwrap();
                    let seq = t.decode();
                    let back = Trajectory::encode(&seq, alphabet).unwrap();
                    assert_eq!(back, t);
                    if horizon > 0 {
                        let p = t.prefix(horizon - 1);
                        assert_eq!(p.decode(), seq[..horizon].to_vec());
                    }
                }
            }
        }
    }

    #[test]
    fn map_decision_strict_argmax() {
        let u = UtilityTable::<f64>::identity(2);
        let k = map_decision(&[0.7, 0.3], &u, TieBreakRule::OwnSignal, 1, Some(&[0, 1])).unwrap();
        assert_eq!(k, ActionKernel::Pure(0));
    }

    #[test]
    fn map_decision_tie_rules() {
        let u = UtilityTable::<f64>::identity(2);
        let own = map_decision(&[0.5, 0.5], &u, TieBreakRule::OwnSignal, 1, Some(&[0, 1])).unwrap();
        assert_eq!(own, ActionKernel::Pure(1));
        let low = map_decision(&[0.5, 0.5], &u, TieBreakRule::LowestIndex, 1, None).unwrap();
        assert_eq!(low, ActionKernel::Pure(0));
        let uni = map_decision(&[0.5, 0.5], &u, TieBreakRule::UniformRandom, 1, None).unwrap();
        assert_eq!(uni, ActionKernel::Mixed(vec![(0, 0.5), (1, 0.5)]));
        assert!(matches!(
            map_decision(&[0.5, 0.5], &u, TieBreakRule::OwnSignal, 1, None),
            Err(Error::MissingSignalCorrespondence)
        ));
    }

    #[test]
    fn map_decision_near_tie_uses_tolerance() {
        let u = UtilityTable::<f64>::identity(2);
        let k = map_decision(&[0.5 + 1e-14, 0.5 - 1e-14], &u, TieBreakRule::OwnSignal, 1, Some(&[0, 1]))
            .unwrap();
        assert_eq!(k, ActionKernel::Pure(1));
        let k = map_decision(&[0.5 + 1e-9, 0.5 - 1e-9], &u, TieBreakRule::OwnSignal, 1, Some(&[0, 1]))
            .unwrap();
        assert_eq!(k, ActionKernel::Pure(0));
    }

    #[test]
    fn map_decision_concentrated_posterior() {
        for states in 2..6 {
            let u = UtilityTable::<f64>::identity(states);
            for k in 0..states {
                let mut post = vec![0.0; states];
                post[k] = 1.0;
                let d = map_decision(&post, &u, TieBreakRule::LowestIndex, 0, None).unwrap();
                assert_eq!(d, ActionKernel::Pure(k));
            }
        }
    }

    #[test]
    fn general_payoff_picks_safe_action() {
        // Action 2 hedges: it pays 0.6 in either state.
        let u = UtilityTable::new(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.6, 0.6]]).unwrap();
        let d = map_decision(&[0.55, 0.45], &u, TieBreakRule::LowestIndex, 0, None).unwrap();
        assert_eq!(d, ActionKernel::Pure(2));
        let d = map_decision(&[0.9, 0.1], &u, TieBreakRule::LowestIndex, 0, None).unwrap();
        assert_eq!(d, ActionKernel::Pure(0));
    }

    #[test]
    fn empty_utility_rejected() {
        assert!(matches!(
            UtilityTable::<f64>::new(vec![]),
            Err(Error::EmptyActionSet)
        ));
    }

    #[test]
    fn signal_posterior_examples() {
        let m = SignalModel::<f64>::binary_symmetric(0.15).unwrap();
        let p = m.signal_posterior(0).unwrap();
        assert_abs_diff_eq!(p[0], 0.85, epsilon = 1e-15);
        assert_abs_diff_eq!(p[1], 0.15, epsilon = 1e-15);

        let m = SignalModel::<f64>::new(vec![0.5, 0.5], vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(m.signal_posterior(0).unwrap(), vec![1.0, 0.0]);

        // prior (0.9, 0.1), signal "−" (index 1): (0.9*0.15, 0.1*0.85) normalized
        let m = SignalModel::<f64>::new(vec![0.9, 0.1], vec![vec![0.85, 0.15], vec![0.15, 0.85]])
            .unwrap();
        let p = m.signal_posterior(1).unwrap();
        let z = 0.9 * 0.15 + 0.1 * 0.85;
        assert_abs_diff_eq!(p[0], 0.135 / z, epsilon = 1e-15);
        assert_abs_diff_eq!(p[0], 0.6136, epsilon = 1e-4);
        assert_abs_diff_eq!(p[1], 0.3864, epsilon = 1e-4);
    }

    #[test]
    fn signal_posterior_errors() {
        let m = SignalModel::<f64>::new(
            vec![0.5, 0.5],
            vec![vec![0.5, 0.5, 0.0], vec![0.25, 0.75, 0.0]],
        )
        .unwrap();
        assert!(matches!(m.signal_posterior(2), Err(Error::ImpossibleSignal(2))));
        assert!(matches!(m.signal_posterior(3), Err(Error::SignalOutOfRange { .. })));
    }

    #[test]
    fn flip_symmetry_of_binary_posterior() {
        for noise in [0.05, 0.15, 0.3, 0.45] {
            let m = SignalModel::<f64>::binary_symmetric(noise).unwrap();
            let a = m.signal_posterior(0).unwrap();
            let b = m.signal_posterior(1).unwrap();
            assert_eq!(a[0], b[1]);
            assert_eq!(a[1], b[0]);
        }
    }

    #[test]
    fn model_invariants_enforced() {
        assert!(SignalModel::<f64>::new(vec![0.6, 0.6], vec![vec![1.0], vec![1.0]]).is_err());
        assert!(SignalModel::<f64>::new(vec![0.5, 0.5], vec![vec![0.9, 0.1], vec![0.9, 0.1]]).is_err());
        assert!(SignalModel::<f64>::new(vec![0.5, 0.5], vec![vec![0.9, 0.2], vec![0.1, 0.9]]).is_err());
    }

    #[test]
    fn majority_plurality_and_ties() {
        let m = SignalModel::<f64>::binary_symmetric(0.2).unwrap();
        let d = Decider::identity(&m, TieBreakRule::OwnSignal).unwrap();
        assert_eq!(d.majority([Some(0), Some(0), Some(1)], 1).unwrap(), ActionKernel::Pure(0));
        assert_eq!(d.majority([Some(0), Some(1)], 1).unwrap(), ActionKernel::Pure(1));
        assert_eq!(d.majority([None, None], 0).unwrap(), ActionKernel::Pure(0));
    }

    #[test]
    fn config_json_builds_models() {
        let cfg = ModelConfig::from_json(r#"{"noise": 0.15, "tie_break": "own_signal"}"#).unwrap();
        let (m, d) = cfg.build::<f64>().unwrap();
        assert_eq!(m.num_states(), 2);
        assert_eq!(d.tie_break(), TieBreakRule::OwnSignal);

        let cfg = ModelConfig::from_json(
            r#"{"states": 2, "signals": 3, "prior": [0.4, 0.6],
                "likelihood": [[0.7, 0.2, 0.1], [0.1, 0.2, 0.7]], "tie_break": "uniform"}"#,
        )
        .unwrap();
        let (m, d) = cfg.build::<f32>().unwrap();
        assert_eq!(m.num_signals(), 3);
        assert_eq!(d.tie_break(), TieBreakRule::UniformRandom);
        assert!(d.signal_action().is_none());

        // own-signal ties need a correspondence, which 3 signals over 2 states lack
        let cfg = ModelConfig::from_json(
            r#"{"likelihood": [[0.7, 0.2, 0.1], [0.1, 0.2, 0.7]], "tie_break": "own_signal"}"#,
        )
        .unwrap();
        assert!(cfg.build::<f64>().is_err());
    }
}
