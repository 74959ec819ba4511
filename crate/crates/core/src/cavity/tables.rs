//! Dense cavity tables (Q) and trajectory-evaluation tables (g).

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use smallvec::{smallvec, SmallVec};

use crate::error::{Error, Result};
use crate::model::Trajectory;
use crate::num::{compensated_sum, Real};

/// Marks a decision-table entry whose outcome is a kernel.
pub const MIXED: u32 = u32::MAX;

/// What a table describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scope {
    /// Every edge or node of an infinite homogeneous graph.
    Homogeneous,
    /// The message from `sender` to `receiver` of a finite graph.
    Edge { sender: usize, receiver: usize },
    /// A finite graph node.
    Node(usize),
    /// A message or node class with no graph counterpart (hubs).
    Class(usize),
}

/// `Q^t(omega | tau, s, c)`: law of the sender's observed trajectory `omega`
/// (horizon `t`) when the receiver is a zombie playing `tau` (horizon
/// `t - 1`), per state `s` and hub scenario `c`.
///
/// Values are stored as `[c][s][tau][omega]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: serde::de::DeserializeOwned"))]
pub struct CavityTable<T> {
    pub horizon: usize,
    pub scope: Scope,
    pub actions: usize,
    /// Alphabet of `omega`: the actions, plus the inactive marker when
    /// edges may be inactive.
    pub observed_alphabet: usize,
    pub states: usize,
    pub scenarios: usize,
    /// `false` when the sender does not observe the receiver, in which case
    /// there is a single `tau` slot.
    pub conditioned: bool,
    pub values: Vec<T>,
}

impl<T: Real> CavityTable<T> {
    pub(crate) fn zeros(
        horizon: usize,
        scope: Scope,
        actions: usize,
        observed_alphabet: usize,
        states: usize,
        scenarios: usize,
        conditioned: bool,
    ) -> Self {
        let mut table = Self {
            horizon,
            scope,
            actions,
            observed_alphabet,
            states,
            scenarios,
            conditioned,
            values: Vec::new(),
        };
        table.values = vec![T::zero(); table.len()];
        table
    }

    pub fn n_tau(&self) -> usize {
        if self.conditioned {
            self.actions.pow(self.horizon as u32)
        } else {
            1
        }
    }

    pub fn n_omega(&self) -> usize {
        self.observed_alphabet.pow(self.horizon as u32 + 1)
    }

    pub fn len(&self) -> usize {
        self.scenarios * self.states * self.n_tau() * self.n_omega()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn slice_index(&self, c: usize, s: usize, tau: usize) -> usize {
        ((c * self.states + s) * self.n_tau() + tau) * self.n_omega()
    }

    #[inline]
    pub fn get(&self, c: usize, s: usize, tau: usize, omega: usize) -> T {
        let tau = if self.conditioned { tau } else { 0 };
        self.values[self.slice_index(c, s, tau) + omega]
    }

    pub fn slice(&self, c: usize, s: usize, tau: usize) -> &[T] {
        let start = self.slice_index(c, s, tau);
        &self.values[start..start + self.n_omega()]
    }

    /// Entry for trajectories given as values (scenario 0).
    pub fn entry(&self, omega: &Trajectory, tau: Option<&Trajectory>, s: usize) -> Result<T> {
        if omega.horizon() != self.horizon || omega.alphabet() != self.observed_alphabet {
            return Err(Error::MissingEntry(format!("observed trajectory {omega}")));
        }
        let tau = if !self.conditioned || self.horizon == 0 {
            0
        } else {
            match tau {
                Some(t) if t.horizon() + 1 == self.horizon && t.alphabet() == self.actions => t.code() as usize,
                _ => return Err(Error::MissingEntry("zombie trajectory".into())),
            }
        };
        if s >= self.states {
            return Err(Error::MissingEntry(format!("state {s}")));
        }
        Ok(self.get(0, s, tau, omega.code() as usize))
    }

    /// Largest `|sum_omega Q - 1|` over all slices.
    pub fn normalization_gap(&self) -> f64 {
        self.values
            .chunks(self.n_omega())
            .map(|slice| (compensated_sum(slice.iter().copied()).as_f64() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Largest gap between this table summed over its last round and
    /// `prev`, the table one horizon earlier.
    pub fn marginalization_gap(&self, prev: &CavityTable<T>) -> f64 {
        assert_eq!(prev.horizon + 1, self.horizon);
        let b = self.observed_alphabet;
        let a = self.actions;
        let n_prev = prev.n_omega();
        let mut gap = 0.0f64;
        for c in 0..self.scenarios {
            for s in 0..self.states {
                for tau in 0..self.n_tau() {
                    let tau_prev = if prev.conditioned { tau % a.pow(prev.horizon as u32) } else { 0 };
                    let here = self.slice(c, s, tau);
                    let there = prev.slice(c, s, tau_prev);
                    for (omega, &q) in there.iter().enumerate() {
                        let sum = compensated_sum((0..b).map(|d| here[omega + d * n_prev]));
                        gap = gap.max((sum - q).abs().as_f64());
                    }
                }
            }
        }
        gap
    }
}

/// Outcome of one decision-table entry: own trajectory codes with their
/// probabilities.
pub type Outcomes<T> = SmallVec<[(u32, T); 2]>;

/// `g^t(x, omega_1..omega_k)`: own trajectory through round `t` given the
/// private signal and the observed neighbor trajectories through `t - 1`.
///
/// The input index is `x + X * sum_k omega_k * (B^t)^k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: serde::de::DeserializeOwned"))]
pub struct DecisionTable<T> {
    pub horizon: usize,
    pub scope: Scope,
    pub signals: usize,
    pub actions: usize,
    pub observed_alphabet: usize,
    pub degree: usize,
    /// Packed own trajectory, or [`MIXED`].
    pub codes: Vec<u32>,
    pub mixed: HashMap<usize, Vec<(u32, T)>>,
}

impl<T: Real> DecisionTable<T> {
    /// Number of values of one observed trajectory input.
    pub fn input_radix(&self) -> usize {
        self.observed_alphabet.pow(self.horizon as u32)
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn index(&self, x: usize, observed: &[u64]) -> usize {
        let radix = self.input_radix();
        let mut idx = 0usize;
        for &w in observed.iter().rev() {
            idx = idx * radix + w as usize;
        }
        x + self.signals * idx
    }

    #[inline]
    pub fn outcomes(&self, idx: usize) -> Outcomes<T> {
        match self.codes[idx] {
            MIXED => self.mixed[&idx].iter().copied().collect(),
            code => smallvec![(code, T::one())],
        }
    }

    /// Own trajectory (or kernel over trajectories) for the given inputs.
    pub fn lookup(&self, x: usize, observed: &[Trajectory]) -> Result<Vec<(Trajectory, T)>> {
        if x >= self.signals {
            return Err(Error::SignalOutOfRange {
                signal: x,
                signals: self.signals,
            });
        }
        if observed.len() != self.degree {
            return Err(Error::LengthMismatch(observed.len(), self.degree));
        }
        if self.horizon > 0
            && observed
                .iter()
                .any(|o| o.horizon() + 1 != self.horizon || o.alphabet() != self.observed_alphabet)
        {
            return Err(Error::MissingEntry("observed trajectories do not match the table".into()));
        }
        let codes: Vec<u64> = observed.iter().map(|o| if self.horizon == 0 { 0 } else { o.code() }).collect();
        let idx = self.index(x, &codes);
        self.outcomes(idx)
            .into_iter()
            .map(|(c, p)| Ok((Trajectory::from_code(c as u64, self.horizon, self.actions)?, p)))
            .collect()
    }

    pub fn is_deterministic(&self) -> bool {
        self.mixed.is_empty()
    }
}

/// Replaces inactive rounds of `code` (over `base`, `len` digits) by the
/// marker digit `base`. Bit `r` of `active` is round `r`.
#[inline]
pub(crate) fn mask(code: u64, len: usize, base: u64, active: u64) -> u64 {
    let mut out = 0u64;
    let mut place = 1u64;
    let mut rest = code;
    for r in 0..len {
        let d = rest % base;
        rest /= base;
        let v = if (active >> r) & 1 == 1 { d } else { base };
        out += v * place;
        place *= base + 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_replaces_inactive_rounds() {
        // [1, 0, 1] over {0, 1}, round 1 inactive -> [1, 2, 1] over {0, 1, 2}
        let code = Trajectory::encode(&[1, 0, 1], 2).unwrap().code();
        let m = mask(code, 3, 2, 0b101);
        assert_eq!(Trajectory::from_code(m, 2, 3).unwrap().decode(), vec![1, 2, 1]);
        assert_eq!(mask(code, 3, 2, 0b111), Trajectory::encode(&[1, 0, 1], 3).unwrap().code());
    }

    #[test]
    fn cavity_table_layout() {
        let t = CavityTable::<f64>::zeros(2, Scope::Homogeneous, 2, 2, 2, 1, true);
        assert_eq!(t.n_tau(), 4);
        assert_eq!(t.n_omega(), 8);
        assert_eq!(t.len(), 64);
        assert_eq!(t.slice_index(0, 1, 3), (4 + 3) * 8);
    }

    #[test]
    fn decision_index_is_little_endian_in_slots() {
        let g = DecisionTable::<f64> {
            horizon: 2,
            scope: Scope::Homogeneous,
            signals: 2,
            actions: 2,
            observed_alphabet: 2,
            degree: 2,
            codes: vec![0; 2 * 16],
            mixed: HashMap::new(),
        };
        assert_eq!(g.index(1, &[3, 2]), 1 + 2 * (3 + 4 * 2));
    }
}
