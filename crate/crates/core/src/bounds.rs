//! Majority-dynamics error recursions, the Chernoff envelope and
//! convergence-rate diagnostics.

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::num::{compensated_sum, Real};

/// Relative slack allowed in [`conjecture_check`].
pub const CONJECTURE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundVariant {
    Directed,
    Undirected,
    ChernoffEnvelope,
}

impl BoundVariant {
    pub fn name(self) -> &'static str {
        match self {
            BoundVariant::Directed => "directed",
            BoundVariant::Undirected => "undirected",
            BoundVariant::ChernoffEnvelope => "chernoff-envelope",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "directed" => Ok(BoundVariant::Directed),
            "undirected" => Ok(BoundVariant::Undirected),
            "chernoff-envelope" | "chernoff" => Ok(BoundVariant::ChernoffEnvelope),
            other => Err(Error::InvalidBound(format!("unknown bound variant {other:?}"))),
        }
    }
}

impl fmt::Display for BoundVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundSequence<T> {
    pub variant: BoundVariant,
    pub d: usize,
    pub delta0: T,
    /// `values[t]` for `t = 0..=rounds`.
    pub values: Vec<T>,
}

/// Outcome of a majority vote over `-1/+1` votes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VoteKernel {
    Decided(i8),
    /// A tie, broken by an unbiased coin.
    FairCoin,
}

impl VoteKernel {
    pub fn probability(self, vote: i8) -> f64 {
        match self {
            VoteKernel::Decided(v) if v == vote => 1.0,
            VoteKernel::Decided(_) => 0.0,
            VoteKernel::FairCoin => 0.5,
        }
    }
}

pub fn majority_vote(votes: &[i8]) -> Result<VoteKernel> {
    if votes.is_empty() {
        return Err(Error::InvalidBound("majority of an empty neighborhood".into()));
    }
    if let Some(v) = votes.iter().find(|v| v.abs() != 1) {
        return Err(Error::InvalidBound(format!("vote {v} is not -1 or +1")));
    }
    let sum: i64 = votes.iter().map(|&v| v as i64).sum();
    Ok(match sum.signum() {
        0 => VoteKernel::FairCoin,
        s => VoteKernel::Decided(s as i8),
    })
}

/// `P(Binomial(n, p) >= k)` by direct summation of the upper terms.
pub fn binomial_tail<T: Real>(n: usize, p: T, k: usize) -> T {
    if k == 0 {
        return T::one();
    }
    if k > n {
        return T::zero();
    }
    let q = T::one() - p;
    // ln C(n, j) accumulated incrementally keeps large n finite
    let mut log_choose = (0..k).fold(0.0f64, |acc, j| acc + ((n - j) as f64).ln() - ((j + 1) as f64).ln());
    let terms = (k..=n).map(|j| {
        let term = T::lit(log_choose.exp()) * p.powi(j as i32) * q.powi((n - j) as i32);
        if j < n {
            log_choose += ((n - j) as f64).ln() - ((j + 1) as f64).ln();
        }
        term
    });
    let tail = compensated_sum(terms.collect::<Vec<_>>());
    tail.min(T::one()).max(T::zero())
}

fn check_delta<T: Real>(delta0: T) -> Result<()> {
    if !(delta0 >= T::zero() && delta0 <= T::one()) {
        return Err(Error::InvalidBound(format!("delta0 = {delta0} is not a probability")));
    }
    Ok(())
}

fn iterate<T: Real>(
    variant: BoundVariant,
    d: usize,
    delta0: T,
    rounds: usize,
    step: impl Fn(T) -> T,
) -> BoundSequence<T> {
    let mut values = Vec::with_capacity(rounds + 1);
    values.push(delta0);
    for t in 0..rounds {
        values.push(step(values[t]));
    }
    BoundSequence {
        variant,
        d,
        delta0,
        values,
    }
}

/// `delta_t = P(Binomial(d - 1, delta_{t-1}) >= ceil(d/2 - 1))`.
pub fn undirected_bound_sequence<T: Real>(d: usize, delta0: T, rounds: usize) -> Result<BoundSequence<T>> {
    if d < 3 {
        return Err(Error::InvalidBound(format!("undirected bound needs d >= 3, got {d}")));
    }
    check_delta(delta0)?;
    let threshold = (d - 2).div_ceil(2);
    Ok(iterate(BoundVariant::Undirected, d, delta0, rounds, |delta| {
        binomial_tail(d - 1, delta, threshold)
    }))
}

/// `delta_t = P(Binomial(d, delta_{t-1}) >= ceil(d/2))`.
pub fn directed_bound_sequence<T: Real>(d: usize, delta0: T, rounds: usize) -> Result<BoundSequence<T>> {
    if d < 1 {
        return Err(Error::InvalidBound("directed bound needs d >= 1".into()));
    }
    check_delta(delta0)?;
    let threshold = d.div_ceil(2);
    Ok(iterate(BoundVariant::Directed, d, delta0, rounds, |delta| {
        binomial_tail(d, delta, threshold)
    }))
}

/// One envelope step `(2e delta (d-1)/(d-2))^((d-2)/2)`, capped at 1.
pub fn chernoff_step<T: Real>(d: usize, delta: T) -> T {
    if delta <= T::zero() {
        return T::zero();
    }
    let d = d as f64;
    let log_base = (2.0 * std::f64::consts::E * (d - 1.0) / (d - 2.0)).ln() + delta.as_f64().ln();
    let log_value = (d - 2.0) / 2.0 * log_base;
    T::lit(log_value.min(0.0).exp())
}

pub fn chernoff_envelope<T: Real>(d: usize, delta0: T, rounds: usize) -> Result<BoundSequence<T>> {
    if d < 5 {
        return Err(Error::InvalidBound(format!("Chernoff envelope needs d >= 5, got {d}")));
    }
    check_delta(delta0)?;
    Ok(iterate(BoundVariant::ChernoffEnvelope, d, delta0, rounds, |delta| {
        chernoff_step(d, delta)
    }))
}

/// `(2e(d-1)/(d-2))^(-(d-2)/(d-4))`, the noise level below which the
/// envelope contracts.
pub fn noise_threshold<T: Real>(d: usize) -> Result<T> {
    if d <= 4 {
        return Err(Error::InvalidBound(format!("noise threshold needs d > 4, got {d}")));
    }
    let d = d as f64;
    let base = 2.0 * std::f64::consts::E * (d - 1.0) / (d - 2.0);
    Ok(T::lit(base.powf(-(d - 2.0) / (d - 4.0))))
}

pub fn bound_sequence<T: Real>(variant: BoundVariant, d: usize, delta0: T, rounds: usize) -> Result<BoundSequence<T>> {
    match variant {
        BoundVariant::Directed => directed_bound_sequence(d, delta0, rounds),
        BoundVariant::Undirected => undirected_bound_sequence(d, delta0, rounds),
        BoundVariant::ChernoffEnvelope => chernoff_envelope(d, delta0, rounds),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeReport {
    /// `log(-log p_{t+1}) - log(-log p_t)`.
    pub slopes: Vec<f64>,
    /// Every slope is strictly positive.
    pub doubly_exponential_consistent: bool,
}

pub fn log_neg_log<T: Real>(p: T) -> Result<f64> {
    let p = p.as_f64();
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidBound(format!("probability {p} outside (0, 1)")));
    }
    Ok((-p.ln()).ln())
}

pub fn doubling_slope<T: Real>(errors: &[T]) -> Result<SlopeReport> {
    let logs = errors.iter().map(|&p| log_neg_log(p)).collect::<Result<Vec<_>>>()?;
    let slopes: Vec<f64> = logs.windows(2).map(|w| w[1] - w[0]).collect();
    Ok(SlopeReport {
        doubly_exponential_consistent: !slopes.is_empty() && slopes.iter().all(|&s| s > 0.0),
        slopes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundComparison {
    pub round: usize,
    pub bayesian: f64,
    pub majority: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConjectureReport {
    pub rounds: Vec<RoundComparison>,
    pub violations: Vec<usize>,
}

impl ConjectureReport {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Per-round check of `bayesian <= majority`, allowing a relative slack of
/// [`CONJECTURE_TOLERANCE`] for rounds where both are mathematically equal.
pub fn conjecture_check<T: Real>(bayesian: &[T], majority: &[T]) -> Result<ConjectureReport> {
    if bayesian.len() != majority.len() {
        return Err(Error::LengthMismatch(bayesian.len(), majority.len()));
    }
    let rounds: Vec<RoundComparison> = bayesian
        .iter()
        .zip(majority)
        .enumerate()
        .map(|(round, (&b, &m))| {
            let (b, m) = (b.as_f64(), m.as_f64());
            RoundComparison {
                round,
                bayesian: b,
                majority: m,
                holds: b <= m * (1.0 + CONJECTURE_TOLERANCE),
            }
        })
        .collect();
    let violations = rounds.iter().filter(|r| !r.holds).map(|r| r.round).collect();
    Ok(ConjectureReport { rounds, violations })
}
