use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("action {action} outside alphabet of size {alphabet}")]
    ActionOutOfRange { action: usize, alphabet: usize },

    #[error("signal {signal} outside the signal set of size {signals}")]
    SignalOutOfRange { signal: usize, signals: usize },

    #[error("signal {0} has zero probability under every state")]
    ImpossibleSignal(usize),

    #[error("observation has zero probability under every state")]
    ImpossibleObservation,

    #[error("empty action set")]
    EmptyActionSet,

    #[error("own-signal tie-break needs a signal-to-action correspondence")]
    MissingSignalCorrespondence,

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("({0}, {1}) is not an edge")]
    NotAnEdge(usize, usize),

    #[error("invalid degree distribution: {0}")]
    InvalidDistribution(String),

    #[error("configuration model: no simple graph after {0} attempts")]
    RetryBudgetExhausted(usize),

    #[error("{what} needs {needed} elementary steps, budget is {budget}")]
    BudgetExceeded {
        what: String,
        needed: u128,
        budget: u128,
    },

    #[error("horizon {requested} is beyond the computed horizon {available}")]
    BeyondHorizon { requested: usize, available: usize },

    #[error("stochastic update rule not supported here: {0}")]
    StochasticRule(String),

    #[error("missing decision-table entry: {0}")]
    MissingEntry(String),

    #[error("{found} hubs within the ball exceed the cap of {cap}")]
    HubCapExceeded { found: usize, cap: usize },

    #[error("hub {0} observes non-hub nodes; its trajectory past round 0 is not a function of hub signals")]
    HubNotBroadcast(usize),

    #[error("activation probability must lie in (0, 1], got {0}")]
    InvalidActivation(f64),

    #[error("neighbor trajectories carry total mass {mass}, expected 1")]
    CouplingMass { mass: f64 },

    #[error("bound input: {0}")]
    InvalidBound(String),

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("table format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
