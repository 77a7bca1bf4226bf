use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed model: {0}")]
    MalformedSpec(String),

    #[error("non-finite constant `{name}`: {detail}")]
    NonFiniteConstant { name: &'static str, detail: String },

    #[error("series diverges numerically: {0}")]
    SeriesDiverges(String),

    #[error("regime mismatch: {0}")]
    RegimeMismatch(String),

    #[error("exact infima require non-negative weights; neuron {neuron} has a negative input weight")]
    NotAttractive { neuron: usize },

    #[error("residual Kalikow mass {residual:.3e} at k_max={k_max} exceeds 1e-9")]
    ResidualMassTooLarge { k_max: i64, residual: f64 },

    #[error("range k={k} carries zero mass")]
    ZeroMass { k: i64 },

    #[error("invalid site-time context: {0}")]
    InvalidContext(String),

    #[error("backward scan for a spontaneous spike of neuron {neuron} before time {time} exceeded {cap} steps")]
    ScanCapExceeded { neuron: usize, time: i64, cap: u64 },

    #[error("clan of ({neuron}, {time}) exceeded the budget of {budget} members")]
    BudgetExceeded { neuron: usize, time: i64, budget: usize },

    #[error("coordinate ({neuron}, {time}) is needed but unresolved")]
    IncompleteClan { neuron: usize, time: i64 },

    #[error("neuron {neuron} has infinite-support aging and no age cap was declared")]
    UnboundedMemory { neuron: usize },

    #[error("state space too large: {0}")]
    StateSpaceTooLarge(String),

    #[error("degenerate: {0}")]
    Degenerate(String),

    #[error("need at least {needed} spikes, found {found}")]
    TooFewSpikes { needed: usize, found: usize },

    #[error("conditioning event frequency {frequency:.3e} below 1e-4")]
    ConditioningTooRare { frequency: f64 },

    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn malformed(msg: impl Into<String>) -> Self {
        Error::MalformedSpec(msg.into())
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}
