use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A field failed validation. `field` is a dotted path such as `agents[2].prior_belief`.
    #[error("invalid {field}: {message}")]
    Validation { field: String, message: String },

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("arithmetic error: {0}")]
    Arithmetic(String),

    #[error("peer scorer returned a negative score {score} for agent {agent_id}")]
    ScorerContract { agent_id: u32, score: f64 },

    #[error("all belief scores are zero in non-empty class {0}")]
    DegenerateScores(String),

    #[error("unsupported drift class {0} (only martingale, super-martingale and sub-martingale walks have an equilibrium timing)")]
    UnsupportedDrift(String),

    #[error("low-belief timing precondition unsatisfied: need m < theta < m*H0/B_C (theta={theta}, m={m})")]
    PreconditionUnsatisfied { theta: f64, m: f64 },

    #[error("insufficient interest: total valuation {total_valuation} must exceed the provision point {provision_point}")]
    InsufficientInterest {
        total_valuation: f64,
        provision_point: f64,
    },

    #[error("scenario invalid: {0}")]
    ScenarioInvalid(String),

    #[error("policy contract error for agent {agent_id}: {message}")]
    PolicyContract { agent_id: u32, message: String },

    #[error("instance too large for exhaustive best-response search: {0}")]
    InstanceTooLarge(String),

    #[error("config parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }
}
