use thiserror::Error;

/// Errors raised by the ledger and the three channel contracts.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ContractError {
    #[error("invalid identifier {0:?}")]
    InvalidIdentifier(String),
    #[error("admin team is empty")]
    EmptyAdmins,
    #[error("admin {0} is not a channel member")]
    AdminNotMember(String),
    #[error("participant {0} listed twice")]
    DuplicateParticipant(String),
    #[error("{0} is not a channel admin")]
    NotAdmin(String),
    #[error("{0} is not a channel member")]
    NotMember(String),
    #[error("unknown asset {0}")]
    UnknownAsset(String),
    #[error("asset {asset} has no attribute {attribute}")]
    UnknownAttribute { asset: String, attribute: String },
    #[error("asset {0} already exists")]
    DuplicateAsset(String),
    #[error("initial values do not match declared attributes of {0}")]
    AttributeMismatch(String),
    #[error("no pending request with ticket {0}")]
    BadIndex(u64),
    #[error("request value must be present exactly when the operation mutates")]
    InvalidRequest,
}

/// Errors raised by feature encoding, the predictor and its training loop.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("role {0} has no feature encoding")]
    UnknownRole(String),
    #[error("feature {0} is not finite")]
    NonFiniteFeature(&'static str),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("dataset yields no windows")]
    EmptyDataset,
    #[error("validation set is empty")]
    EmptyValidation,
    #[error("evaluation set is empty")]
    EmptyEval,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FedError {
    #[error("client parameter vectors have different dimensions")]
    DimensionMismatch,
    #[error("total sample count is zero")]
    ZeroSamples,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CoalitionError {
    #[error("agent {0} is not declared")]
    UnknownAgent(u32),
    #[error("agent {0} lists itself as a friend")]
    SelfFriend(u32),
    #[error("agent {0} is not a member of both coalitions")]
    AgentNotInCoalition(u32),
    #[error("{n} agents exceeds the exhaustive-check limit of {limit}")]
    TooLarge { n: usize, limit: usize },
    #[error("minimum coalition size must be at least 1")]
    InvalidMinSize,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario config: {0}")]
    InvalidConfig(String),
    #[error("malformed stream record at line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Failures of an end-to-end experiment run.
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Fed(#[from] FedError),
    #[error(transparent)]
    Contract(#[from] ContractError),
    #[error(transparent)]
    Coalition(#[from] CoalitionError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl HarnessError {
    /// Stable machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            HarnessError::InvalidSpec(_) => "invalid_spec",
            HarnessError::Scenario(_) => "scenario",
            HarnessError::Model(_) => "model",
            HarnessError::Fed(_) => "federation",
            HarnessError::Contract(_) => "contract",
            HarnessError::Coalition(_) => "coalition",
            HarnessError::Io(_) => "io",
            HarnessError::Json(_) => "json",
            HarnessError::Csv(_) => "csv",
        }
    }
}
