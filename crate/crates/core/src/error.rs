use thiserror::Error;

/// Crate-wide error type. Variants are grouped so a front end can map them to
/// distinct failure classes (validation, parse, budget, missing equilibrium).
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("alphabet mismatch: expected {expected}, found {found}")]
    AlphabetMismatch { expected: String, found: String },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("unreachable observation: symbol '{symbol}' has probability zero under the prior and kernel")]
    UnreachableObservation { symbol: String },

    #[error("unsupported type: {0}")]
    UnsupportedType(String),

    #[error("budget exceeded: required {required}, budget {budget}")]
    BudgetExceeded { required: String, budget: String },

    #[error("no equilibrium found: {0}")]
    NoEquilibrium(String),

    #[error("no conditioning mass: {0}")]
    NoConditioningMass(String),

    #[error("policy is not full support: {0}")]
    NotFullSupport(String),

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
