use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),

    #[error("variable `{0}` declared more than once")]
    DuplicateVariable(String),

    #[error("invalid variable `{name}`: {reason}")]
    InvalidVariable { name: String, reason: String },

    #[error("variable set must not be empty")]
    EmptySet,

    #[error("variable sets overlap on `{0}`")]
    Overlap(String),

    #[error("outcome {index} out of range for `{variable}` with cardinality {cardinality}")]
    OutcomeOutOfRange {
        variable: String,
        index: usize,
        cardinality: usize,
    },

    #[error("conditioning on a zero-probability event")]
    ConditioningOnNull,

    #[error("table sums to {0}, expected 1")]
    NotNormalized(f64),

    #[error("table entry {index} is negative or not finite")]
    InvalidEntry { index: usize },

    #[error("table has {got} entries, expected {expected}")]
    TableLength { got: usize, expected: usize },

    #[error("all weights are zero")]
    ZeroMass,

    #[error("scopes do not match")]
    ScopeMismatch,

    #[error("outcome space of {0} exceeds the enumeration cap of 2^22")]
    Capacity(u128),

    #[error("cannot realize `{name}`: role {role} is never observed")]
    NotRealizable { name: String, role: String },

    #[error("invalid factor for `{child}`: {reason}")]
    InvalidFactor { child: String, reason: String },

    #[error("parent graph contains a cycle through `{0}`")]
    Cyclic(String),

    #[error("system has no parameterized or point-mass factor")]
    NoParameters,

    #[error("parameter vector has length {got}, expected {expected}")]
    ParameterLength { got: usize, expected: usize },

    #[error("parameter {0} is not finite")]
    NonFiniteParameter(usize),

    #[error("conditional slice {slice} sums to {sum}")]
    ConditionalNotNormalized { slice: usize, sum: f64 },

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("invalid horizon: {0}")]
    InvalidHorizon(String),

    #[error("divergent: {0}")]
    Divergent(String),

    #[error("invalid objective: {0}")]
    InvalidObjective(String),

    #[error("invalid declaration: {0}")]
    Declaration(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
