use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// The network document is not well-formed JSON.
    #[error("syntax error: {0}")]
    Syntax(String),

    /// The document is JSON but does not match the network schema.
    #[error("schema error: {0}")]
    Schema(String),

    /// A value is outside its allowed domain (negative rate, probability > 1, ...).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("unknown source `{0}`")]
    UnknownSource(String),

    #[error("unknown node `{0}`")]
    UnknownNode(String),

    /// Routing contains a cycle; closed-form capacities need a feed-forward network.
    #[error("routing graph has a cycle through [{}]; capacities of loop-back networks are not supported", .cycle.join(" -> "))]
    Cycle { cycle: Vec<String> },

    /// `I - A^T` is singular, so some flow never leaves the network.
    #[error("traffic equations are singular: routing traps flow in a cycle")]
    SingularRouting,

    #[error("unstable: arrival rate reaches service rate at [{}]", .nodes.join(", "))]
    Unstable { nodes: Vec<String> },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("numerical tolerance not met (achieved error estimate {achieved:e})")]
    ToleranceNotMet { achieved: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),
}
