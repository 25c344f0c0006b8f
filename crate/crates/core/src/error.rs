use thiserror::Error;

/// Errors raised by the solvers and their supporting types.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("cumulative intensity is infinite at t = {t} (horizon {horizon})")]
    SingularEvaluation { t: f64, horizon: f64 },

    #[error("infeasible grid: {0}")]
    InfeasibleGrid(String),

    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),

    #[error("no solution: {reason}")]
    NoSolution { reason: String },

    #[error("no particular solution: {0}")]
    NoParticularSolution(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("regression basis degenerate at node {node} (Gram condition number {condition:.3e})")]
    BasisDegenerate { node: usize, condition: f64 },

    #[error("certificate failed: member {member} has residual {residual:.3e} (tolerance {tolerance:.1e})")]
    CertificateFailed {
        member: usize,
        residual: f64,
        tolerance: f64,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
