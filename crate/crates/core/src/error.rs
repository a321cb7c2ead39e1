use thiserror::Error;

/// Errors raised by the library. Infeasibility of a candidate trajectory is
/// reported through [`crate::ocp::FeasibilityReport`], not through this type.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("point is off the manifold: defect {defect:.3e} exceeds tolerance {tolerance:.3e}")]
    Membership { defect: f64, tolerance: f64 },

    #[error("jacobian unavailable for map `{map}`: {reason}")]
    Jacobian { map: String, reason: String },

    #[error("dimension mismatch in {context}: expected {expected}, got {found}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("control {control:?} is not in the admissible set (violation {violation:.3e})")]
    NotInSet { control: Vec<f64>, violation: f64 },

    #[error("constraint component {index} is violated at the point: value {value:.3e}")]
    InfeasiblePoint { index: usize, value: f64 },

    #[error("dynamics at stage {stage} left the manifold: defect {defect:.3e}")]
    DynamicsLeftManifold { stage: usize, defect: f64 },

    #[error("no feasible point found: {0}")]
    Infeasible(String),

    #[error("solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("stationarity equation is singular at stage {stage}")]
    SingularStationarity { stage: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("{0}")]
    Parse(#[from] ParseError),

    #[error("io error: {0}")]
    Io(String),
}

/// A problem-file or data-file error located by a JSON pointer.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("{pointer}: {message}")]
pub struct ParseError {
    pub pointer: String,
    pub message: String,
}

impl ParseError {
    pub fn new(pointer: impl Into<String>, message: impl Into<String>) -> Self {
        let mut pointer = pointer.into();
        if pointer.is_empty() {
            pointer.push('/');
        }
        ParseError {
            pointer,
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(context: &str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch {
            context: context.to_string(),
            expected,
            found,
        });
    }
    Ok(())
}
