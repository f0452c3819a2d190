use core::fmt;

/// Errors raised by the numerical routines.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An argument is outside the operation's domain.
    InvalidArgument(&'static str),
    /// Power or value iteration ran out of iterations.
    NoConvergence {
        operation: &'static str,
        iterations: usize,
        residual: f64,
    },
    /// A constructed object failed one of its own invariants.
    InternalConsistency { check: &'static str, residual: f64 },
    /// A cylinder interval collapsed to a single node after snapping.
    DegenerateCylinder { interval: usize },
    /// A cycle of positive mean beyond `m` was found; `m` is not the maximal value.
    InconsistentM { node: usize, excess: f64 },
    /// No node passed the non-wandering test.
    EmptyOmega,
    /// The separating construction produced a wrong margin.
    ConstructionFailure { node: usize, margin: f64 },
    /// Boundary data violate `f(y) - f(x) <= h(x, y)`.
    IncompatibleBoundaryData { from: usize, to: usize, excess: f64 },
    /// A rate summand was negative, so the forward function is not a subaction.
    InvalidSubaction { step: usize, term: f64 },
    /// The potential does not satisfy the twist condition.
    TwistViolated,
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArgument(what) => write!(f, "invalid argument: {what}"),
            Error::NoConvergence {
                operation,
                iterations,
                residual,
            } => write!(
                f,
                "{operation} did not converge after {iterations} iterations (residual {residual:e})"
            ),
            Error::InternalConsistency { check, residual } => {
                write!(f, "internal consistency check `{check}` failed (residual {residual:e})")
            }
            Error::DegenerateCylinder { interval } => {
                write!(f, "cylinder interval {interval} is empty after snapping to the grid")
            }
            Error::InconsistentM { node, excess } => write!(
                f,
                "cycle through node {node} beats the maximizing value by {excess:e}"
            ),
            Error::EmptyOmega => f.write_str("non-wandering set is empty"),
            Error::ConstructionFailure { node, margin } => {
                write!(f, "separating subaction has margin {margin:e} at node {node}")
            }
            Error::IncompatibleBoundaryData { from, to, excess } => write!(
                f,
                "boundary data exceed the Peierls barrier on ({from}, {to}) by {excess:e}"
            ),
            Error::InvalidSubaction { step, term } => {
                write!(f, "rate term {step} is negative ({term:e})")
            }
            Error::TwistViolated => f.write_str("potential does not satisfy the twist condition"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
