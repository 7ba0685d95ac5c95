use crate::dualsolve::DualPoint;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("profit matrix must be square: row {row} has {len} entries, expected {expected}")]
    NotSquare { row: usize, len: usize, expected: usize },

    #[error("profit matrix entry ({row}, {col}) is not finite")]
    NonFinite { row: usize, col: usize },

    #[error("instance too large for exhaustive search: K = {k}, U = {u} (limit K <= 6, U <= 3)")]
    InstanceTooLarge { k: usize, u: usize },

    /// The multiplier search ran out of iterations. `best` is the feasible
    /// side of the final bracket.
    #[error("multiplier search did not converge after {iterations} iterations (power {:.6e} of budget {p_tot:.6e})", best.sum_power)]
    NonConvergence { iterations: usize, p_tot: f64, best: Box<DualPoint> },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
