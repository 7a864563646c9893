use thiserror::Error;

/// Errors produced by the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// The block (population/coherence) construction requires distinct energies.
    #[error(
        "Hamiltonian is degenerate (smallest level spacing {spacing:.3e}); \
         the block construction is unavailable, build the dense generator instead"
    )]
    Degenerate { spacing: f64 },

    #[error("generator is not diagonalizable (eigenvector condition number {condition:.3e})")]
    Defective { condition: f64 },

    #[error("generator has no zero eigenvalue (closest eigenvalue has modulus {closest:.3e})")]
    NoSteadyState { closest: f64 },

    #[error("eigensolver failed to converge")]
    EigenSolver,

    #[error("time grids differ in length or values")]
    GridMismatch,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Validation(msg.into()))
}
