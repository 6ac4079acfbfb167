use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid profile: {0}")]
    InvalidProfile(String),

    #[error("meshing failed in column {column}: {reason}")]
    Meshing { column: usize, reason: String },

    #[error("invalid epsilon {eps}: {reason}")]
    InvalidEpsilon { eps: f64, reason: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value while assembling triangle {triangle}")]
    Assembly { triangle: usize },

    #[error("matrix is not positive definite (pivot {pivot} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error(
        "line search stagnated at stage {stage}, iteration {iteration}: \
         energy {energy:.6e}, residual {residual:.6e}"
    )]
    Stagnation {
        stage: usize,
        iteration: usize,
        energy: f64,
        residual: f64,
    },

    #[error("Newton did not converge at stage {stage} after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        stage: usize,
        iterations: usize,
        residual: f64,
    },

    #[error("point ({y1:.6}, {y2:.6}) lies outside every cell triangle")]
    CellLookup { y1: f64, y2: f64 },

    #[error("q formulas disagree: flux {q_flux:.10e} vs energy {q_energy:.10e}; cell solve is not converged")]
    QMismatch { q_flux: f64, q_energy: f64 },
}

impl Error {
    /// True for failures of the nonlinear or linear solver (as opposed to bad input).
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite { .. }
                | Error::Stagnation { .. }
                | Error::NonConvergence { .. }
                | Error::QMismatch { .. }
        )
    }
}
