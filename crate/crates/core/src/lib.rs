//! Homogenization of the Neumann p-Laplacian on a thin two-dimensional domain
//! whose upper boundary oscillates periodically.
//!
//! The pipeline: build the periodic cell `Y*` and solve the cell problem for the
//! homogenized coefficient `q` ([`homogenize`]), solve the rescaled thin-domain
//! problem on `Omega^eps` ([`study::solve_thin`]) and the one-dimensional limit
//! problem ([`limit1d`]), then compare them and the partition-averaged corrector
//! along a ladder of `eps` ([`study`]).

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod fem;
pub mod geometry;
pub mod homogenize;
pub mod limit1d;
pub mod linear;
pub mod solve;
pub mod sparse;
pub mod study;

pub use error::{Error, Result};
pub use fem::{Field, FluxParams, Load};
pub use geometry::{Mesh, ProfileSpec};
pub use homogenize::CellSolution;
pub use solve::{ConstraintSet, SolveOptions};
