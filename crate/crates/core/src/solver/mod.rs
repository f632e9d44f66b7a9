//! Self-contained solver for real-valued second-order cone programs, plus
//! the modeling helpers (hyperbolic constraints, geometric-mean trees) the
//! rate-product reformulation needs.

mod dense;
mod ipm;
mod program;

pub use dense::{dot, norm2, norm_inf, Mat};
pub use ipm::{solve, ConeSolution, KktResiduals, SolveStatus, SolverOptions};
pub use program::{ConeProgram, LinExpr, SocConstraint};
