//! Solvers for equality-constrained, dual-proximally regularized linear-quadratic
//! optimal-control problems.
//!
//! Backends: a serial Riccati recursion (dense or block-sparse stage kernel), its
//! parametric extension (including cyclic problems), and a parallel condensation
//! solver that splits the horizon into legs and stitches them through a block
//! tridiagonal consensus system. [`dense`] assembles the whole KKT system and is
//! the reference every backend is tested against.

pub mod dense;
pub mod error;
pub mod io;
pub mod linalg;
pub mod parallel;
pub mod parametric;
pub mod problem;
pub mod prox;
pub mod riccati;
pub mod tridiag;

pub use error::{LqError, Result};
pub use problem::{
    kkt_residual, shift_rhs, InitialCondition, KktResidual, LqProblem, ProximalState, ShiftedRhs,
    Solution, StageData, TerminalData,
};
pub use riccati::{solve_serial, StageKernel};
pub use parallel::{make_partition, solve_parallel, ParallelSolver, Partition, PartitionStrategy};
pub use parametric::{solve_cyclic, ParametricData, ValueParams};
pub use prox::{solve_exact, Backend, ProxLoopSettings};
