//! Anderson acceleration for fixed-point iterations.
//!
//! The crate provides plain Anderson acceleration (AA), Alternating AA
//! (Anderson mixing every `p` Richardson steps) and Reduced Alternating AA,
//! whose mixing least-squares problem is restricted to a subset of rows
//! chosen either by residual magnitude or uniformly at random. The size of
//! the row subset is tuned per Anderson step by a backward-error heuristic
//! with a monotonicity rollback.
//!
//! Around the solver engine sit the pieces needed to run the experiments:
//! CSR matrices and Matrix Market input ([`sparse`]), ILU(0)/ILUT
//! preconditioning with RCM reordering ([`precond`]), a restarted GMRES
//! baseline, a least-squares noise-injection laboratory ([`perturb`]), a
//! nonlinear kinetic test problem ([`boltzmann`]) and a performance-profile
//! benchmark harness ([`bench`]).

pub mod bench;
pub mod boltzmann;
pub mod densela;
pub mod error;
pub mod parallel;
pub mod perturb;
pub mod precond;
pub mod reduced;
pub mod rng;
pub mod solvers;
pub mod sparse;

pub use densela::{least_squares_solve, qr_column_pivoting, QrFactors, TallMatrix};
pub use error::{Error, Result};
pub use precond::{PrecondKind, PrecondSpec, Preconditioner};
pub use reduced::{AdaptiveController, BoundWitness, ProjectionPlan, RowSelection};
pub use solvers::{
    aar_solve, gmres_solve, run_fixed_point, Aar, FixedPointProblem, FnProblem, IterationRecord,
    IterationTrace, LinearProblem, Mode, ReducedSettings, Solution, SolveConfig, SolveStatus,
    SolverKind,
};
pub use sparse::SparseMatrix;

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`.
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}
