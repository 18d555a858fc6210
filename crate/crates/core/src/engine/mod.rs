//! Euler-type scheme, fine reference solution, error decomposition and limit equation.

mod convolve;
mod limit;
mod model;
mod psi;
mod scheme;
mod vproc;

pub use convolve::{convolve_known, Stepper, VolterraConvolver};
pub use limit::{kappa, limit_solve, LimitSolver};
pub use model::{DiffusionField, DriftField, ModelSpec, RoughVolParams};
pub use psi::{psi_decompose, psi_decompose_with_table, PsiDecomposition};
pub use scheme::{
    coupled_error, euler_solve, reference_solve, CoupledRun, ErrorPath, SchemeKind, SchemePath, SchemeSolver,
    SingularCellMode,
};
pub use vproc::v_process;

pub use crate::kernels::DiagonalKernel;
