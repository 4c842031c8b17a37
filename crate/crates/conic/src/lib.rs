//! Conic programs over real and complex variables.
//!
//! Programs are assembled from linear, second-order-cone and
//! positive-semidefinite blocks whose entries are affine in the declared
//! variables. Complex blocks are written with complex arithmetic and
//! lowered to real form by [`lower_complex`] before they reach the
//! interior-point backend.
//!
//! ```
//! use irscr_conic::{solve, Affine, ConicProgram, ConstraintBlock, SolveStatus};
//!
//! let mut b = ConicProgram::builder();
//! let x = b.real("x", 1);
//! b.minimize(x.at(0));
//! b.add(ConstraintBlock::nonneg("x >= 3", vec![x.at(0) - 3.0]));
//! let program = b.build().unwrap();
//! let result = solve(&program, 1e-8).unwrap();
//! assert_eq!(result.status, SolveStatus::Optimal);
//! assert!((result.objective - 3.0).abs() < 1e-7);
//! ```

extern crate openblas_src;

mod check;
mod dump;
mod error;
mod expr;
mod program;
mod solve;

pub use check::{check_solution, check_point, Violation, ViolationReport};
pub use dump::dump_program;
pub use error::ConicError;
pub use expr::Affine;
pub use program::{
    lower_complex, ConeKind, ConicProgram, ConstraintBlock, Field, ProgramBuilder, Var, VarInfo,
    VarShape,
};
pub use solve::{solve, SolveResult, SolveStatus, DEFAULT_CHECK_TOL, DEFAULT_SOLVER_TOL};
