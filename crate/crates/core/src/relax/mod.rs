//! Continuous solvers used as relaxations inside the branch-and-bound searches.

pub mod lp;
pub mod qp;

pub use lp::{solve_lp, solve_lp_warm, Basis, LpProblem, LpRow, LpSolution, LpStatus, Sense};
pub use qp::{solve_svm_qp, solve_svm_qp_warm, QpSolution, QpStatus, SvmQp};
