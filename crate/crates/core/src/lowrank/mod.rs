//! Low-rank kernels: the Householder stack for complement products, formal
//! sums of tall factor pairs, and the matrix-free Lanczos eigensolver.

pub mod householder;
pub mod lanczos;
pub mod sum;

pub use householder::HouseholderStack;
pub use lanczos::{lanczos_topk, Eigenpairs, LanczosOptions};
pub use sum::{lowrank_matvec, FnOperator, HermitianOperator, LowRankSum, SumForm, Term};

use crate::error::Result;
use crate::linalg::CMat;

/// Reflector stack for an orthonormal factor.
pub fn householder_from_factor(v: &CMat) -> Result<HouseholderStack> {
    HouseholderStack::from_factor(v)
}

/// `A V̂` with `V̂` the orthogonal complement encoded by `stack`.
pub fn apply_complement_right(a: &CMat, stack: &HouseholderStack) -> Result<CMat> {
    stack.apply_complement_right(a)
}

/// `V̂ A` with `V̂` the orthogonal complement encoded by `stack`.
pub fn apply_complement_left(a: &CMat, stack: &HouseholderStack) -> Result<CMat> {
    stack.apply_complement_left(a)
}
