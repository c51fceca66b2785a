//! Low-rank, spectrum-preserving time integration of the quantum
//! Landau–Lifshitz and Landau–Lifshitz–Gilbert density-matrix equations.
//!
//! A density matrix `ρ = Ṽ Λ₀ Ṽ*` is carried as an orthonormal `N×r` factor
//! `Ṽ` together with its fixed spectrum `Λ₀`. Every integrator stage builds
//! its state as a formal sum of tall factors, extracts the leading `r`
//! eigenvectors with a matrix-free Lanczos solver and reattaches `Λ₀`, so
//! trace, positivity and all spectral invariants hold by construction.

pub mod audit;
pub mod dynamics;
pub mod error;
pub mod integrate;
pub mod linalg;
pub mod lowrank;
pub mod observe;
#[cfg(feature = "reference")]
pub mod oracle;
pub mod spinsys;
pub mod states;

pub use error::{Error, Result};
