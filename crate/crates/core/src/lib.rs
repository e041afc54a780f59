//! Numerical laboratory for the Smilansky Hamiltonian
//!
//! ```text
//! H = -d²/dx² + ½(-d²/dy² + y²) + λ y δ(x)
//! ```
//!
//! Expanding in the transverse oscillator basis turns every spectral question
//! into a question about a tridiagonal (Jacobi) secular matrix `B_λ(ε)`.
//! Bound states are real zeros of `det B_λ(ε)` below ½. Resonances are its
//! complex zeros once the square roots `κ_n = √(n + ½ − ε)` are continued to
//! another Riemann sheet; the on-shell scattering system is the same matrix
//! with `p_n = ±iκ_n`.
//!
//! Module map:
//!
//! - [`hermite`]: normalized Hermite functions and the coupling `(ψ_m, yψ_n)`.
//! - [`secular`]: the secular matrix, its overflow-safe determinant, inertia
//!   and null vectors.
//! - [`spectrum`]: discrete eigenvalues, counting, thresholds, weak coupling.
//! - [`field`]: eigenfunction reconstruction and nodal domains.
//! - [`resonance`]: pole search, trajectories and emergent poles.
//! - [`scattering`]: reflection/transmission amplitudes and unitarity.
//! - [`export`]: CSV/JSON writers used by the command line front end.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod export;
pub mod field;
pub mod hermite;
pub mod resonance;
pub mod scattering;
pub mod secular;
pub mod spectrum;

pub use error::{Error, Result};
pub use num_complex::Complex64;

/// The critical coupling `√2` separating the sub- and supercritical regimes.
pub const CRITICAL_COUPLING: f64 = std::f64::consts::SQRT_2;
