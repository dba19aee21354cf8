//! Floquet/Bloch spectral engine for self-adjoint ordinary differential operators
//! of order `n` with 1-periodic `m x m` matrix coefficients,
//!
//! ```text
//! (-i)^n y^(n) + (-i)^(n-2) P2(x) y^(n-2) + sum_{nu=3..n} P_nu(x) y^(n-nu),
//! ```
//!
//! under the quasiperiodic conditions `y^(v)(1) = e^{it} y^(v)(0)`.
//!
//! Eigenvalues of the fiber operators `L_t` are computed two ways:
//!
//! * [`galerkin`] assembles the operator in the exponential basis
//!   `e_q exp(i(2 pi l + t)x)` and solves the dense eigenproblem;
//! * [`monodromy`] integrates the first-order companion system across one
//!   period and reads spectrum membership off the roots of the characteristic
//!   polynomial in `u = e^{it}`.
//!
//! [`asymptotics`] evaluates the large-eigenvalue predictors and measures how
//! far the computed eigenpairs sit from them, and [`spectrum`] sweeps the
//! quasimomentum, tracks bands, detects gaps and evaluates the finite-gap
//! criteria on the eigenvalues of the mean matrix `C = int_0^1 P2`.

pub mod assign;
pub mod asymptotics;
pub mod cli;
pub mod coeffs;
mod error;
pub mod galerkin;
pub mod linalg;
pub mod monodromy;
pub mod spectrum;
mod tolerances;

pub use error::{Error, Result};
pub use tolerances::Tolerances;

/// Dense complex matrix used throughout the crate.
pub type CMatrix = nalgebra::DMatrix<num_complex::Complex64>;
/// Dense complex column vector.
pub type CVector = nalgebra::DVector<num_complex::Complex64>;

pub use num_complex::Complex64;
