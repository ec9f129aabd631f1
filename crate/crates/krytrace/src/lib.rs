//! Matrix-free estimation of the trace and shifted log-determinant
//! `log det(I + A)` of Hermitian positive semi-definite operators.
//!
//! The estimators compress the operator onto a low-dimensional subspace
//! built from Gaussian probes: either the range of `A^q * Omega`
//! (randomized subspace iteration) or the full block Krylov space
//! `range(A*Omega, A^2*Omega, ..., A^q*Omega)`. The compression
//! `T = Q' A Q` underestimates both quantities from below, and the
//! [`bounds`] module evaluates a-priori expectation/concentration bounds
//! as well as per-sample structural bounds on the gap.
//!
//! Layout:
//! - [`linop`]: the matrix-free operator trait plus the two built-in test
//!   families (geometric eigenvalue decay, sparse low-rank sum) with exact
//!   references.
//! - [`la`]: the small set of dense kernels everything else relies on
//!   (thin QR, symmetric eigensolve, shifted-Cholesky log-det, spectral
//!   norm, pseudo-inverse products).
//! - [`sketch`]: Gaussian probes and basis construction for both
//!   algorithms, stabilized and idealized variants.
//! - [`estimators`]: estimates from compressions, the Hutchinson Monte
//!   Carlo baseline, relative errors, and the probe/eigenbasis split.
//! - [`bounds`]: Chebyshev machinery and every error bound, including the
//!   reference comparison table of gap factors.
//! - [`experiments`]: the CLI-facing sweep harness with CSV output.

pub mod bounds;
pub mod error;
pub mod estimators;
pub mod experiments;
mod gemm;
pub mod la;
pub mod linop;
pub mod sketch;

pub use error::{Error, Result};
