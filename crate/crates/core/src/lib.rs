//! Numerical core for the focusing cubic-quintic nonlinear Schrödinger equation
//!
//! ```text
//! i ψ_t + Δψ + |ψ|² ψ + |ψ|⁴ ψ = 0   in ℝ × ℝ³
//! ```
//!
//! restricted to radial data. Everything here is pure computation on
//! heap-allocated vectors: the crate is `no_std` and only needs `alloc`.
//! File formats, the command line and parallel sweeps live in the `cqnls`
//! companion crate.
//!
//! Layout:
//! - [`grid`] and [`field`]: uniform radial grid, quadrature, high-order
//!   Laplacian in the `v = r·u` representation, field arithmetic.
//! - [`functionals`]: mass, energy, virial functional `K`, action, `J`,
//!   the L²-invariant scaling `T_λ`, action gradient, orbit distance.
//! - [`ground_state`]: shooting + Newton solver for `Q_ω` and branch
//!   continuation.
//! - [`linearized`]: `L_±`, the internal mode `(e_ω, Y₁, Y₂)`, the
//!   nonlinear remainder.
//! - [`modulation`]: symplectic decomposition, linearized energy norm,
//!   distance function, one-pass monitor.
//! - [`evolution`]: implicit-midpoint time stepping, conservation and
//!   virial diagnostics, blow-up and scattering detectors.
//! - [`special`]: exponential series for the special solutions, threshold
//!   projection, decay-rate fits, classification.
//! - [`sobolev`]: best Sobolev constant from the Aubin–Talenti profile.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod banded;
pub mod cutoff;
pub mod error;
pub mod evolution;
pub mod field;
pub mod functionals;
pub mod grid;
pub mod ground_state;
pub mod linearized;
pub mod modulation;
pub mod ode;
pub mod scalar;
pub mod sobolev;
pub mod special;

pub use error::{Error, Result};
pub use field::{RadialField, RealField};
pub use grid::{GridRef, RadialGrid, StencilOrder};
pub use num_complex::Complex64;
