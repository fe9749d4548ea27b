//! Desk-scale numerical laboratory for quasi-classical limits of
//! particle-field Hamiltonians.
//!
//! The library discretizes a bosonic field over finitely many momentum
//! modes with eps-scaled commutation relations, couples it minimally to
//! quantum particles on a Dirichlet box, and verifies that tracing out
//! the field reproduces effective magnetic Schroedinger operators as
//! eps -> 0: pointwise field convergence, resolvent convergence,
//! synthesis of a uniform magnetic field from coherent states, and
//! ground-state-energy convergence.
//!
//! Entry points:
//! - [`field_model`]: momentum discretization, dispersion, polarization
//!   frames, form factors.
//! - [`fock`]: truncated Fock spaces, ladder/field operators, coherent
//!   and number states.
//! - [`wick`]: polynomial symbols, Wick quantization, classical
//!   expectations against finite-support measures.
//! - [`measures`]: effective fields A, B, W and the field energy c(mu).
//! - [`schrodinger`]: grid operators (Dirichlet Laplacian, effective and
//!   partial-trace Hamiltonians, the full coupled operator) and spectral
//!   solvers.
//! - [`experiments`]: reproducible drivers behind the `qclimit` binary.
//!
//! Runnable walkthroughs live in `examples/`; `cargo test` runs the unit
//! suites plus the acceptance suite in `tests/acceptance.rs`.

pub mod error;
pub mod field_model;
pub mod fock;
pub mod grid;
pub mod linalg;
pub mod measures;
pub mod schrodinger;
pub mod wick;

pub mod experiments;

pub use error::{Error, Result};
