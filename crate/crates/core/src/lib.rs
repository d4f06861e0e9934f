//! Exceptional-point topology of a non-hermitian spin-chain spectrum.
//!
//! The Hamiltonian `H(z) = H0 + z G` of a spin-1/2 chain is hermitian on the
//! real axis and non-hermitian elsewhere. Its eigenvalues are branches of a
//! multi-valued analytic function of `z` whose branch points are exceptional
//! points (EPs). This crate builds the model, follows eigenvalues along closed
//! loops in the complex plane, reads off the resulting label permutation, and
//! from it counts, localizes and histograms the EPs.
//!
//! Module map:
//!
//! * [`model`]: Pauli-string construction of `(H0, G)`.
//! * [`spectral`]: biorthonormal eigendecomposition and `delta(z)` grids.
//! * [`tracking`]: adaptive perturbative eigenvalue continuation.
//! * [`braid`]: permutation cycles, EP counts and swap orders.
//! * [`census`]: cell counts, quadtree localization and density profiles.
//! * [`ergodicity`]: gap-ratio statistics and eigenstate expectation values.

pub mod braid;
pub mod census;
pub mod ergodicity;
pub mod error;
pub mod model;
pub mod spectral;
pub mod tracking;

pub use error::{Error, Result};
pub use model::{build_model, ModelMatrices, ModelParams, PauliString};
pub use num_complex::Complex64;
