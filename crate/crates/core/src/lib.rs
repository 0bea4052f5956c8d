//! Learning energy-conserving finite-difference stencils for the periodic
//! 1D Maxwell system.
//!
//! The pipeline: spectral training data ([`training`]) is stacked into a
//! least-squares system ([`regression`]), solved under skew-symmetry
//! constraints ([`solvers`]), and the resulting operator is validated with
//! Crank–Nicolson runs ([`simulate`]) and Fourier analysis ([`analysis`]).
//! [`experiments`] wires these into reproducible studies.

pub mod analysis;
pub mod discrete;
pub mod error;
pub mod experiments;
pub mod par;
pub mod regression;
pub mod simulate;
pub mod solvers;
pub mod spectral;
pub mod training;

pub use discrete::{
    apply_stencil, centered_difference_of_radius, centered_difference_stencil, discrete_energy,
    inner_product, operator_matrix, Energy, FieldPair, Grid1D, Stencil,
};
pub use error::{Error, Result};
