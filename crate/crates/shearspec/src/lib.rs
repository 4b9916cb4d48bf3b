//! Spectral toolkit for the long-wave stability of shear flows on the torus.
//!
//! The crate assembles the linearized advection-diffusion operators that
//! govern a single horizontal wavenumber of a perturbed shear flow, computes
//! their spectra, and reconstructs the long-wave eigenpair by three
//! independent routes: a dense eigendecomposition, contour-integral spectral
//! projections, and a normal-form block diagonalization. The routes are
//! cross-validated against each other and against closed-form asymptotics.

pub mod error;
pub mod fourier;
pub mod kato;
pub mod linalg;
pub mod normal_form;
pub mod operators;
pub mod spectrum;

pub use error::{Error, ErrorKind, Result};
