//! Numerical laboratory for the zero-electron-mass limit of the scaled
//! Navier-Stokes-Poisson system on waveguide domains.
//!
//! The crate is organised bottom-up:
//!
//! * [`thermo`] - barotropic pressure law, enthalpy potentials, relative entropy.
//! * [`waveguide`] - periodic-axis waveguide grids, Neumann cross-section modes,
//!   spectral transforms and the smoothing operators.
//! * [`fields`] - Neumann Poisson solver and Helmholtz decomposition.
//! * [`nsp`] - SSP-RK3 pseudospectral integrator for the scaled compressible system.
//! * [`acoustic`] - exact mode-space propagator for the damped Klein-Gordon acoustics.
//! * [`limits`] - incompressible Navier-Stokes-Brinkman and damped Euler references.
//! * [`monitor`] - relative entropy, remainder, Gronwall budget and Korn diagnostics.
//! * [`harness`] - configuration, sweeps, rate fits, checkpoints and reports.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acoustic;
pub mod error;
pub mod field;
pub mod fields;
pub mod harness;
pub mod limits;
pub mod monitor;
pub mod nsp;
pub mod quadrature;
mod serde_ext;
pub mod synth;
pub mod thermo;
pub mod waveguide;

pub use error::{Error, Result};
pub use field::VectorField;
pub use waveguide::{CrossSection, GridSpec, WaveguideGrid};
