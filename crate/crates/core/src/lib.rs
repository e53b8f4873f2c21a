//! Few-fermion nonequilibrium dynamics in a disordered 1D harmonic trap, with
//! weak-value post-processing of the wavefunction into current/osmotic
//! velocity fields, Bohmian energy bookkeeping, and detection of the
//! kinetic-energy equipartition signature of thermalization.
//!
//! The crate is organized around the data flow of a run:
//!
//! * [`lattice`] — grids, states, quadratures;
//! * [`model`] — trap potentials and the antisymmetrized initial state;
//! * [`propagator`] — split-operator evolution plus a Crank-Nicolson oracle;
//! * [`weakfields`] — local-in-position weak values and velocity fields;
//! * [`diagnostics`] — per-sample records, identities, and the t_eq detector;
//! * [`comframe`] — center-of-mass/relative decomposition for N = 2.

pub mod comframe;
pub mod diagnostics;
pub mod error;
pub mod lattice;
mod linalg;
pub mod model;
pub mod propagator;
pub mod spectral;
pub mod weakfields;

pub use error::{CoreError, Result};
