//! Weak-value amplification of the quadratures of a movable cavity mirror
//! kicked by a single postselected photon.
//!
//! * [`hilbert`]: dense operators and states on the truncated Fock space and
//!   the three-level photon space.
//! * [`weakmeas`]: weak measurement with and without postselection, weak
//!   values, exact conditional expectations.
//! * [`optomech`]: the optomechanical instance, closed-form predictions,
//!   amplification curves and validity checks.
//! * [`spectral`]: Lorentzian pulse amplitudes and the reduction of the
//!   continuum scattering solution to the three-level process.
//! * [`cli`]: command-line front end and data file writers.

pub mod cli;
pub mod error;
pub mod hilbert;
pub mod optomech;
pub mod spectral;
pub mod weakmeas;

pub use error::{Error, Result};
