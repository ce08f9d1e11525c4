//! Two-photon total-angular-momentum states through a helicity-mixing
//! nanoaperture: state preparation, channel, coincidence measurement,
//! tomography and entanglement measures.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aperture;
pub mod density;
pub mod error;
pub mod measurement;
pub mod metrics;
pub mod mode;
pub mod optics;
pub mod runner;
pub mod scenario;
pub mod source;
pub mod tomography;

pub use density::DensityMatrix;
pub use error::{Error, Result};
pub use mode::{BasisState, Helicity, Mode, StateMixture, TwoPhotonState};
