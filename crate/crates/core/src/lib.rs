//! Optimal parameterizing manifolds for quadratic forced-dissipative systems.
//!
//! The crate builds closed-form parameterizations of unresolved modes from
//! backward-forward systems, optimizes their backward horizon `tau` against
//! training data, and integrates the resulting reduced systems. Two worked
//! pipelines ship with it: noise-driven tipping in the Stommel-Cessi box
//! model and transition forecasting in a 9-mode Rayleigh-Benard truncation.

pub mod defect;
pub mod error;
pub mod experiments;
pub mod model;
pub mod param;
pub mod reduce;
pub mod spectral;
pub mod verify;

pub use error::{OpmError, Result};
pub use spectral::{Pairing, SpectralBasis, C64};
