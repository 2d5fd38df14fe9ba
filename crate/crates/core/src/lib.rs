//! Numerical verification of identities in law for quadratic functionals of
//! the Brownian sheet, its bridges and Kiefer fields.
//!
//! Three independent channels are provided: closed-form products, spectra of
//! discretized covariance operators, and seeded Monte Carlo comparison.

pub mod closed_form;
pub mod cumulants;
pub mod error;
pub mod fields;
pub mod kernels;
pub mod rng;
pub mod spectral;
pub mod stats;
pub mod verify;

pub use error::{Error, Result};
pub use fields::{GridField, Path1D, ProjectionKind};
pub use kernels::{CenteringKind, CovKernel, Point2, ProcessKind};
pub use spectral::Spectrum;
pub use verify::{IdentityId, VerdictReport, VerifyConfig};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
