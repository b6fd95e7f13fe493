//! Classical reconstructions: correlation estimators and compressed sensing.

pub mod correlation;
pub mod cs;

pub use correlation::{dgi, dgi_raw, gi_correlation, gi_correlation_raw};
pub use cs::{fista_reconstruct, lipschitz_estimate, prox_tv, CsConfig, CsResult, Regularizer, StepSize};
