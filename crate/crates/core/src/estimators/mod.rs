//! Sieved maximum-likelihood estimation of the source covariance kernel.
//!
//! The kernel is restricted to the span of the sieve functions ψ_k = Σ_i W_ik φ_i,
//! whose Gram matrix against the sensing functions is G = HW. Within that sieve
//! the Wishart likelihood of Σ̂ has closed-form maximizers:
//!
//! ```text
//! known σ:   R̂ = G†(Σ̂ − σI)(G†)ᴴ
//! joint:     σ̂ = Tr(Σ̂ − GG†Σ̂)/(L − M),   R̂ = G†(Σ̂ − σ̂I)(G†)ᴴ
//! ```
//!
//! where G† is the left pseudo-inverse. The vectorized Kronecker form of these
//! estimates is never materialized; the matrix congruence above is the same map.

mod bic;
mod intensity;
mod likelihood;
mod sieve;

pub use bic::{bic_scan, bic_scan_with_sieve, bic_value, default_bic_range, stepped_range, BicEntry, BicScan};
pub use intensity::{intensity_estimate, intensity_from_steering};
pub use likelihood::{
    estimate_joint, estimate_known_noise, kappa_project_expectation, log_likelihood, KappaEstimate,
    MAX_GRAM_CONDITIONING,
};
pub use sieve::{eigen_sieve, EigenSieve, SievedBasis};
