//! Sieved maximum-likelihood (SiML) estimation of intensity fields sensed by
//! phased sensor arrays, with a functional-data-model simulator and the
//! spectral beamforming baselines used for comparison.
//!
//! The pipeline is:
//!
//! 1. [`sphere_grid`] discretizes (part of) the sphere;
//! 2. [`array_model`] describes the sensors and their sampling operator;
//! 3. [`field_sim`] builds Σ from a source model and draws Wishart samples Σ̂;
//! 4. [`estimators`] fits the sieved kernel and synthesizes intensity maps;
//! 5. [`beamformers`] and [`metrics`] provide the baselines and scores;
//! 6. [`experiment`] runs configured simulation campaigns and writes artifacts.

pub mod array_model;
pub mod beamformers;
pub mod error;
pub mod estimators;
pub mod experiment;
pub mod field_sim;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod sphere_grid;

pub use error::{Result, SimlError};
