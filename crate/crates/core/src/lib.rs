//! A two-stage hierarchical model of early visual cortex.
//!
//! Patches pass through a Gabor simple-cell bank and quadrature energy
//! pooling (V1), are reduced and whitened by PCA, and are then expanded by
//! an overcomplete V2 stage: non-negative sparse coding or rectified
//! overcomplete ICA fitted by score matching. Every stage has a backward
//! map, so V2 codes can be rendered in image space.

pub mod bundle;
pub mod classify;
pub mod corpus;
pub mod error;
pub mod frontend;
pub mod ica;
mod linalg;
pub mod metrics;
pub mod pipeline;
pub mod report;
pub mod rng;
pub mod sc;
pub mod viz;
pub mod whitening;

pub use error::{Error, Result};
