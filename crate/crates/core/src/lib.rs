//! Multiclass minimum-norm interpolation and max-margin classification in
//! overparameterized linear models, with the simulation machinery to study
//! when the two coincide and when interpolation generalizes.

pub mod datagen;
pub mod diagnostics;
pub mod equivalence;
pub mod experiments;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod rng;
pub mod solvers;

pub use error::{Error, Result};
