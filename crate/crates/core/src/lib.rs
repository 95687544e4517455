//! Whisker-sensor terrain classification, simulated end to end.
//!
//! - [`beam`]: closed-form response of the base-excited equivalent cantilever.
//! - [`terrain`]: spectral terrain profiles turned into base excitations.
//! - [`signal`]: windowing, standardization, spectra, labeled datasets.
//! - [`mlp`]: the multi-layer perceptron classifier.
//! - [`experiment`]: seeded experiment commands and their reports.
//!
//! Data-parallel loops go through [`exec`], which uses rayon when the
//! `parallel` feature is on and runs sequentially otherwise.

pub mod beam;
pub mod error;
pub mod exec;
pub mod experiment;
pub mod mlp;
pub mod signal;
pub mod terrain;

pub use error::{Error, ErrorKind, Result};
pub use exec::Execution;
