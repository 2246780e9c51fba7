//! Unsupervised detection of mixing sources (end-members) in
//! multidimensional hydrochemical data.
//!
//! The observed samples are treated as a point cloud in the space of
//! hydrochemical parameters; the unknown sources are modelled as a Gibbs
//! point process whose energy rewards patterns that enclose the data with a
//! hull of comparable area while penalizing superfluous and near-duplicate
//! sources. A Metropolis-within-Gibbs simulated-annealing run maximizes the
//! joint density over source patterns, energy weights and projection planes;
//! level sets and clustering post-processing turn the saved chain states
//! into a proposed set of sources.
//!
//! Pipeline: [`data`] loads and normalizes the measurements, [`sampler`]
//! runs the annealing chain, [`inference`] reduces the trace to detected
//! sources, [`config`] carries run presets. The [`geometry`] and [`model`]
//! modules hold the hull statistics and energies everything else builds on.

pub mod config;
pub mod data;
pub mod error;
pub mod geometry;
pub mod inference;
pub mod model;
pub mod sampler;
pub mod trace;

pub use error::{HugError, Result};
