//! Outlier eigenvalues and eigenvector overlaps of spiked deformed Wigner and
//! spiked sample covariance matrices.
//!
//! The analytic side ([`free_additive`], [`free_multiplicative`]) predicts,
//! from the limiting spectral measure of the perturbation, which spikes
//! separate from the bulk, where the outliers land and how much of each
//! outlier eigenvector lies in the spike eigenspace. The simulation side
//! ([`ensemble`], [`verify`]) checks the predictions on finite random matrices.

pub mod cli;
pub mod ensemble;
pub mod error;
pub mod free_additive;
pub mod free_multiplicative;
pub mod measure;
pub mod model;
pub mod solve;
pub mod verify;

pub use ensemble::{EnsembleSample, EntryLaw, Field, Spike, SpikedModelSpec};
pub use error::{Error, Result};
pub use free_additive::{AdditiveContext, OpenInterval, SpikeVerdict, SupportIntervals};
pub use free_multiplicative::{mp_density, MultiplicativeContext};
pub use measure::{AtomicMeasure, ComplexPoint};
pub use model::{Model, ModelKind, SpikeReport};
pub use solve::FixedPointOptions;
pub use verify::{VerificationResult, VerifyOptions};
