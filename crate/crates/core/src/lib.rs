//! Post-hoc improvement of frozen vision classifiers.
//!
//! Feature vectors extracted from a pre-trained network are pruned with
//! adaptive variance thresholding ([`avt`]), a dense classifier head is found
//! by budget-bounded architecture search ([`nas`]) and trained with a small
//! from-scratch engine ([`nnet`]), and the result is evaluated with
//! confusion-matrix metrics ([`metrics`]). [`pipeline`] ties these together;
//! [`imgprep`] holds the radiograph preprocessing steps.

pub mod avt;
pub mod data;
pub mod error;
pub mod imgprep;
pub mod io;
pub mod metrics;
pub mod nas;
pub mod nnet;
pub mod pipeline;
pub mod rng;
pub mod synth;

pub use data::FeatureMatrix;
pub use error::{Error, Result};
