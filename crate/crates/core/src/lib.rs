//! Ensembles of semi-adversarial autoencoders that perturb face images so
//! gender classifiers fail while face matchers keep working, plus the data
//! pipeline, training, resampling and evaluation around them.
//!
//! Numeric code is generic over [`scalar::Scalar`]; training and inference
//! use `f32`, gradient checks use `f64`. The aliases below fix the common
//! instantiation.

pub mod config;
pub mod dataset;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod image;
pub mod labels;
pub mod manifest;
pub mod nn;
pub mod photometric;
pub mod prototype;
pub mod sanmodel;
pub mod scalar;
pub mod selection;
pub mod synth;
pub mod tensor_io;

pub use error::{Error, Result};

pub type FaceImage = image::Image<f32>;
pub type Prototypes = prototype::PrototypeSet<f32>;
pub type Autoencoder = sanmodel::Autoencoder<f32>;
pub type GenderClassifier = sanmodel::GenderClassifier<f32>;
pub type FaceMatcher = sanmodel::FaceMatcher<f32>;
pub type Ensemble = ensemble::EnsembleModel<f32>;
