//! Phase features and phase discrepancies for bags of samples.

pub mod abcsim;
pub mod datagen;
pub mod discrepancy;
pub mod distreg;
pub mod error;
pub mod experiments;
pub mod features;
pub mod freqnet;
pub mod hypotest;
mod optim;
pub mod rng;
pub mod spectral;
pub mod trig;

pub use error::{Error, Result};
pub use features::{Bag, FeatureVector};
pub use spectral::FrequencySet;
