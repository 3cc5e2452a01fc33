//! radioshift-core: modulated IQ dataset synthesis, a compact autodiff
//! engine, 1-D ResNet models, unsupervised domain adaptation losses, and the
//! experiment harness that ties them together.

pub mod adcore;
pub mod error;
pub mod seed;
pub mod nnmodels;
pub mod sigsynth;

pub use error::{Error, Result};
