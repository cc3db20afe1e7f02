//! Degraded-image segmentation refinement (G1) and segmentation-guided
//! restoration (G2), trained in three stages on a synthetic shapes corpus.

pub mod autograd;
pub mod cli;
pub mod codec;
pub mod datagen;
pub mod degradations;
pub mod domain;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod networks;
pub mod training;

pub use error::{Error, Result};
