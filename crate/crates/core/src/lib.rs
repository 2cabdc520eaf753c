//! Simulated lensless quantitative phase retrieval: a numerical optical bench,
//! spectral analysis and flattening of training corpora, a from-scratch
//! residual encoder-decoder trained with a correlation loss, affine output
//! calibration, and a two-point resolution harness.

pub mod error;
pub mod field;
pub mod optics;
pub mod spectral;
pub mod dataset;
pub mod net;
pub mod calibration;
pub mod resolution;

pub use error::{Error, Result};
