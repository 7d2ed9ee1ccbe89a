//! Desk-scale aneurysm-screening pipeline: synthetic angiography volumes,
//! maximum-intensity-projection preprocessing, a dual-encoder classifier with
//! spatial-pyramid descriptors trained by a small reverse-mode autodiff
//! engine, and the evaluation, calibration and Grad-CAM tooling around it.

pub mod autodiff;
mod codec;
pub mod config;
pub mod error;
pub mod evaluation;
pub mod imaging;
pub mod model;
pub mod optim;
mod par;
pub mod report;
pub mod saliency;
pub mod synthgen;
pub mod training;

pub use error::{Error, FormatError, Result};
