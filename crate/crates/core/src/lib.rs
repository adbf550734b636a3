//! ct3d-core: a desk-scale volumetric deep-learning toolkit.
//!
//! The crate provides a dense tensor type with reverse-mode differentiation,
//! a 3D ConvNeXt backbone with classification and segmentation heads,
//! 2D-to-3D kernel inflation, cubic-spline volume resampling, the CT
//! augmentation pipeline, and training/ensembling utilities, plus the VOX1
//! volume and NTC1 checkpoint container formats used by the CLI.

pub mod augment;
pub mod autodiff;
pub mod error;
pub mod inflate;
pub mod ingest;
pub mod model;
pub mod ops;
pub mod resample;
pub mod runconfig;
pub mod selftest;
pub mod tensor;
pub mod train;
pub mod vox;

pub use error::{Error, Result};
pub use tensor::{Element, Tensor};
