//! Skeleton detection toolkit.
//!
//! The pieces, bottom to top: [`raster`] grid types and PNG/PGM I/O,
//! [`morphology`] primitives (dilate, blur, branch points, thinning),
//! [`probmask`] label encoding into soft supervision masks, [`loss`] the
//! class-balanced L2, [`autonet`] a small hand-rolled conv net with manual
//! backprop and Adam, [`evalkit`] the NMS/threshold/thin/match evaluation
//! protocol, [`synthgen`] a synthetic capsule dataset with exact skeleton
//! ground truth, and [`dataset`] loading/splitting/augmentation.
//!
//! All numeric code is generic over [`scalar::Scalar`] (f32 or f64); the
//! aliases below pin the two instantiations used in practice: f32 for
//! training and inference, f64 for oracles and gradient checking.

pub mod autonet;
pub mod dataset;
pub mod error;
pub mod evalkit;
pub mod loss;
pub mod morphology;
pub mod probmask;
pub mod raster;
pub mod scalar;
pub mod synthgen;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type GrayImageF32 = raster::GrayImage<f32>;
pub type GrayImageF64 = raster::GrayImage<f64>;
pub type TensorF32 = autonet::Tensor<f32>;
pub type TensorF64 = autonet::Tensor<f64>;
pub type NetworkF32 = autonet::Network<f32>;
pub type SampleF32 = dataset::Sample<f32>;
pub type SynthSampleF32 = synthgen::SynthSample<f32>;
