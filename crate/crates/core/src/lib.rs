//! Local correlation volumes, correlation-based self-supervision, and a
//! tracking-by-detection engine with CLEAR-MOT evaluation.
//!
//! The numeric kernels are generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the common `f64` instantiations.

pub mod correlation;
pub mod error;
pub mod gradcheck;
pub mod io;
pub mod metrics;
pub mod sampling;
pub mod scalar;
pub mod supervision;
pub mod tensor;
pub mod tracker;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type FeatureMap64 = tensor::FeatureMap<f64>;
pub type FeatureMap32 = tensor::FeatureMap<f32>;
pub type FeaturePyramid64 = tensor::FeaturePyramid<f64>;
pub type CorrelationVolume64 = correlation::CorrelationVolume<f64>;
pub type CorrelationVolume32 = correlation::CorrelationVolume<f32>;
pub type MlpParams64 = correlation::MlpParams<f64>;
pub type FrameMemory64 = correlation::FrameMemory<f64>;
pub type CostMatrix64 = tracker::CostMatrix<f64>;
