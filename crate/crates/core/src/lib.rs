//! Sensorimotor dynamic functional connectivity.
//!
//! A planar dual-arm agent babbles; its population-coded proprioceptive,
//! tactile and visual signals are compared pairwise with sliding-window
//! mutual information; an infinite relational model groups the signals into
//! functional modules; and the module link-density dynamics are factorized
//! into additive non-negative factors.

pub mod babbling;
pub mod dynamics;
pub mod error;
pub mod imi;
pub mod irm;
pub mod nnmf;
pub mod scalar;
pub mod sensory;
pub mod tensor;

pub use error::{Error, Result};
pub use scalar::Real;

/// Double-precision instantiations used by the pipeline.
pub type F64Trajectory = dynamics::Trajectory<f64>;
pub type F64RobotParams = dynamics::RobotParams<f64>;
pub type F64SensorLayout = sensory::SensorLayout<f64>;
pub type F64FactorModel = nnmf::FactorModel<f64>;
pub type F64LinkDensities = irm::LinkDensitySeries<f64>;
/// Single-precision instantiations.
pub type F32RobotParams = dynamics::RobotParams<f32>;
pub type F32SensorLayout = sensory::SensorLayout<f32>;
pub type F32FactorModel = nnmf::FactorModel<f32>;
