//! RSA2C: attribution-aware kernelized two-timescale actor-critic.

pub mod dictionary;
pub mod actor;
pub mod cli;
pub mod config;
pub mod critics;
pub mod envs;
pub mod error;
pub mod kernels;
pub mod shap;
pub mod trainer;

pub use error::{Error, Result};
