//! Prompt-pool diffusion policies for lifelong imitation learning on a
//! small deterministic 2D manipulation world.
//!
//! The numeric core is generic over [`numcore::Scalar`]; the aliases below
//! fix the precision used by the command-line pipeline.

pub mod cli;
pub mod error;
pub mod evalkit;
pub mod numcore;
pub mod policy;
pub mod promptpool;
pub mod querycoders;
pub mod seeds;
pub mod simworld;
pub mod trainer;

pub use error::{Error, Result};

pub type Tensor = numcore::Tensor<f64>;
pub type Tensor32 = numcore::Tensor<f32>;
pub type Policy = policy::PolicyNet<f64>;
pub type Policy32 = policy::PolicyNet<f32>;
pub type Checkpoint = trainer::Checkpoint<f64>;
/// Exact success-rate arithmetic for transfer metrics.
pub type Rate = num_rational::Ratio<i64>;
