//! Meta-learned task scheduling for pretraining.
//!
//! Everything numeric is generic over [`Scalar`] (`f64` or `f32`); the
//! aliases below fix it to `f64`, which is what the harness uses.

pub mod autodiff;
pub mod error;
pub mod gradcheck;
pub mod harness;
pub mod model;
pub mod rng;
pub mod scalar;
pub mod scheduler;
pub mod tasks;

pub use error::{Error, Result};
pub use model::{Encoder, EncoderConfig, TrunkKind};
pub use scalar::Scalar;
pub use scheduler::{Environment, Mode, Policy, SchedulerConfig};
pub use tasks::{TaskKind, TaskSpec};

pub type Tensor = autodiff::Tensor<f64>;
pub type Tape = autodiff::Tape<f64>;
pub type ParameterSet = autodiff::ParameterSet<f64>;
pub type GradientMap = autodiff::GradientMap<f64>;
pub type UtilityTable = scheduler::UtilityTable<f64>;
pub type EpisodeReport = scheduler::EpisodeReport<f64>;
pub type Scheduler = scheduler::Scheduler<f64>;
pub type Checkpoint = harness::Checkpoint<f64>;
