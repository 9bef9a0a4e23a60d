//! Model assembly, optimization and the training loop.

pub mod check;
mod config;
mod model;
mod optim;
mod train;

pub use config::{LossKind, Mode, TrainConfig, CONFIG_KEYS};
pub use model::{Batch, Model, ModelParams, ModelShape, ParamCounts, Penalty};
pub use optim::{LrSchedule, Nadam, MIN_IMPROVEMENT};
pub use train::{length_grouped_batches, score, train, EpochRecord, TrainOutcome};
