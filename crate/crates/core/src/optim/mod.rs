//! SGD with momentum, learning-rate schedules, and mask-respecting updates.

mod schedule;
mod sgd;

pub use schedule::{lr_at, Preset, Schedule, TrainRecipe};
pub use sgd::{sgd_epoch, sgd_step, EpochMetrics, OptimState};
