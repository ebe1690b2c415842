use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::data::Augment;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Schedule {
    /// Divide by `factor` at each listed (0-indexed) epoch.
    Step { decay_epochs: Vec<u32>, factor: f64 },
    /// Half-cosine from the initial rate towards zero after warmup.
    Cosine,
}

/// Training recipe: schedule, optimizer constants, and batch size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainRecipe {
    pub total_epochs: u32,
    pub initial_lr: f64,
    pub schedule: Schedule,
    #[serde(default)]
    pub warmup_epochs: u32,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    /// Epoch whose weights weight-rewinding restarts from.
    pub rewind_epoch: u32,
    #[serde(default)]
    pub augment: Augment,
}

/// Named recipe presets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// 160 epochs, ÷10 at 80 and 120, momentum 0.9, ℓ2 5e-4, batch 64, rewind to 8.
    CifarStyle,
    /// 90 epochs cosine with 8 warmup epochs, momentum 0.875, ℓ2 3.05e-5, batch 1024, rewind to 5.
    ImagenetStyle,
}

impl Preset {
    pub fn recipe(self) -> TrainRecipe {
        match self {
            Preset::CifarStyle => TrainRecipe {
                total_epochs: 160,
                initial_lr: 0.1,
                schedule: Schedule::Step {
                    decay_epochs: vec![80, 120],
                    factor: 10.0,
                },
                warmup_epochs: 0,
                momentum: 0.9,
                weight_decay: 5e-4,
                batch_size: 64,
                rewind_epoch: 8,
                augment: Augment::None,
            },
            Preset::ImagenetStyle => TrainRecipe {
                total_epochs: 90,
                initial_lr: 0.1,
                schedule: Schedule::Cosine,
                warmup_epochs: 8,
                momentum: 0.875,
                weight_decay: 3.05e-5,
                batch_size: 1024,
                rewind_epoch: 5,
                augment: Augment::None,
            },
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cifar-style" => Ok(Preset::CifarStyle),
            "imagenet-style" => Ok(Preset::ImagenetStyle),
            _ => Err(Error::arg(format!(
                "unknown preset {s:?} (expected cifar-style or imagenet-style)"
            ))),
        }
    }
}

impl TrainRecipe {
    pub fn validate(&self) -> Result<()> {
        if self.total_epochs == 0 {
            return Err(Error::config("total_epochs must be at least 1"));
        }
        if self.warmup_epochs >= self.total_epochs {
            return Err(Error::config("warmup_epochs must be below total_epochs"));
        }
        if !(self.initial_lr > 0.0 && self.initial_lr.is_finite()) {
            return Err(Error::config(format!(
                "initial_lr must be positive, got {}",
                self.initial_lr
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::config("weight_decay must be finite and >= 0"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        if self.rewind_epoch >= self.total_epochs {
            return Err(Error::config("rewind_epoch must be below total_epochs"));
        }
        if let Schedule::Step { factor, .. } = &self.schedule {
            if !(*factor > 1.0) {
                return Err(Error::config(format!(
                    "step decay factor must exceed 1, got {factor}"
                )));
            }
        }
        Ok(())
    }

    pub fn with_lr(mut self, lr: f64) -> Self {
        self.initial_lr = lr;
        self
    }

    pub fn with_epochs(mut self, total: u32) -> Self {
        self.total_epochs = total;
        self
    }
}

/// Learning rate in effect during 0-indexed `epoch`.
///
/// Warmup ramps linearly, `lr·(epoch+1)/W`. A step decay listed at epoch `e`
/// applies from epoch `e` onward.
pub fn lr_at(recipe: &TrainRecipe, epoch: u32) -> Result<f64> {
    if epoch >= recipe.total_epochs {
        return Err(Error::arg(format!(
            "epoch {epoch} outside [0, {})",
            recipe.total_epochs
        )));
    }
    let lr0 = recipe.initial_lr;
    let warm = recipe.warmup_epochs;
    if epoch < warm {
        return Ok(lr0 * (epoch + 1) as f64 / warm as f64);
    }
    Ok(match &recipe.schedule {
        Schedule::Step {
            decay_epochs,
            factor,
        } => {
            let d = decay_epochs.iter().filter(|&&e| e <= epoch).count();
            lr0 * factor.powi(-(d as i32))
        }
        Schedule::Cosine => {
            let span = (recipe.total_epochs - warm) as f64;
            0.5 * lr0 * (1.0 + (PI * (epoch - warm) as f64 / span).cos())
        }
    })
}
