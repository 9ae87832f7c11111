use crate::config::TrainConfig;
use crate::error::{Error, Result};

/// Linear warmup followed by a half-cosine decay to `floor_lr`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Schedule {
    pub base_lr: f64,
    pub warmup_steps: usize,
    pub total_steps: usize,
    pub floor_lr: f64,
}

impl Schedule {
    pub fn new(base_lr: f64, warmup_steps: usize, total_steps: usize, floor_lr: f64) -> Result<Self> {
        if total_steps == 0 {
            return Err(Error::invalid("total_steps", "must be positive"));
        }
        if warmup_steps >= total_steps {
            return Err(Error::invalid(
                "warmup_steps",
                format!("{warmup_steps} must be below total_steps {total_steps}"),
            ));
        }
        if !(floor_lr >= 0.0 && floor_lr <= base_lr) {
            return Err(Error::invalid("floor_lr", "must lie in [0, base_lr]"));
        }
        Ok(Self {
            base_lr,
            warmup_steps,
            total_steps,
            floor_lr,
        })
    }

    /// Epoch-denominated warmup and length converted to optimizer steps.
    pub fn from_train(cfg: &TrainConfig, steps_per_epoch: usize) -> Result<Self> {
        Self::new(
            cfg.base_lr,
            cfg.warmup_epochs * steps_per_epoch,
            cfg.epochs * steps_per_epoch,
            cfg.floor_lr,
        )
    }

    pub fn lr_at(&self, step: usize) -> Result<f64> {
        lr_at(step, self)
    }
}

/// `base·(step+1)/warmup` during warmup, then
/// `floor + (base − floor)·½·(1 + cos(π·(step − warmup)/(total − warmup)))`.
pub fn lr_at(step: usize, schedule: &Schedule) -> Result<f64> {
    let Schedule {
        base_lr,
        warmup_steps,
        total_steps,
        floor_lr,
    } = *schedule;
    if step > total_steps {
        return Err(Error::StepOutOfRange {
            step,
            total: total_steps,
        });
    }
    if step < warmup_steps {
        return Ok(base_lr * (step + 1) as f64 / warmup_steps as f64);
    }
    let progress = (step - warmup_steps) as f64 / (total_steps - warmup_steps) as f64;
    Ok(floor_lr + (base_lr - floor_lr) * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos()))
}
