use std::fmt::Write as _;

use serde::Serialize;

use crate::config::{ModelConfig, TrainConfig};
use crate::error::{Error, Result};
use crate::model::Encoder;
use crate::store::Dataset;
use crate::train::Task;

use super::experiment::finetune_and_test;

/// Test AUROC of one label fraction across seeds.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepPoint {
    pub fraction: f64,
    pub per_seed: Vec<(u64, f64)>,
    pub mean: f64,
    pub sd: f64,
}

/// Mean and sample standard deviation (0 for fewer than two values).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Fine-tune copies of `encoder` on stratified fractions of the train split;
/// validation and test splits stay fixed.
pub fn data_efficiency_sweep(
    mcfg: &ModelConfig,
    encoder: &Encoder<f32>,
    data: &Dataset,
    task: &Task,
    cfg: &TrainConfig,
    fractions: &[f64],
    seeds: &[u64],
) -> Result<Vec<SweepPoint>> {
    if let Some(f) = fractions.iter().find(|&&f| !(f > 0.0 && f <= 1.0)) {
        return Err(Error::Stratification(format!("fraction {f} outside (0, 1]")));
    }
    let mut points = Vec::with_capacity(fractions.len());
    for &fraction in fractions {
        let mut per_seed = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let mut ft = cfg.clone();
            ft.seed = seed;
            ft.label_fraction = fraction;
            let id = format!("task-{}@{fraction}", task.pool);
            let (_, report) = finetune_and_test(mcfg, encoder.clone(), data, task, &ft, &id)?;
            log::info!("fraction {fraction} seed {seed}: AUROC {:.2}", report.auroc);
            per_seed.push((seed, report.auroc));
        }
        let (mean, sd) = mean_sd(&per_seed.iter().map(|p| p.1).collect::<Vec<_>>());
        points.push(SweepPoint {
            fraction,
            per_seed,
            mean,
            sd,
        });
    }
    Ok(points)
}

/// `fraction,mean,sd` rows.
pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let mut out = String::from("fraction,mean,sd\n");
    for p in points {
        let _ = writeln!(out, "{},{:.4},{:.4}", p.fraction, p.mean, p.sd);
    }
    out
}
