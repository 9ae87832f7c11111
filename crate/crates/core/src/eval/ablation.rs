use std::fmt::Write as _;

use serde::Serialize;

use crate::config::{Config, ModalityPool};
use crate::error::Result;
use crate::store::Dataset;
use crate::train::Task;

use super::experiment::{finetune_and_test, run_pretrain};
use super::metrics::MetricsReport;
use super::sweep::mean_sd;

/// Pretraining modality pool and text switch of one grid cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct CellKey {
    pub pool: ModalityPool,
    pub text: bool,
}

impl CellKey {
    /// Rows in display order: per pool, text off then on.
    pub const ALL: [CellKey; 6] = [
        CellKey { pool: ModalityPool::A, text: false },
        CellKey { pool: ModalityPool::A, text: true },
        CellKey { pool: ModalityPool::B, text: false },
        CellKey { pool: ModalityPool::B, text: true },
        CellKey { pool: ModalityPool::Both, text: false },
        CellKey { pool: ModalityPool::Both, text: true },
    ];

    pub fn label(&self) -> String {
        format!("{}/text-{}", self.pool, if self.text { "on" } else { "off" })
    }
}

/// One seed of one cell: the two downstream tasks plus pretraining losses.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellRun {
    pub seed: u64,
    pub task_a: MetricsReport,
    pub task_b: MetricsReport,
    pub final_mim: f64,
    /// Largest MLM value logged during pretraining (0 for text-off cells).
    pub max_mlm: f64,
}

impl CellRun {
    pub fn mean_auroc(&self) -> f64 {
        (self.task_a.auroc + self.task_b.auroc) / 2.0
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct AblationGrid {
    pub cells: Vec<(CellKey, Vec<CellRun>)>,
}

impl AblationGrid {
    pub fn cell(&self, key: CellKey) -> Option<&[CellRun]> {
        self.cells.iter().find(|(k, _)| *k == key).map(|(_, v)| v.as_slice())
    }

    /// `cell,task,seed,auroc,auprc` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("cell,task,seed,auroc,auprc\n");
        for (key, runs) in &self.cells {
            for r in runs {
                for (task, m) in [("A", &r.task_a), ("B", &r.task_b)] {
                    let _ = writeln!(out, "{},{task},{},{:.4},{:.4}", key.label(), r.seed, m.auroc, m.auprc);
                }
            }
        }
        out
    }

    /// Rows are pretraining variants, columns the downstream tasks; entries
    /// are mean ± sd over seeds.
    pub fn render(&self) -> String {
        let header = [
            "Pretraining data",
            "Text supervision",
            "Task A AUROC",
            "Task A AUPRC",
            "Task B AUROC",
            "Task B AUPRC",
        ];
        let mut rows = vec![header.iter().map(|s| s.to_string()).collect::<Vec<_>>()];
        for (key, runs) in &self.cells {
            let stat = |f: &dyn Fn(&CellRun) -> f64| {
                let (m, sd) = mean_sd(&runs.iter().map(f).collect::<Vec<_>>());
                format!("{m:.2} ± {sd:.2}")
            };
            rows.push(vec![
                key.pool.to_string(),
                if key.text { "with" } else { "without" }.to_string(),
                stat(&|r| r.task_a.auroc),
                stat(&|r| r.task_a.auprc),
                stat(&|r| r.task_b.auroc),
                stat(&|r| r.task_b.auprc),
            ]);
        }
        let widths: Vec<usize> = (0..header.len())
            .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for (i, row) in rows.iter().enumerate() {
            let cells: Vec<String> = row
                .iter()
                .zip(&widths)
                .map(|(s, &w)| format!("{s}{}", " ".repeat(w - s.chars().count())))
                .collect();
            let _ = writeln!(out, "| {} |", cells.join(" | "));
            if i == 0 {
                let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
                let _ = writeln!(out, "|-{}-|", rule.join("-|-"));
            }
        }
        out
    }
}

/// Every cell for every seed: pretrain with the cell's pool and text switch,
/// then fine-tune and test on task A and task B with identical budgets.
pub fn run_cells(config: &Config, data: &Dataset, seeds: &[u64], cells: &[CellKey]) -> Result<AblationGrid> {
    let tasks = [
        Task::new(&data.manifest, ModalityPool::A),
        Task::new(&data.manifest, ModalityPool::B),
    ];
    let mut grid = AblationGrid::default();
    for &key in cells {
        let mut runs = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let mut pre = config.pretrain.clone();
            pre.seed = seed;
            pre.modalities = key.pool;
            pre.text_enabled = key.text;
            let run = run_pretrain(&config.model, data, &pre)?;
            let mut ft = config.finetune.clone();
            ft.seed = seed;
            let mut reports = Vec::with_capacity(2);
            for task in &tasks {
                let id = format!("task-{}", task.pool);
                let (_, report) = finetune_and_test(&config.model, run.model.encoder.clone(), data, task, &ft, &id)?;
                reports.push(report);
            }
            let task_b = reports.pop().expect("two tasks");
            let task_a = reports.pop().expect("two tasks");
            log::info!(
                "cell {} seed {seed}: task A {:.2}, task B {:.2}",
                key.label(),
                task_a.auroc,
                task_b.auroc
            );
            runs.push(CellRun {
                seed,
                task_a,
                task_b,
                final_mim: run.outcome.metrics.last().map_or(0.0, |m| m.mim),
                max_mlm: run.outcome.metrics.iter().map(|m| m.mlm).fold(0.0, f64::max),
            });
        }
        grid.cells.push((key, runs));
    }
    Ok(grid)
}

/// The full modality {A, B, A+B} × text {off, on} grid.
pub fn run_ablation(config: &Config, data: &Dataset, seeds: &[u64]) -> Result<AblationGrid> {
    run_cells(config, data, seeds, &CellKey::ALL)
}
