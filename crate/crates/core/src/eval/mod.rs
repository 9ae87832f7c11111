//! Macro one-vs-rest AUROC / AUPRC, best-checkpoint selection, the
//! modality × text ablation grid and the label-fraction sweep.

mod ablation;
mod experiment;
mod metrics;
mod select;
mod sweep;

pub use ablation::{run_ablation, run_cells, AblationGrid, CellKey, CellRun};
pub use experiment::{finetune_and_test, run_pretrain, test_report, PretrainRun};
pub use metrics::{
    auprc, auroc, binary_auroc, binary_average_precision, per_class_metrics, predict, ClassMetric, MetricsReport,
};
pub use select::{score_checkpoints, select_best, Candidate};
pub use sweep::{data_efficiency_sweep, mean_sd, sweep_csv, SweepPoint};
