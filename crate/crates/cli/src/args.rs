use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "kgmm", version, about = "Knowledge-guided masked modeling: pretrain, fine-tune, evaluate")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render the synthetic two-modality dataset and its knowledge base.
    Datagen(Common),
    /// Joint masked-image and masked-language pretraining.
    Pretrain(Common),
    /// Fine-tune an encoder with a linear head and score the test split.
    Finetune(WithCheckpoint),
    /// Score a fine-tuned classifier on the test split.
    Eval(WithCheckpoint),
    /// Fine-tune on growing label fractions (data-efficiency curve).
    Sweep(SweepArgs),
    /// Modality pool × text supervision grid.
    Ablate(AblateArgs),
    /// Print a checkpoint's config fingerprint, parameter count and step.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Config file; absent keys take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `section.key=value`; `train.` addresses the verb's stage section.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Master seed; replaces the seed of every section the verb uses.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Dataset directory (defaults to `data.root`).
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct WithCheckpoint {
    #[command(flatten)]
    pub common: Common,
    /// Pretrained (finetune) or fine-tuned (eval) checkpoint. Without it,
    /// `finetune` starts from a randomly initialized encoder.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.25,0.5,1.0")]
    pub fractions: Vec<f64>,
    /// Fine-tuning seeds; defaults to the master seed.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub common: Common,
    /// One full grid per seed; defaults to the master seed.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
}
