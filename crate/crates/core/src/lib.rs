//! Knowledge-guided masked modeling for multimodal image pre-training.
//!
//! One modality-agnostic ViT encoder is trained jointly by masked patch
//! reconstruction at `hr_factor×` resolution and by masked language modeling
//! over expert-knowledge descriptions conditioned on the pooled image latent.
//! The encoder is then fine-tuned with a linear head and scored with
//! macro one-vs-rest AUROC / AUPRC.

pub mod checkpoint;
pub mod config;
pub mod datagen;
pub mod error;
pub mod eval;
pub mod image;
pub mod manifest;
pub mod masking;
pub mod model;
pub mod nn;
pub mod objectives;
pub mod rng;
pub mod store;
pub mod text;
pub mod train;

pub use config::{load_config, Config, DataConfig, ModalityPool, ModelConfig, TrainConfig};
pub use error::{Error, Result};
pub use image::Image;
pub use manifest::{DatasetManifest, Modality, Record, Split};
pub use model::{Classifier, PretrainModel};
pub use objectives::LossReport;
pub use rng::{seeded_rng, RandomStream};
pub use store::{Dataset, ImageStore};
pub use text::{KnowledgeBase, TokenRecord, Vocabulary};
