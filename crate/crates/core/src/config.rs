//! Experiment configuration: a sectioned key-value (TOML) file with one
//! documented schema, dotted-key overrides, and invariant validation.
//!
//! ```toml
//! [model]
//! image_size = 64
//! patch_size = 8
//!
//! [pretrain]
//! epochs = 20
//! ```
//!
//! Every section and key is optional; missing keys fall back to the section
//! default. Unknown sections or keys are rejected.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Network architecture.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub image_size: usize,
    pub patch_size: usize,
    pub channels: usize,
    pub encoder_depth: usize,
    pub encoder_width: usize,
    pub encoder_heads: usize,
    pub image_decoder_depth: usize,
    pub text_decoder_depth: usize,
    pub decoder_width: usize,
    pub decoder_heads: usize,
    pub vocab_size: usize,
    pub max_text_len: usize,
    /// Integer upscale of the reconstruction targets.
    pub hr_factor: usize,
    pub mlp_ratio: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::toy()
    }
}

impl ModelConfig {
    /// Desk-scale default: 64×64×3 images, 8-pixel patches (n = 64).
    pub fn toy() -> Self {
        Self {
            image_size: 64,
            patch_size: 8,
            channels: 3,
            encoder_depth: 4,
            encoder_width: 64,
            encoder_heads: 4,
            image_decoder_depth: 2,
            text_decoder_depth: 2,
            decoder_width: 64,
            decoder_heads: 4,
            vocab_size: 512,
            max_text_len: 32,
            hr_factor: 2,
            mlp_ratio: 4,
        }
    }

    /// ViT-base encoder with 8 image-decoder and 6 text-decoder blocks on 224×224 inputs.
    pub fn vit_base() -> Self {
        Self {
            image_size: 224,
            patch_size: 16,
            channels: 3,
            encoder_depth: 12,
            encoder_width: 768,
            encoder_heads: 12,
            image_decoder_depth: 8,
            text_decoder_depth: 6,
            decoder_width: 512,
            decoder_heads: 16,
            vocab_size: 30522,
            max_text_len: 64,
            hr_factor: 2,
            mlp_ratio: 4,
        }
    }

    /// Smallest configuration exercising every code path; used for gradient checks.
    pub fn micro() -> Self {
        Self {
            image_size: 8,
            patch_size: 4,
            channels: 3,
            encoder_depth: 1,
            encoder_width: 8,
            encoder_heads: 2,
            image_decoder_depth: 1,
            text_decoder_depth: 1,
            decoder_width: 8,
            decoder_heads: 2,
            vocab_size: 12,
            max_text_len: 6,
            hr_factor: 2,
            mlp_ratio: 2,
        }
    }

    pub fn grid_side(&self) -> usize {
        self.image_size / self.patch_size
    }

    pub fn num_patches(&self) -> usize {
        self.grid_side() * self.grid_side()
    }

    pub fn patch_dim(&self) -> usize {
        self.patch_size * self.patch_size * self.channels
    }

    pub fn hr_patch_dim(&self) -> usize {
        let side = self.patch_size * self.hr_factor;
        side * side * self.channels
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("model.image_size", self.image_size),
            ("model.patch_size", self.patch_size),
            ("model.channels", self.channels),
            ("model.encoder_depth", self.encoder_depth),
            ("model.encoder_width", self.encoder_width),
            ("model.encoder_heads", self.encoder_heads),
            ("model.image_decoder_depth", self.image_decoder_depth),
            ("model.text_decoder_depth", self.text_decoder_depth),
            ("model.decoder_width", self.decoder_width),
            ("model.decoder_heads", self.decoder_heads),
            ("model.mlp_ratio", self.mlp_ratio),
        ];
        for (field, value) in positive {
            if value == 0 {
                return Err(Error::invalid(field, "must be positive"));
            }
        }
        if !self.image_size.is_multiple_of(self.patch_size) {
            return Err(Error::invalid(
                "model.patch_size",
                format!(
                    "image_size {} is not divisible by patch_size {}",
                    self.image_size, self.patch_size
                ),
            ));
        }
        if !self.encoder_width.is_multiple_of(self.encoder_heads) {
            return Err(Error::invalid(
                "model.encoder_heads",
                format!(
                    "encoder_width {} is not divisible by encoder_heads {}",
                    self.encoder_width, self.encoder_heads
                ),
            ));
        }
        if !self.decoder_width.is_multiple_of(self.decoder_heads) {
            return Err(Error::invalid(
                "model.decoder_heads",
                format!(
                    "decoder_width {} is not divisible by decoder_heads {}",
                    self.decoder_width, self.decoder_heads
                ),
            ));
        }
        for (field, width) in [("model.encoder_width", self.encoder_width), ("model.decoder_width", self.decoder_width)] {
            if width % 4 != 0 {
                return Err(Error::invalid(
                    field,
                    format!("{width} must be divisible by 4 for 2-D sin-cos positions"),
                ));
            }
        }
        if self.hr_factor < 1 {
            return Err(Error::invalid("model.hr_factor", "must be >= 1"));
        }
        if self.max_text_len < 3 {
            return Err(Error::invalid(
                "model.max_text_len",
                "must be >= 3 ([CLS], one token, [SEP])",
            ));
        }
        if self.vocab_size < crate::text::RESERVED_TOKENS.len() + 1 {
            return Err(Error::invalid(
                "model.vocab_size",
                "must exceed the number of reserved tokens",
            ));
        }
        Ok(())
    }

    /// SHA-256 over the canonical serialization; stored in checkpoints.
    pub fn fingerprint(&self) -> String {
        let canonical = toml::to_string(self).expect("model config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}

/// Which imaging modalities feed a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModalityPool {
    #[serde(rename = "A")]
    A,
    #[serde(rename = "B")]
    B,
    #[serde(rename = "A+B")]
    Both,
}

impl ModalityPool {
    pub fn contains(self, m: crate::manifest::Modality) -> bool {
        use crate::manifest::Modality;
        matches!(
            (self, m),
            (ModalityPool::Both, _) | (ModalityPool::A, Modality::A) | (ModalityPool::B, Modality::B)
        )
    }

    pub const ALL: [ModalityPool; 3] = [ModalityPool::A, ModalityPool::B, ModalityPool::Both];
}

impl fmt::Display for ModalityPool {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModalityPool::A => "A",
            ModalityPool::B => "B",
            ModalityPool::Both => "A+B",
        })
    }
}

impl FromStr for ModalityPool {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" | "a" => Ok(ModalityPool::A),
            "B" | "b" => Ok(ModalityPool::B),
            "A+B" | "a+b" | "AB" => Ok(ModalityPool::Both),
            other => Err(Error::invalid("modalities", format!("unknown pool `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    Mean,
    Sum,
}

/// How masked text positions are corrupted.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MlmReplacement {
    /// Every masked position becomes `[MASK]`.
    Mask,
    /// 80% `[MASK]`, 10% random token, 10% unchanged.
    Bert,
}

/// How pretraining batches combine the modality pools.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mixing {
    /// Uniform over the union of pools at the sample level.
    Sample,
    /// Each batch comes from a single modality, alternating A, B, A, ...
    Alternate,
}

/// Optimization recipe shared by the pretraining and fine-tuning stages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub mask_ratio_image: f64,
    pub mask_ratio_text: f64,
    pub base_lr: f64,
    pub floor_lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub warmup_epochs: usize,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub seed: u64,
    pub loss_weight_mim: f64,
    pub loss_weight_mlm: f64,
    pub mim_reduction: Reduction,
    pub mlm_reduction: Reduction,
    /// Standardize each reconstruction target patch before the MSE.
    pub norm_pix_loss: bool,
    pub mlm_replacement: MlmReplacement,
    pub text_enabled: bool,
    pub modalities: ModalityPool,
    pub mixing: Mixing,
    pub flip_prob: f64,
    pub crop_prob: f64,
    pub crop_scale_min: f64,
    pub jitter_prob: f64,
    pub jitter_strength: f64,
    /// Fraction of the labelled train split used for fine-tuning.
    pub label_fraction: f64,
    /// Save a checkpoint every this many epochs (0 = only at the end).
    pub checkpoint_every: usize,
}

impl TrainConfig {
    /// Pretraining recipe: lr 1.5e-4, batch 128, 200 epochs with 40 warmup.
    pub fn pretrain() -> Self {
        Self {
            mask_ratio_image: 0.75,
            mask_ratio_text: 0.5,
            base_lr: 1.5e-4,
            floor_lr: 0.0,
            batch_size: 128,
            epochs: 200,
            warmup_epochs: 40,
            weight_decay: 0.05,
            beta1: 0.9,
            beta2: 0.95,
            seed: 0,
            loss_weight_mim: 1.0,
            loss_weight_mlm: 1.0,
            mim_reduction: Reduction::Mean,
            mlm_reduction: Reduction::Mean,
            norm_pix_loss: false,
            mlm_replacement: MlmReplacement::Mask,
            text_enabled: true,
            modalities: ModalityPool::Both,
            mixing: Mixing::Sample,
            flip_prob: 0.5,
            crop_prob: 1.0,
            crop_scale_min: 0.6,
            jitter_prob: 0.0,
            jitter_strength: 0.2,
            label_fraction: 1.0,
            checkpoint_every: 1,
        }
    }

    /// Fine-tuning recipe: lr 1e-4, batch 16, 50 epochs with 10 warmup;
    /// flip and color jitter each with p = 0.5.
    pub fn finetune() -> Self {
        Self {
            base_lr: 1e-4,
            batch_size: 16,
            epochs: 50,
            warmup_epochs: 10,
            crop_prob: 0.0,
            jitter_prob: 0.5,
            ..Self::pretrain()
        }
    }

    pub fn validate(&self, section: &str) -> Result<()> {
        let field = |name: &str| format!("{section}.{name}");
        if !(self.mask_ratio_image > 0.0 && self.mask_ratio_image < 1.0) {
            return Err(Error::invalid(field("mask_ratio_image"), "must lie in (0, 1)"));
        }
        if !(self.mask_ratio_text >= 0.0 && self.mask_ratio_text < 1.0) {
            return Err(Error::invalid(field("mask_ratio_text"), "must lie in [0, 1)"));
        }
        if self.text_enabled && self.mask_ratio_text == 0.0 {
            return Err(Error::invalid(
                field("mask_ratio_text"),
                "must be positive while text_enabled = true",
            ));
        }
        if self.epochs == 0 {
            return Err(Error::invalid(field("epochs"), "must be positive"));
        }
        if self.warmup_epochs >= self.epochs {
            return Err(Error::invalid(
                field("warmup_epochs"),
                format!(
                    "warmup_epochs {} must be strictly less than epochs {}",
                    self.warmup_epochs, self.epochs
                ),
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid(field("batch_size"), "must be positive"));
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(Error::invalid(field("base_lr"), "must be positive"));
        }
        if !(self.floor_lr >= 0.0 && self.floor_lr <= self.base_lr) {
            return Err(Error::invalid(field("floor_lr"), "must lie in [0, base_lr]"));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::invalid(field("weight_decay"), "must be non-negative"));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::invalid(field(name), "must lie in [0, 1)"));
            }
        }
        for (name, p) in [
            ("flip_prob", self.flip_prob),
            ("crop_prob", self.crop_prob),
            ("jitter_prob", self.jitter_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(field(name), "must lie in [0, 1]"));
            }
        }
        if !(self.crop_scale_min > 0.0 && self.crop_scale_min <= 1.0) {
            return Err(Error::invalid(field("crop_scale_min"), "must lie in (0, 1]"));
        }
        if !(self.label_fraction > 0.0 && self.label_fraction <= 1.0) {
            return Err(Error::invalid(field("label_fraction"), "must lie in (0, 1]"));
        }
        if self.loss_weight_mim < 0.0 || self.loss_weight_mlm < 0.0 {
            return Err(Error::invalid(field("loss_weight_mim"), "loss weights must be non-negative"));
        }
        Ok(())
    }
}

/// Synthetic dataset recipe, or the root of a stored dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Directory of a stored dataset (`manifest.tsv`, `knowledge.txt`, images).
    /// Empty means "generate in memory from this section".
    pub root: String,
    pub n_classes: usize,
    pub train_per_class: usize,
    pub val_per_class: usize,
    pub test_per_class: usize,
    /// `default` or `easy`.
    pub preset: String,
    pub noise: f64,
    pub seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            root: String::new(),
            n_classes: 4,
            train_per_class: 250,
            val_per_class: 50,
            test_per_class: 100,
            preset: "default".into(),
            noise: 0.03,
            seed: 0,
        }
    }
}

impl DataConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 {
            return Err(Error::invalid("data.n_classes", "need at least 2 classes"));
        }
        if self.train_per_class == 0 {
            return Err(Error::invalid("data.train_per_class", "must be positive"));
        }
        if self.preset != "default" && self.preset != "easy" {
            return Err(Error::invalid(
                "data.preset",
                format!("unknown preset `{}` (default | easy)", self.preset),
            ));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::invalid("data.noise", "must be non-negative"));
        }
        Ok(())
    }
}

/// A full experiment description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub model: ModelConfig,
    pub pretrain: TrainConfig,
    pub finetune: TrainConfig,
    pub data: DataConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            pretrain: TrainConfig::pretrain(),
            finetune: TrainConfig::finetune(),
            data: DataConfig::default(),
        }
    }
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.pretrain.validate("pretrain")?;
        self.finetune.validate("finetune")?;
        self.data.validate()
    }

    /// Parse config text; absent keys take section defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let file: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::ConfigParse(e.to_string()))?;
        let mut merged = default_table();
        for (section, value) in file {
            let toml::Value::Table(entries) = value else {
                return Err(Error::ConfigParse(format!("`{section}` must be a [section]")));
            };
            for (key, v) in entries {
                set_key(&mut merged, &section, &key, v)?;
            }
        }
        let config: Config = toml::Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| Error::ConfigParse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Apply `section.key=value` overrides, then revalidate.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut table = match toml::Value::try_from(self) {
            Ok(toml::Value::Table(t)) => t,
            _ => unreachable!("config serializes to a table"),
        };
        for raw in overrides {
            let raw = raw.as_ref();
            let (path, value) = raw
                .split_once('=')
                .ok_or_else(|| Error::ConfigParse(format!("override `{raw}` is not key=value")))?;
            let (section, key) = path.trim().split_once('.').ok_or_else(|| {
                Error::ConfigParse(format!("override key `{path}` must be section.key"))
            })?;
            set_key(&mut table, section, key, parse_scalar(value.trim()))?;
        }
        let config: Config = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::ConfigParse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Load and validate a config file.
pub fn load_config(path: impl AsRef<Path>) -> Result<Config> {
    let text = std::fs::read_to_string(path.as_ref())?;
    Config::parse(&text)
}

fn default_table() -> toml::Table {
    match toml::Value::try_from(Config::default()) {
        Ok(toml::Value::Table(t)) => t,
        _ => unreachable!("config serializes to a table"),
    }
}

fn set_key(table: &mut toml::Table, section: &str, key: &str, value: toml::Value) -> Result<()> {
    let Some(toml::Value::Table(entries)) = table.get_mut(section) else {
        return Err(Error::ConfigParse(format!("unknown section `{section}`")));
    };
    match entries.get_mut(key) {
        Some(slot) => {
            // integers are accepted where floats are expected
            *slot = match (&*slot, value) {
                (toml::Value::Float(_), toml::Value::Integer(i)) => toml::Value::Float(i as f64),
                (_, v) => v,
            };
            Ok(())
        }
        None => Err(Error::ConfigParse(format!("unknown key `{section}.{key}`"))),
    }
}

fn parse_scalar(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}
