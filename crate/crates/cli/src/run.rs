use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use kgmm_core::{load_config, Config, Dataset};
use serde_json::{Map, Value};

use crate::args::Common;

/// Config sections a verb trains with; `train.` overrides and `--seed` land here.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Data,
    Pretrain,
    Finetune,
    Both,
}

impl Stage {
    fn sections(self) -> &'static [&'static str] {
        match self {
            Stage::Data => &["data"],
            Stage::Pretrain => &["pretrain"],
            Stage::Finetune => &["finetune"],
            Stage::Both => &["pretrain", "finetune"],
        }
    }
}

/// Rewrite `train.key=v` into the stage's section(s); other keys pass through.
pub fn expand_overrides(overrides: &[String], stage: Stage) -> Vec<String> {
    let mut out = Vec::with_capacity(overrides.len());
    for raw in overrides {
        match raw.trim().strip_prefix("train.") {
            Some(rest) => out.extend(stage.sections().iter().map(|s| format!("{s}.{rest}"))),
            None => out.push(raw.clone()),
        }
    }
    out
}

/// A prepared output directory with its resolved config.
pub struct Run {
    pub out: PathBuf,
    pub config: Config,
    pub seed: u64,
    data_dir: PathBuf,
}

impl Run {
    /// Resolve config file, overrides and seed, create `--out`, and write the
    /// resolved-config snapshot and the effective seed.
    pub fn prepare(common: &Common, stage: Stage) -> Result<Self> {
        let base = match &common.config {
            Some(path) => load_config(path).with_context(|| format!("loading config {}", path.display()))?,
            None => Config::default(),
        };
        let mut config = base.with_overrides(&expand_overrides(&common.overrides, stage))?;
        let seed = match (common.seed, stage) {
            (Some(s), _) => s,
            (None, Stage::Data) => config.data.seed,
            (None, Stage::Finetune) => config.finetune.seed,
            (None, _) => config.pretrain.seed,
        };
        for section in stage.sections() {
            match *section {
                "data" => config.data.seed = seed,
                "pretrain" => config.pretrain.seed = seed,
                _ => config.finetune.seed = seed,
            }
        }
        fs::create_dir_all(&common.out).with_context(|| format!("creating {}", common.out.display()))?;
        fs::write(common.out.join("config.toml"), config.to_toml())?;
        fs::write(common.out.join("seed.txt"), format!("{seed}\n"))?;
        let data_dir = common.data.clone().unwrap_or_else(|| PathBuf::from(&config.data.root));
        Ok(Self {
            out: common.out.clone(),
            config,
            seed,
            data_dir,
        })
    }

    pub fn load_data(&self) -> Result<Dataset> {
        let m = &self.config.model;
        Dataset::load(&self.data_dir, m.image_size, m.channels, m.hr_factor)
            .with_context(|| format!("loading dataset from {}", self.data_dir.display()))
    }

    pub fn write(&self, name: &str, contents: &str) -> Result<()> {
        let path = self.out.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
    }

    /// Flat `result.json`: `verb`, `seed`, then the verb's own keys.
    pub fn write_result(&self, verb: &str, fields: Map<String, Value>) -> Result<()> {
        let mut all = Map::new();
        all.insert("verb".into(), verb.into());
        all.insert("seed".into(), self.seed.into());
        all.extend(fields);
        self.write("result.json", &(serde_json::to_string_pretty(&Value::Object(all))? + "\n"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn train_prefix_follows_the_stage() {
        let o = vec!["train.epochs=3".to_string(), "model.vocab_size=64".to_string()];
        assert_eq!(expand_overrides(&o, Stage::Pretrain), ["pretrain.epochs=3", "model.vocab_size=64"]);
        assert_eq!(expand_overrides(&o, Stage::Finetune), ["finetune.epochs=3", "model.vocab_size=64"]);
        assert_eq!(
            expand_overrides(&o[..1], Stage::Both),
            ["pretrain.epochs=3", "finetune.epochs=3"]
        );
    }
}
