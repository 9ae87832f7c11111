//! Binary checkpoint files.
//!
//! Layout (little endian):
//! `b"KGMMCKPT"`, `u32` format version, `u8` kind, 64-byte hex config
//! fingerprint, `u32`-prefixed model config text, `u64` step, `u64` epoch,
//! `u32` class count, `u32`-prefixed metadata text (`key=value` lines),
//! `u32` tensor count, then per tensor a `u16`-prefixed name, `u64` length
//! and that many `f64` values.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::model::{Classifier, Encoder, PretrainModel};
use crate::nn::{Params, Real};
use crate::rng::seeded_rng;

pub const MAGIC: &[u8; 8] = b"KGMMCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckpointKind {
    Pretrain,
    Classifier,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub kind: CheckpointKind,
    pub model_config: ModelConfig,
    pub step: u64,
    pub epoch: u64,
    pub num_classes: usize,
    pub meta: BTreeMap<String, String>,
    pub tensors: Vec<(String, Vec<f64>)>,
}

fn capture<F: Real, P: Params<F>>(p: &P) -> Vec<(String, Vec<f64>)> {
    let mut out = Vec::new();
    p.visit("", &mut |name, _, values| {
        out.push((name.to_string(), values.iter().map(|v| v.as_f64()).collect()))
    });
    out
}

impl Checkpoint {
    pub fn from_pretrain<F: Real>(model: &PretrainModel<F>, step: u64, epoch: u64) -> Self {
        Self {
            kind: CheckpointKind::Pretrain,
            model_config: model.config.clone(),
            step,
            epoch,
            num_classes: 0,
            meta: BTreeMap::new(),
            tensors: capture(model),
        }
    }

    pub fn from_classifier<F: Real>(model: &Classifier<F>, step: u64, epoch: u64) -> Self {
        Self {
            kind: CheckpointKind::Classifier,
            model_config: model.config.clone(),
            step,
            epoch,
            num_classes: model.num_classes(),
            meta: BTreeMap::new(),
            tensors: capture(model),
        }
    }

    pub fn fingerprint(&self) -> String {
        self.model_config.fingerprint()
    }

    pub fn param_count(&self) -> usize {
        self.tensors.iter().map(|(_, v)| v.len()).sum()
    }

    fn fill<F: Real, P: Params<F>>(&self, target: &mut P, prefix: &str) -> Result<()> {
        let map: HashMap<&str, &Vec<f64>> = self.tensors.iter().map(|(n, v)| (n.as_str(), v)).collect();
        let mut problem = None;
        target.visit_mut(prefix, &mut |name, _, slot| {
            if problem.is_some() {
                return;
            }
            match map.get(name) {
                Some(values) if values.len() == slot.len() => {
                    for (s, &v) in slot.iter_mut().zip(values.iter()) {
                        *s = F::c(v);
                    }
                }
                Some(values) => {
                    problem = Some(format!("tensor `{name}` has {} values, expected {}", values.len(), slot.len()))
                }
                None => problem = Some(format!("missing tensor `{name}`")),
            }
        });
        problem.map_or(Ok(()), |p| Err(Error::CheckpointFormat(p)))
    }

    pub fn restore_pretrain<F: Real>(&self) -> Result<PretrainModel<F>> {
        if self.kind != CheckpointKind::Pretrain {
            return Err(Error::CheckpointFormat("not a pretraining checkpoint".into()));
        }
        let mut model = PretrainModel::new(&self.model_config, 0)?;
        self.fill(&mut model, "")?;
        Ok(model)
    }

    /// The encoder of either checkpoint kind; decoders are dropped.
    pub fn restore_encoder<F: Real>(&self) -> Result<Encoder<F>> {
        let mut encoder = Encoder::new(&self.model_config, &mut seeded_rng(0, "restore"));
        self.fill(&mut encoder, "encoder")?;
        Ok(encoder)
    }

    pub fn restore_classifier<F: Real>(&self) -> Result<Classifier<F>> {
        if self.kind != CheckpointKind::Classifier {
            return Err(Error::CheckpointFormat("not a classifier checkpoint".into()));
        }
        let encoder = Encoder::new(&self.model_config, &mut seeded_rng(0, "restore"));
        let mut clf = Classifier::new(&self.model_config, encoder, self.num_classes, 0)?;
        self.fill(&mut clf, "")?;
        Ok(clf)
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&[match self.kind {
            CheckpointKind::Pretrain => 0u8,
            CheckpointKind::Classifier => 1u8,
        }])?;
        w.write_all(self.fingerprint().as_bytes())?;
        write_text(w, &toml::to_string(&self.model_config).expect("config serializes"))?;
        w.write_all(&self.step.to_le_bytes())?;
        w.write_all(&self.epoch.to_le_bytes())?;
        w.write_all(&(self.num_classes as u32).to_le_bytes())?;
        let meta: String = self.meta.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
        write_text(w, &meta)?;
        w.write_all(&(self.tensors.len() as u32).to_le_bytes())?;
        for (name, values) in &self.tensors {
            w.write_all(&(name.len() as u16).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&(values.len() as u64).to_le_bytes())?;
            for v in values {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        read(r, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::CheckpointFormat("bad magic bytes".into()));
        }
        let version = read_u32(r)?;
        if version != FORMAT_VERSION {
            return Err(Error::CheckpointVersion {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let mut kind = [0u8];
        read(r, &mut kind)?;
        let kind = match kind[0] {
            0 => CheckpointKind::Pretrain,
            1 => CheckpointKind::Classifier,
            k => return Err(Error::CheckpointFormat(format!("unknown kind {k}"))),
        };
        let mut fp = [0u8; 64];
        read(r, &mut fp)?;
        let stored_fp = String::from_utf8_lossy(&fp).into_owned();
        let model_config: ModelConfig = toml::from_str(&read_text(r)?)
            .map_err(|e| Error::CheckpointFormat(format!("model config: {e}")))?;
        if model_config.fingerprint() != stored_fp {
            return Err(Error::CheckpointFormat("stored fingerprint does not match stored config".into()));
        }
        let step = read_u64(r)?;
        let epoch = read_u64(r)?;
        let num_classes = read_u32(r)? as usize;
        let meta = read_text(r)?
            .lines()
            .filter_map(|l| l.split_once('=').map(|(k, v)| (k.to_string(), v.to_string())))
            .collect();
        let count = read_u32(r)? as usize;
        let mut tensors = Vec::with_capacity(count.min(4096));
        for _ in 0..count {
            let mut len = [0u8; 2];
            read(r, &mut len)?;
            let mut name = vec![0u8; u16::from_le_bytes(len) as usize];
            read(r, &mut name)?;
            let name = String::from_utf8(name).map_err(|_| Error::CheckpointFormat("tensor name is not UTF-8".into()))?;
            let n = read_u64(r)? as usize;
            let mut bytes = vec![0u8; n.checked_mul(8).ok_or_else(|| Error::CheckpointFormat("tensor too large".into()))?];
            read(r, &mut bytes)?;
            let values = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            tensors.push((name, values));
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(Error::CheckpointFormat("trailing bytes after last tensor".into()));
        }
        Ok(Self {
            kind,
            model_config,
            step,
            epoch,
            num_classes,
            meta,
            tensors,
        })
    }
}

fn read(r: &mut impl Read, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::CheckpointFormat("truncated file".into()),
        _ => Error::Io(e),
    })
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    read(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    read(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn write_text(w: &mut impl Write, s: &str) -> Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn read_text(r: &mut impl Read) -> Result<String> {
    let n = read_u32(r)? as usize;
    let mut buf = vec![0u8; n];
    read(r, &mut buf)?;
    String::from_utf8(buf).map_err(|_| Error::CheckpointFormat("text block is not UTF-8".into()))
}

pub fn save_checkpoint(ck: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    ck.write_to(&mut w)?;
    w.flush()?;
    Ok(())
}

/// Load a checkpoint; with `expected`, the stored architecture must match it.
pub fn load_checkpoint(path: impl AsRef<Path>, expected: Option<&ModelConfig>) -> Result<Checkpoint> {
    let ck = Checkpoint::read_from(&mut BufReader::new(File::open(path)?))?;
    if let Some(cfg) = expected {
        let want = cfg.fingerprint();
        if ck.fingerprint() != want {
            return Err(Error::FingerprintMismatch {
                found: ck.fingerprint(),
                expected: want,
            });
        }
    }
    Ok(ck)
}
