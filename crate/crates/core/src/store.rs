//! In-memory image store backed by lossless per-image files.
//!
//! On disk every record has `<root>/<modality>/<split>/<id>.png` and its
//! high-resolution source `<root>/<modality>/<split>/<id>@<k>x.png`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::manifest::{DatasetManifest, Record};
use crate::text::KnowledgeBase;

pub const MANIFEST_FILE: &str = "manifest.tsv";
pub const KNOWLEDGE_FILE: &str = "knowledge.txt";

/// Pixels kept as 8-bit values; converted to `[0, 1]` floats on access.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StoredPair {
    pub image: Option<Vec<u8>>,
    pub hr: Option<Vec<u8>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImageStore {
    pub image_size: usize,
    pub channels: usize,
    pub hr_factor: usize,
    entries: BTreeMap<String, StoredPair>,
}

impl ImageStore {
    pub fn new(image_size: usize, channels: usize, hr_factor: usize) -> Self {
        Self {
            image_size,
            channels,
            hr_factor,
            entries: BTreeMap::new(),
        }
    }

    pub fn hr_size(&self) -> usize {
        self.image_size * self.hr_factor
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, id: &str, image: &Image, hr: &Image) -> Result<()> {
        self.check_side(image, self.image_size)?;
        self.check_side(hr, self.hr_size())?;
        self.entries.insert(
            id.to_string(),
            StoredPair {
                image: Some(image.to_u8()),
                hr: Some(hr.to_u8()),
            },
        );
        Ok(())
    }

    fn check_side(&self, image: &Image, side: usize) -> Result<()> {
        if image.side != side || image.channels != self.channels {
            return Err(Error::Shape(format!(
                "image {}×{}×{} does not fit a store of {side}×{side}×{}",
                image.side, image.side, image.channels, self.channels
            )));
        }
        Ok(())
    }

    pub fn entry(&self, id: &str) -> Option<&StoredPair> {
        self.entries.get(id)
    }

    /// Drop one high-resolution source (used to exercise verification).
    pub fn remove_hr(&mut self, id: &str) {
        if let Some(e) = self.entries.get_mut(id) {
            e.hr = None;
        }
    }

    pub fn image(&self, id: &str) -> Result<Image> {
        let bytes = self
            .entries
            .get(id)
            .and_then(|e| e.image.as_ref())
            .ok_or_else(|| missing(id, "image"))?;
        Image::from_u8(self.image_size, self.channels, bytes)
    }

    pub fn hr(&self, id: &str) -> Result<Image> {
        let bytes = self
            .entries
            .get(id)
            .and_then(|e| e.hr.as_ref())
            .ok_or_else(|| missing(id, "high-resolution image"))?;
        Image::from_u8(self.hr_size(), self.channels, bytes)
    }

    pub fn image_path(root: &Path, record: &Record) -> PathBuf {
        Self::dir(root, record).join(format!("{}.png", record.id))
    }

    pub fn hr_path(root: &Path, record: &Record, hr_factor: usize) -> PathBuf {
        Self::dir(root, record).join(format!("{}@{hr_factor}x.png", record.id))
    }

    fn dir(root: &Path, record: &Record) -> PathBuf {
        root.join(record.modality.to_string()).join(record.split.to_string())
    }

    /// Write every stored file referenced by `manifest`.
    pub fn save(&self, root: &Path, manifest: &DatasetManifest) -> Result<()> {
        for record in &manifest.records {
            std::fs::create_dir_all(Self::dir(root, record))?;
            if self.entries.get(&record.id).is_some_and(|e| e.image.is_some()) {
                self.image(&record.id)?.save_png(&Self::image_path(root, record))?;
            }
            if self.entries.get(&record.id).is_some_and(|e| e.hr.is_some()) {
                self.hr(&record.id)?
                    .save_png(&Self::hr_path(root, record, self.hr_factor))?;
            }
        }
        Ok(())
    }

    /// Read the files of every record; absent files stay absent so
    /// verification can name them.
    pub fn load(
        root: &Path,
        manifest: &DatasetManifest,
        image_size: usize,
        channels: usize,
        hr_factor: usize,
    ) -> Result<Self> {
        let mut store = Self::new(image_size, channels, hr_factor);
        for record in &manifest.records {
            let read = |path: PathBuf, side: usize| -> Result<Option<Vec<u8>>> {
                if !path.exists() {
                    return Ok(None);
                }
                let img = Image::load_png(&path)?;
                if img.side != side || img.channels != channels {
                    return Err(Error::Image {
                        path,
                        reason: format!("expected {side}×{side}×{channels}"),
                    });
                }
                Ok(Some(img.to_u8()))
            };
            let pair = StoredPair {
                image: read(Self::image_path(root, record), image_size)?,
                hr: read(Self::hr_path(root, record, hr_factor), image_size * hr_factor)?,
            };
            store.entries.insert(record.id.clone(), pair);
        }
        Ok(store)
    }
}

fn missing(id: &str, what: &str) -> Error {
    Error::Image {
        path: PathBuf::from(id),
        reason: format!("{what} missing from store"),
    }
}

/// Manifest, pixels and knowledge base of one experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub store: ImageStore,
    pub kb: KnowledgeBase,
}

impl Dataset {
    pub fn save(&self, root: &Path) -> Result<()> {
        std::fs::create_dir_all(root)?;
        self.manifest.save(root.join(MANIFEST_FILE))?;
        self.kb.save(root.join(KNOWLEDGE_FILE))?;
        self.store.save(root, &self.manifest)
    }

    pub fn load(root: &Path, image_size: usize, channels: usize, hr_factor: usize) -> Result<Self> {
        let manifest = DatasetManifest::load(root.join(MANIFEST_FILE))?;
        let kb = KnowledgeBase::load(root.join(KNOWLEDGE_FILE))?;
        let store = ImageStore::load(root, &manifest, image_size, channels, hr_factor)?;
        Ok(Self { manifest, store, kb })
    }
}
