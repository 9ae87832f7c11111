//! Deterministic synthetic two-modality dataset with a paired knowledge base.
//!
//! Modality A looks loosely like a color fundus photograph: a bright disc
//! with an optic-nerve spot, vessels and large illumination blobs. Modality B
//! looks loosely like an OCT B-scan: wavy horizontal tissue layers over
//! speckle. In both, the class is carried by small motifs (dots, rings, dark
//! spots, crosses in A; reflective foci, bumps, cysts, fluid pockets in B)
//! placed at random over the anatomy, which is larger and varies more.
//!
//! Images are rendered at `hr_factor ×` resolution, quantized to 8 bits, and
//! box-downsampled to the model resolution, so every input has an exact
//! high-resolution source.

use std::collections::{BTreeMap, HashSet};

use rayon::prelude::*;

use crate::config::{DataConfig, ModelConfig};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::manifest::{DatasetManifest, Modality, Record, Split};
use crate::rng::{seeded_rng, RandomStream};
use crate::store::{Dataset, ImageStore};
use crate::text::{split_words, KnowledgeBase};

/// Number of distinct motif families; also the class limit.
pub const MAX_CLASSES: usize = 8;

/// Class-unique word pairs; both words occur in every description of their
/// class and in no other class's descriptions.
const CLASS_WORDS: [[&str; 2]; MAX_CLASSES] = [
    ["exudates", "foci"],
    ["rings", "drusen"],
    ["hemorrhages", "cysts"],
    ["crosses", "fluid"],
    ["pairs", "bumps"],
    ["dashes", "thinning"],
    ["halos", "detachment"],
    ["squares", "scarring"],
];

const TEMPLATES: [&str; 4] = [
    "{0} and {1} are visible in the retina .",
    "the image shows {0} together with {1} .",
    "clinical finding : {0} , {1} present .",
    "{1} accompany {0} in this eye .",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    /// Random motif placement and strong nuisance variation.
    Default,
    /// Fixed motif placement and weak nuisance; linearly separable from pixels.
    Easy,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub n_classes: usize,
    pub train_per_class: usize,
    pub val_per_class: usize,
    pub test_per_class: usize,
    pub image_size: usize,
    pub hr_factor: usize,
    pub channels: usize,
    pub preset: Preset,
    /// Standard deviation of per-pixel Gaussian noise at high resolution.
    pub noise: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn from_config(data: &DataConfig, model: &ModelConfig) -> Result<Self> {
        data.validate()?;
        let spec = Self {
            n_classes: data.n_classes,
            train_per_class: data.train_per_class,
            val_per_class: data.val_per_class,
            test_per_class: data.test_per_class,
            image_size: model.image_size,
            hr_factor: model.hr_factor,
            channels: model.channels,
            preset: if data.preset == "easy" { Preset::Easy } else { Preset::Default },
            noise: data.noise,
            seed: data.seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=MAX_CLASSES).contains(&self.n_classes) {
            return Err(Error::invalid(
                "data.n_classes",
                format!("{} classes requested; the generator supports 2..={MAX_CLASSES}", self.n_classes),
            ));
        }
        if self.train_per_class == 0 {
            return Err(Error::invalid("data.train_per_class", "every class needs a train sample"));
        }
        if self.image_size < 16 {
            return Err(Error::invalid("model.image_size", "synthetic images need at least 16 pixels"));
        }
        if self.hr_factor == 0 {
            return Err(Error::invalid("model.hr_factor", "must be positive"));
        }
        if self.channels != 1 && self.channels != 3 {
            return Err(Error::invalid("model.channels", "synthetic images have 1 or 3 channels"));
        }
        if self.train_per_class.max(self.val_per_class).max(self.test_per_class) > 99_999 {
            return Err(Error::invalid("data.train_per_class", "at most 99999 samples per class and split"));
        }
        Ok(())
    }

    fn count(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train_per_class,
            Split::Val => self.val_per_class,
            Split::Test => self.test_per_class,
        }
    }
}

pub fn class_label(class: usize) -> String {
    format!("c{class:02}")
}

/// Four descriptions per class, each naming the class's two unique words.
pub fn knowledge_base(n_classes: usize) -> Result<KnowledgeBase> {
    let mut kb = KnowledgeBase::new();
    for (class, [a, b]) in CLASS_WORDS.iter().enumerate().take(n_classes) {
        let descriptions = TEMPLATES
            .iter()
            .map(|t| t.replace("{0}", a).replace("{1}", b))
            .collect();
        kb.insert(&class_label(class), descriptions)?;
    }
    Ok(kb)
}

/// Record ids sort by modality, split, class and index.
pub fn record_id(modality: Modality, split: Split, class: usize, index: usize) -> String {
    format!("{}-{split}-{}-{index:05}", modality.to_string().to_lowercase(), class_label(class))
}

/// Render the whole dataset. Each image has its own random stream, so the
/// output is independent of thread count.
pub fn generate(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut records = Vec::new();
    for modality in [Modality::A, Modality::B] {
        for split in Split::ALL {
            for class in 0..spec.n_classes {
                for i in 0..spec.count(split) {
                    records.push(Record {
                        id: record_id(modality, split, class, i),
                        modality,
                        label: class_label(class),
                        split,
                    });
                }
            }
        }
    }
    let rendered: Vec<(Image, Image)> = records
        .par_iter()
        .map(|r| {
            let class = r.label[1..].parse::<usize>().expect("generated label");
            render_pair(spec, r.modality, class, &mut seeded_rng(spec.seed, &format!("datagen/{}", r.id)))
        })
        .collect::<Result<_>>()?;
    let mut store = ImageStore::new(spec.image_size, spec.channels, spec.hr_factor);
    for (r, (image, hr)) in records.iter().zip(&rendered) {
        store.insert(&r.id, image, hr)?;
    }
    Ok(Dataset {
        manifest: DatasetManifest { records },
        store,
        kb: knowledge_base(spec.n_classes)?,
    })
}

fn render_pair(spec: &SyntheticSpec, modality: Modality, class: usize, rng: &mut RandomStream) -> Result<(Image, Image)> {
    let side = spec.image_size * spec.hr_factor;
    let mut canvas = Canvas::new(side);
    match modality {
        Modality::A => paint_fundus(&mut canvas, class, spec.preset, rng),
        Modality::B => paint_oct(&mut canvas, class, spec.preset, rng),
    }
    for v in canvas.data.iter_mut() {
        *v += (spec.noise * rng.normal()) as f32;
    }
    let hr = canvas.into_image(spec.channels);
    let hr = Image::from_u8(side, spec.channels, &hr.to_u8())?;
    let lo = hr.downsample(spec.hr_factor)?;
    let lo = Image::from_u8(spec.image_size, spec.channels, &lo.to_u8())?;
    Ok((lo, hr))
}

/// RGB float canvas over unit coordinates `(x, y) ∈ [0, 1)²`.
struct Canvas {
    side: usize,
    data: Vec<f32>,
}

impl Canvas {
    fn new(side: usize) -> Self {
        Self {
            side,
            data: vec![0.0; side * side * 3],
        }
    }

    fn coord(&self, i: usize) -> f64 {
        (i as f64 + 0.5) / self.side as f64
    }

    /// Set every pixel from `f(x, y)`.
    fn fill(&mut self, f: impl Fn(f64, f64) -> [f64; 3]) {
        for r in 0..self.side {
            for c in 0..self.side {
                let v = f(self.coord(c), self.coord(r));
                let base = (r * self.side + c) * 3;
                for k in 0..3 {
                    self.data[base + k] = v[k] as f32;
                }
            }
        }
    }

    /// Add `rgb · w(x, y)` inside the bounding box `[cx ± reach] × [cy ± reach]`.
    fn add(&mut self, cx: f64, cy: f64, reach: f64, rgb: [f64; 3], w: impl Fn(f64, f64) -> f64) {
        let s = self.side as f64;
        let lo = |v: f64| ((v - reach) * s).floor().max(0.0) as usize;
        let hi = |v: f64| (((v + reach) * s).ceil().max(0.0) as usize).min(self.side);
        for r in lo(cy)..hi(cy) {
            for c in lo(cx)..hi(cx) {
                let weight = w(self.coord(c) - cx, self.coord(r) - cy);
                if weight == 0.0 {
                    continue;
                }
                let base = (r * self.side + c) * 3;
                for k in 0..3 {
                    self.data[base + k] += (rgb[k] * weight) as f32;
                }
            }
        }
    }

    fn blob(&mut self, cx: f64, cy: f64, sigma: f64, rgb: [f64; 3]) {
        self.add(cx, cy, 3.0 * sigma, rgb, |dx, dy| (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp());
    }

    fn ring(&mut self, cx: f64, cy: f64, radius: f64, width: f64, rgb: [f64; 3]) {
        self.add(cx, cy, radius + 3.0 * width, rgb, |dx, dy| {
            let d = (dx * dx + dy * dy).sqrt() - radius;
            (-(d * d) / (2.0 * width * width)).exp()
        });
    }

    /// Soft segment from `(x0, y0)` to `(x1, y1)`.
    fn segment(&mut self, x0: f64, y0: f64, x1: f64, y1: f64, width: f64, rgb: [f64; 3]) {
        let (cx, cy) = ((x0 + x1) / 2.0, (y0 + y1) / 2.0);
        let half = ((x1 - x0).hypot(y1 - y0)) / 2.0;
        let (ux, uy) = ((x1 - x0) / (2.0 * half.max(1e-12)), (y1 - y0) / (2.0 * half.max(1e-12)));
        self.add(cx, cy, half + 3.0 * width, rgb, |dx, dy| {
            let along = (dx * ux + dy * uy).clamp(-half, half);
            let (px, py) = (dx - along * ux, dy - along * uy);
            (-(px * px + py * py) / (2.0 * width * width)).exp()
        });
    }

    fn square(&mut self, cx: f64, cy: f64, half: f64, rgb: [f64; 3]) {
        let edge = half * 0.25;
        self.add(cx, cy, half + 3.0 * edge, rgb, |dx, dy| {
            let d = dx.abs().max(dy.abs()) - half;
            if d <= 0.0 {
                1.0
            } else {
                (-(d * d) / (2.0 * edge * edge)).exp()
            }
        });
    }

    fn into_image(self, channels: usize) -> Image {
        let data = if channels == 3 {
            self.data
        } else {
            self.data
                .chunks(3)
                .map(|p| (p[0] + p[1] + p[2]) / 3.0)
                .collect()
        };
        Image::from_data(self.side, channels, data).expect("canvas size")
    }
}

fn uniform(rng: &mut RandomStream, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.uniform()
}

fn scale(rgb: [f64; 3], k: f64) -> [f64; 3] {
    rgb.map(|v| v * k)
}

/// Motif centers: random inside the field of view, or a fixed lattice for
/// the easy preset.
fn motif_sites(
    rng: &mut RandomStream,
    preset: Preset,
    count: usize,
    region: impl Fn(&mut RandomStream) -> (f64, f64),
    lattice: &[(f64, f64)],
) -> Vec<(f64, f64)> {
    match preset {
        Preset::Default => (0..count).map(|_| region(rng)).collect(),
        Preset::Easy => lattice.to_vec(),
    }
}

fn paint_fundus(canvas: &mut Canvas, class: usize, preset: Preset, rng: &mut RandomStream) {
    let nuisance = match preset {
        Preset::Default => 1.0,
        Preset::Easy => 0.25,
    };
    let tint = [
        0.78 + nuisance * uniform(rng, -0.06, 0.06),
        0.38 + nuisance * uniform(rng, -0.05, 0.05),
        0.18 + nuisance * uniform(rng, -0.04, 0.04),
    ];
    let gain = 1.0 + nuisance * uniform(rng, -0.12, 0.1);
    let (fx, fy) = (0.5 + nuisance * uniform(rng, -0.04, 0.04), 0.5 + nuisance * uniform(rng, -0.04, 0.04));
    canvas.fill(|x, y| {
        let r = ((x - fx).powi(2) + (y - fy).powi(2)).sqrt();
        let inside = 1.0 / (1.0 + ((r - 0.46) / 0.01).exp());
        let shade = gain * (1.0 - 0.9 * r * r) * inside;
        tint.map(|t| t * shade)
    });

    // optic disc on a random side, with vessels leaving it
    let side = if rng.bernoulli(0.5) { 0.28 } else { 0.72 };
    let disc = (side + nuisance * uniform(rng, -0.04, 0.04), fy + nuisance * uniform(rng, -0.06, 0.06));
    canvas.blob(disc.0, disc.1, 0.055, [0.45, 0.42, 0.3]);
    for v in 0..4 {
        let mut angle = v as f64 * std::f64::consts::FRAC_PI_2 + 0.8 + nuisance * uniform(rng, -0.4, 0.4);
        let (mut x, mut y) = disc;
        for _ in 0..6 {
            angle += nuisance * uniform(rng, -0.35, 0.35);
            let (nx, ny) = (x + 0.07 * angle.cos(), y + 0.07 * angle.sin());
            canvas.segment(x, y, nx, ny, 0.006, [-0.22, -0.14, -0.06]);
            (x, y) = (nx, ny);
        }
    }
    // broad illumination blobs
    if preset == Preset::Default {
        for _ in 0..4 {
            let (x, y) = (uniform(rng, 0.15, 0.85), uniform(rng, 0.15, 0.85));
            let sign = if rng.bernoulli(0.5) { 1.0 } else { -1.0 };
            let amp = sign * uniform(rng, 0.03, 0.08);
            canvas.blob(x, y, uniform(rng, 0.1, 0.2), [amp, amp * 0.7, amp * 0.4]);
        }
    }

    let strength = match preset {
        Preset::Default => uniform(rng, 0.8, 1.1),
        Preset::Easy => 1.3,
    };
    let count = 5 + rng.below(4);
    let region = |rng: &mut RandomStream| {
        let a = uniform(rng, 0.0, std::f64::consts::TAU);
        let r = 0.34 * rng.uniform().sqrt();
        (fx + r * a.cos(), fy + r * a.sin())
    };
    let lattice = [(0.35, 0.35), (0.65, 0.35), (0.35, 0.65), (0.65, 0.65), (0.5, 0.5)];
    for (x, y) in motif_sites(rng, preset, count, region, &lattice) {
        let k = strength;
        match class % MAX_CLASSES {
            0 => canvas.blob(x, y, 0.022, scale([0.36, 0.3, -0.05], k)),
            1 => canvas.ring(x, y, 0.045, 0.01, scale([0.26, 0.26, 0.26], k)),
            2 => canvas.blob(x, y, 0.03, scale([-0.25, -0.2, -0.1], k)),
            3 => {
                canvas.segment(x - 0.045, y, x + 0.045, y, 0.009, scale([-0.05, 0.22, 0.36], k));
                canvas.segment(x, y - 0.045, x, y + 0.045, 0.009, scale([-0.05, 0.22, 0.36], k));
            }
            4 => {
                canvas.blob(x - 0.02, y, 0.01, scale([0.25, 0.25, 0.25], k));
                canvas.blob(x + 0.02, y, 0.01, scale([0.25, 0.25, 0.25], k));
            }
            5 => canvas.segment(x - 0.035, y, x + 0.035, y, 0.006, scale([0.25, 0.2, 0.1], k)),
            6 => canvas.ring(x, y, 0.05, 0.012, scale([-0.15, -0.1, 0.0], k)),
            _ => canvas.square(x, y, 0.02, scale([0.2, 0.25, 0.1], k)),
        }
    }
}

fn paint_oct(canvas: &mut Canvas, class: usize, preset: Preset, rng: &mut RandomStream) {
    let nuisance = match preset {
        Preset::Default => 1.0,
        Preset::Easy => 0.25,
    };
    let top = 0.3 + nuisance * uniform(rng, -0.08, 0.08);
    let tilt = nuisance * uniform(rng, -0.12, 0.12);
    let wave_amp = nuisance * uniform(rng, 0.0, 0.04);
    let wave_freq = uniform(rng, 0.5, 1.5);
    let phase = uniform(rng, 0.0, std::f64::consts::TAU);
    let gain = 1.0 + nuisance * uniform(rng, -0.2, 0.2);
    let thickness: Vec<f64> = (0..5).map(|_| 0.05 * (1.0 + nuisance * uniform(rng, -0.25, 0.25))).collect();
    let levels = [0.75, 0.35, 0.55, 0.28, 0.9];

    let strength = match preset {
        Preset::Default => uniform(rng, 0.7, 1.0),
        Preset::Easy => 1.3,
    };
    let count = 3 + rng.below(3);
    let depth: f64 = thickness.iter().sum();
    let lattice = [(0.3, 0.0), (0.5, 0.0), (0.7, 0.0)];
    let sites = motif_sites(rng, preset, count, |rng| (uniform(rng, 0.15, 0.85), 0.0), &lattice);
    let family = class % MAX_CLASSES;
    // bumps lift every layer locally (classes 1 and 4)
    let bumps: Vec<(f64, f64, f64)> = match family {
        1 => sites.iter().map(|&(x, _)| (x, 0.05 * strength, 0.05)).collect(),
        4 => sites.iter().map(|&(x, _)| (x, 0.025 * strength, 0.02)).collect(),
        _ => Vec::new(),
    };
    let surface = move |x: f64| {
        let lift: f64 = bumps
            .iter()
            .map(|&(bx, h, w)| h * (-(x - bx).powi(2) / (2.0 * w * w)).exp())
            .sum();
        top + tilt * (x - 0.5) + wave_amp * (std::f64::consts::TAU * wave_freq * x + phase).sin() - lift
    };
    let thickness_c = thickness.clone();
    canvas.fill(|x, y| {
        let mut edge = surface(x);
        let mut v = 0.08;
        if y >= edge {
            v = 0.12 * (-(y - edge - depth) * 6.0).exp().min(1.0);
            for (t, level) in thickness_c.iter().zip(levels) {
                if y < edge + t {
                    v = level;
                    break;
                }
                edge += t;
            }
        }
        let g = gain * v;
        [g, g, g]
    });

    let layer_y = |x: f64, layer: usize| surface(x) + thickness[..layer].iter().sum::<f64>() + thickness[layer] / 2.0;
    for &(x, _) in &sites {
        let k = strength;
        match family {
            0 => {
                for _ in 0..3 {
                    let xx = x + uniform(rng, -0.05, 0.05);
                    canvas.blob(xx, layer_y(xx, 1), 0.013, scale([0.4, 0.4, 0.4], k));
                }
            }
            2 => canvas.add(x, layer_y(x, 2), 0.05, scale([-0.4, -0.4, -0.4], k), |dx, dy| {
                let d = (dx / 0.035).powi(2) + (dy / 0.022).powi(2);
                (-(d * d)).exp()
            }),
            3 => canvas.add(x, layer_y(x, 4) - 0.03, 0.1, scale([-0.45, -0.45, -0.45], k), |dx, dy| {
                let d = (dx / 0.07).powi(2) + (dy / 0.02).powi(2);
                (-(d * d)).exp()
            }),
            5 => canvas.segment(x - 0.05, layer_y(x, 0), x + 0.05, layer_y(x, 0), 0.008, scale([-0.35, -0.35, -0.35], k)),
            6 => canvas.ring(x, layer_y(x, 2), 0.03, 0.006, scale([0.3, 0.3, 0.3], k)),
            7 => canvas.square(x, layer_y(x, 3), 0.015, scale([0.4, 0.4, 0.4], k)),
            _ => {}
        }
    }
}

/// Outcome of [`verify`]: one line per failed check.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct VerificationReport {
    pub failures: Vec<String>,
    pub checked_records: usize,
}

impl VerificationReport {
    pub fn is_ok(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn into_result(self) -> Result<Self> {
        if self.is_ok() {
            Ok(self)
        } else {
            Err(Error::Verification(self.failures.join("\n")))
        }
    }
}

/// Check split disjointness, knowledge-base coverage, high-resolution
/// alignment, train coverage of every (class, modality), and class balance.
pub fn verify(data: &Dataset) -> VerificationReport {
    let mut failures = Vec::new();
    let manifest = &data.manifest;
    if let Err(ids) = manifest.check_disjoint() {
        failures.push(format!("ids in several splits: {}", ids.join(", ")));
    }
    for r in &manifest.records {
        if !data.kb.contains(&r.label) {
            failures.push(format!("kb coverage: {} has label `{}` without descriptions", r.id, r.label));
        }
    }

    let tolerance = 1.0 / 255.0 + 1e-6;
    let alignment: Vec<String> = manifest
        .records
        .par_iter()
        .filter_map(|r| {
            let (image, hr) = match (data.store.image(&r.id), data.store.hr(&r.id)) {
                (Ok(i), Ok(h)) => (i, h),
                (Err(_), _) => return Some(format!("alignment: {} has no image", r.id)),
                (_, Err(_)) => return Some(format!("alignment: {} has no high-resolution source", r.id)),
            };
            let down = match hr.downsample(data.store.hr_factor) {
                Ok(d) => d,
                Err(e) => return Some(format!("alignment: {}: {e}", r.id)),
            };
            let worst = down
                .data
                .iter()
                .zip(&image.data)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f32, f32::max);
            (worst as f64 > tolerance).then(|| format!("alignment: {} differs from its source by {worst:.4}", r.id))
        })
        .collect();
    failures.extend(alignment);

    let labels: HashSet<&str> = manifest.records.iter().map(|r| r.label.as_str()).collect();
    let modalities: HashSet<Modality> = manifest.records.iter().map(|r| r.modality).collect();
    let mut counts: BTreeMap<(Modality, Split, &str), usize> = BTreeMap::new();
    for r in &manifest.records {
        *counts.entry((r.modality, r.split, r.label.as_str())).or_default() += 1;
    }
    let mut sorted_labels: Vec<&str> = labels.into_iter().collect();
    sorted_labels.sort_unstable();
    let mut sorted_modalities: Vec<Modality> = modalities.into_iter().collect();
    sorted_modalities.sort_unstable();
    for &m in &sorted_modalities {
        for &l in &sorted_labels {
            if counts.get(&(m, Split::Train, l)).copied().unwrap_or(0) == 0 {
                failures.push(format!("coverage: class `{l}` has no train sample in modality {m}"));
            }
        }
        for split in Split::ALL {
            let per_class: Vec<usize> = sorted_labels
                .iter()
                .map(|l| counts.get(&(m, split, *l)).copied().unwrap_or(0))
                .collect();
            if per_class.iter().any(|&c| c != per_class[0]) {
                failures.push(format!("balance: modality {m} {split} per-class counts {per_class:?}"));
            }
        }
    }
    VerificationReport {
        failures,
        checked_records: manifest.records.len(),
    }
}

/// Content words of `label`'s descriptions that occur in every one of them
/// and in no other label's descriptions.
pub fn unique_words(kb: &KnowledgeBase, label: &str) -> Vec<String> {
    let Some(descs) = kb.descriptions(label) else {
        return Vec::new();
    };
    let sets: Vec<HashSet<String>> = descs.iter().map(|d| split_words(d).into_iter().collect()).collect();
    let others: HashSet<String> = kb
        .labels()
        .filter(|l| *l != label)
        .flat_map(|l| kb.descriptions(l).unwrap_or(&[]).iter().flat_map(|d| split_words(d)))
        .collect();
    let mut words: Vec<String> = sets[0]
        .iter()
        .filter(|w| w.chars().all(char::is_alphabetic) && sets.iter().all(|s| s.contains(*w)) && !others.contains(*w))
        .cloned()
        .collect();
    words.sort();
    words
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> SyntheticSpec {
        SyntheticSpec {
            n_classes: 4,
            train_per_class: 3,
            val_per_class: 1,
            test_per_class: 2,
            image_size: 32,
            hr_factor: 2,
            channels: 3,
            preset: Preset::Default,
            noise: 0.03,
            seed: 11,
        }
    }

    #[test]
    fn knowledge_base_has_four_descriptions_with_unique_words() {
        let kb = knowledge_base(4).unwrap();
        assert_eq!(kb.len(), 4);
        for label in kb.labels() {
            assert_eq!(kb.descriptions(label).unwrap().len(), 4);
            assert!(unique_words(&kb, label).len() >= 2, "{label}");
        }
    }

    #[test]
    fn generation_is_deterministic_and_verifies() {
        let a = generate(&small_spec()).unwrap();
        let b = generate(&small_spec()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.manifest.records.len(), 2 * 4 * 6);
        let report = verify(&a);
        assert!(report.is_ok(), "{:?}", report.failures);
    }

    #[test]
    fn different_seeds_give_different_pixels() {
        let a = generate(&small_spec()).unwrap();
        let b = generate(&SyntheticSpec { seed: 12, ..small_spec() }).unwrap();
        let id = &a.manifest.records[0].id;
        assert_ne!(a.store.image(id).unwrap(), b.store.image(id).unwrap());
    }

    #[test]
    fn verification_names_broken_records() {
        let mut data = generate(&small_spec()).unwrap();
        let victim = data.manifest.records[5].id.clone();
        data.store.remove_hr(&victim);
        data.manifest.records[7].label = "c09".into();
        let relabeled = data.manifest.records[7].id.clone();
        let report = verify(&data);
        assert!(report.failures.iter().any(|f| f.starts_with("alignment") && f.contains(&victim)));
        assert!(report.failures.iter().any(|f| f.starts_with("kb coverage") && f.contains(&relabeled)));
        assert!(report.into_result().is_err());
    }

    #[test]
    fn impossible_specs_are_rejected() {
        assert!(generate(&SyntheticSpec { n_classes: 9, ..small_spec() }).is_err());
        assert!(generate(&SyntheticSpec { n_classes: 1, ..small_spec() }).is_err());
        assert!(generate(&SyntheticSpec { train_per_class: 0, ..small_spec() }).is_err());
    }
}
