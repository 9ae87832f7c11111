//! Patchification, exact-count random patch masking, and high-resolution
//! reconstruction targets.
//!
//! Patches are ordered row-major over the grid; inside a patch, values are
//! laid out `(row, col, channel)`.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::nn::Real;
use crate::rng::RandomStream;

#[derive(Clone, Debug, PartialEq)]
pub struct PatchSequence<F> {
    /// `n × (s·s·C)`
    pub patches: Array2<F>,
    pub grid: (usize, usize),
    pub patch_size: usize,
    pub channels: usize,
}

impl<F: Real> PatchSequence<F> {
    pub fn len(&self) -> usize {
        self.patches.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Cut `image` into non-overlapping `s × s` patches.
pub fn patchify<F: Real>(image: &Image, s: usize) -> Result<PatchSequence<F>> {
    if s == 0 || !image.side.is_multiple_of(s) {
        return Err(Error::Shape(format!(
            "image side {} is not divisible by patch size {s}",
            image.side
        )));
    }
    let grid = image.side / s;
    let c = image.channels;
    let mut patches = Array2::zeros((grid * grid, s * s * c));
    for gr in 0..grid {
        for gc in 0..grid {
            let mut row = patches.row_mut(gr * grid + gc);
            let mut k = 0;
            for pr in 0..s {
                for pc in 0..s {
                    for ch in 0..c {
                        row[k] = F::c(image.get(gr * s + pr, gc * s + pc, ch) as f64);
                        k += 1;
                    }
                }
            }
        }
    }
    Ok(PatchSequence {
        patches,
        grid: (grid, grid),
        patch_size: s,
        channels: c,
    })
}

/// Inverse of [`patchify`].
pub fn unpatchify<F: Real>(seq: &PatchSequence<F>) -> Result<Image> {
    let (rows, cols) = seq.grid;
    let s = seq.patch_size;
    let c = seq.channels;
    if rows != cols || seq.patches.dim() != (rows * cols, s * s * c) {
        return Err(Error::Shape("patch sequence does not match its grid".into()));
    }
    let mut image = Image::new(rows * s, c);
    for (i, row) in seq.patches.rows().into_iter().enumerate() {
        let (gr, gc) = (i / cols, i % cols);
        let mut k = 0;
        for pr in 0..s {
            for pc in 0..s {
                for ch in 0..c {
                    image.set(gr * s + pr, gc * s + pc, ch, row[k].as_f64() as f32);
                    k += 1;
                }
            }
        }
    }
    Ok(image)
}

/// Binary per-patch mask; `true` = masked.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskVector {
    pub bits: Vec<bool>,
    pub masked_count: usize,
}

impl MaskVector {
    pub fn from_bits(bits: Vec<bool>) -> Self {
        let masked_count = bits.iter().filter(|&&b| b).count();
        Self { bits, masked_count }
    }

    pub fn none(n: usize) -> Self {
        Self::from_bits(vec![false; n])
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn masked_positions(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.bits[i]).collect()
    }

    pub fn visible_positions(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.bits[i]).collect()
    }
}

/// Number of masked items for ratio `ratio` over `n`, `round(ratio·n)`.
pub fn masked_count(n: usize, ratio: f64) -> usize {
    ((ratio * n as f64).round() as usize).min(n)
}

/// Mask exactly `round(ratio·n)` patches, uniformly over position subsets
/// (prefix of a uniform random permutation).
pub fn sample_mask(n: usize, ratio: f64, rng: &mut RandomStream) -> Result<MaskVector> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::invalid("mask_ratio_image", format!("{ratio} is outside (0, 1)")));
    }
    let k = masked_count(n, ratio);
    let order = rng.permutation(n);
    let mut bits = vec![false; n];
    for &i in &order[..k] {
        bits[i] = true;
    }
    Ok(MaskVector { bits, masked_count: k })
}

/// Encoder input: the unmasked patches in original order with their positions.
#[derive(Clone, Debug, PartialEq)]
pub struct VisiblePatches<F> {
    pub patches: Array2<F>,
    pub positions: Vec<usize>,
    pub masked_positions: Vec<usize>,
}

pub fn apply_mask<F: Real>(seq: &PatchSequence<F>, mask: &MaskVector) -> Result<VisiblePatches<F>> {
    if mask.len() != seq.len() {
        return Err(Error::Shape(format!(
            "mask of length {} for {} patches",
            mask.len(),
            seq.len()
        )));
    }
    let positions = mask.visible_positions();
    if positions.is_empty() {
        return Err(Error::FullyMasked);
    }
    Ok(VisiblePatches {
        patches: seq.patches.select(ndarray::Axis(0), &positions),
        positions,
        masked_positions: mask.masked_positions(),
    })
}

/// Full-length decoder input: visible latents at their positions, the
/// shared `mask_token` at masked positions, plus `pos` at every position.
pub fn build_masked_sequence<F: Real>(
    latents: &Array2<F>,
    visible_positions: &[usize],
    mask: &MaskVector,
    mask_token: &Array1<F>,
    pos: &Array2<F>,
) -> Result<Array2<F>> {
    let n = mask.len();
    let width = mask_token.len();
    if latents.ncols() != width || pos.dim() != (n, width) {
        return Err(Error::Shape(format!(
            "decoder width mismatch: latents {}, mask token {width}, positional {:?}",
            latents.ncols(),
            pos.dim()
        )));
    }
    if latents.nrows() != visible_positions.len() || visible_positions.len() + mask.masked_count != n {
        return Err(Error::Shape("visible/masked position counts do not partition the sequence".into()));
    }
    let mut seq = pos.clone();
    for (row, &p) in latents.rows().into_iter().zip(visible_positions) {
        if mask.bits[p] {
            return Err(Error::Shape(format!("position {p} is both visible and masked")));
        }
        let mut slot = seq.row_mut(p);
        slot += &row;
    }
    for p in mask.masked_positions() {
        let mut slot = seq.row_mut(p);
        slot += mask_token;
    }
    Ok(seq)
}

/// Reconstruction targets for masked patches, taken from a source image at
/// `hr_factor×` the input resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct HrTargetSet<F> {
    /// `masked_count × (hr·s)²·C`
    pub targets: Array2<F>,
    pub positions: Vec<usize>,
}

pub fn make_hr_targets<F: Real>(
    source: &Image,
    mask: &MaskVector,
    s: usize,
    hr_factor: usize,
    image_size: usize,
) -> Result<HrTargetSet<F>> {
    if source.side != hr_factor * image_size {
        return Err(Error::Shape(format!(
            "high-resolution source is {}px, expected {}×{image_size}",
            source.side, hr_factor
        )));
    }
    let grid = image_size / s;
    if grid * grid != mask.len() {
        return Err(Error::Shape("mask length does not match the patch grid".into()));
    }
    let hs = hr_factor * s;
    let c = source.channels;
    let positions = mask.masked_positions();
    let mut targets = Array2::zeros((positions.len(), hs * hs * c));
    for (t, &p) in positions.iter().enumerate() {
        let (gr, gc) = (p / grid, p % grid);
        let mut k = 0;
        for pr in 0..hs {
            for pc in 0..hs {
                for ch in 0..c {
                    targets[[t, k]] = F::c(source.get(gr * hs + pr, gc * hs + pc, ch) as f64);
                    k += 1;
                }
            }
        }
    }
    Ok(HrTargetSet { targets, positions })
}

/// Standardize each row (per-patch normalized pixel targets).
pub fn normalize_rows<F: Real>(targets: &mut Array2<F>) {
    let d = F::c(targets.ncols() as f64);
    for mut row in targets.rows_mut() {
        let mean = row.sum() / d;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() / d;
        let inv = F::one() / (var + F::c(1e-6)).sqrt();
        row.mapv_inplace(|v| (v - mean) * inv);
    }
}
