//! Square multi-channel images with values in `[0, 1]`, stored row-major as
//! `side × side × channels`.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub side: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl Image {
    pub fn new(side: usize, channels: usize) -> Self {
        Self {
            side,
            channels,
            data: vec![0.0; side * side * channels],
        }
    }

    pub fn from_data(side: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != side * side * channels {
            return Err(Error::Shape(format!(
                "{} values for a {side}×{side}×{channels} image",
                data.len()
            )));
        }
        Ok(Self { side, channels, data })
    }

    #[inline]
    pub fn idx(&self, row: usize, col: usize, ch: usize) -> usize {
        (row * self.side + col) * self.channels + ch
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, ch: usize) -> f32 {
        self.data[self.idx(row, col, ch)]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, ch: usize, v: f32) {
        let i = self.idx(row, col, ch);
        self.data[i] = v;
    }

    /// Average over non-overlapping `factor × factor` boxes.
    pub fn downsample(&self, factor: usize) -> Result<Image> {
        if factor == 0 || !self.side.is_multiple_of(factor) {
            return Err(Error::Shape(format!(
                "side {} not divisible by downsample factor {factor}",
                self.side
            )));
        }
        let side = self.side / factor;
        let mut out = Image::new(side, self.channels);
        let norm = 1.0 / (factor * factor) as f32;
        for r in 0..side {
            for c in 0..side {
                for ch in 0..self.channels {
                    let mut acc = 0.0;
                    for dr in 0..factor {
                        for dc in 0..factor {
                            acc += self.get(r * factor + dr, c * factor + dc, ch);
                        }
                    }
                    out.set(r, c, ch, acc * norm);
                }
            }
        }
        Ok(out)
    }

    pub fn flip_horizontal(&self) -> Image {
        let mut out = self.clone();
        for r in 0..self.side {
            for c in 0..self.side {
                for ch in 0..self.channels {
                    out.set(r, c, ch, self.get(r, self.side - 1 - c, ch));
                }
            }
        }
        out
    }

    /// Resample the square window `[top, top+size) × [left, left+size)` (in
    /// continuous pixel units) to `out_side × out_side` by exact area averaging.
    pub fn crop_resize(&self, top: f64, left: f64, size: f64, out_side: usize) -> Image {
        let wy = area_weights(top, size, self.side, out_side);
        let wx = area_weights(left, size, self.side, out_side);
        let mut tmp = vec![0.0f64; out_side * self.side * self.channels];
        // rows first
        for (o, weights) in wy.iter().enumerate() {
            for &(i, w) in weights {
                for c in 0..self.side {
                    for ch in 0..self.channels {
                        tmp[(o * self.side + c) * self.channels + ch] += w * self.get(i, c, ch) as f64;
                    }
                }
            }
        }
        let mut out = Image::new(out_side, self.channels);
        for r in 0..out_side {
            for (o, weights) in wx.iter().enumerate() {
                for ch in 0..self.channels {
                    let v: f64 = weights
                        .iter()
                        .map(|&(i, w)| w * tmp[(r * self.side + i) * self.channels + ch])
                        .sum();
                    out.set(r, o, ch, v as f32);
                }
            }
        }
        out
    }

    pub fn mean(&self) -> f32 {
        self.data.iter().sum::<f32>() / self.data.len() as f32
    }

    pub fn to_u8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }

    pub fn from_u8(side: usize, channels: usize, bytes: &[u8]) -> Result<Image> {
        Image::from_data(side, channels, bytes.iter().map(|&b| b as f32 / 255.0).collect())
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let color = match self.channels {
            1 => png::ColorType::Grayscale,
            3 => png::ColorType::Rgb,
            c => {
                return Err(Error::Image {
                    path: path.into(),
                    reason: format!("cannot store {c} channels as PNG"),
                })
            }
        };
        let to_err = |e: png::EncodingError| Error::Image {
            path: path.into(),
            reason: e.to_string(),
        };
        let file = BufWriter::new(File::create(path)?);
        let mut enc = png::Encoder::new(file, self.side as u32, self.side as u32);
        enc.set_color(color);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().map_err(to_err)?;
        writer.write_image_data(&self.to_u8()).map_err(to_err)?;
        writer.finish().map_err(to_err)?;
        Ok(())
    }

    pub fn load_png(path: &Path) -> Result<Image> {
        let to_err = |e: png::DecodingError| Error::Image {
            path: path.into(),
            reason: e.to_string(),
        };
        let decoder = png::Decoder::new(BufReader::new(File::open(path)?));
        let mut reader = decoder.read_info().map_err(to_err)?;
        let size = reader.output_buffer_size().ok_or_else(|| Error::Image {
            path: path.into(),
            reason: "image too large".into(),
        })?;
        let mut buf = vec![0; size];
        let info = reader.next_frame(&mut buf).map_err(to_err)?;
        let channels = match info.color_type {
            png::ColorType::Grayscale => 1,
            png::ColorType::Rgb => 3,
            other => {
                return Err(Error::Image {
                    path: path.into(),
                    reason: format!("unsupported color type {other:?}"),
                })
            }
        };
        if info.width != info.height || info.bit_depth != png::BitDepth::Eight {
            return Err(Error::Image {
                path: path.into(),
                reason: "expected a square 8-bit image".into(),
            });
        }
        Image::from_u8(info.width as usize, channels, &buf[..info.buffer_size()])
    }
}

/// For each output cell, the (input index, weight) pairs covering its
/// footprint `[start + o·step, start + (o+1)·step)`, weights summing to 1.
fn area_weights(start: f64, size: f64, in_len: usize, out_len: usize) -> Vec<Vec<(usize, f64)>> {
    let step = size / out_len as f64;
    (0..out_len)
        .map(|o| {
            let a = start + o as f64 * step;
            let b = a + step;
            let first = a.floor().max(0.0) as usize;
            let last = (b.ceil() as usize).min(in_len);
            let mut cells: Vec<(usize, f64)> = (first..last)
                .filter_map(|i| {
                    let overlap = (b.min(i as f64 + 1.0) - a.max(i as f64)).max(0.0);
                    (overlap > 0.0).then_some((i, overlap))
                })
                .collect();
            let total: f64 = cells.iter().map(|c| c.1).sum();
            cells.iter_mut().for_each(|c| c.1 /= total);
            cells
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(side: usize) -> Image {
        let data = (0..side * side * 3).map(|i| (i % 97) as f32 / 97.0).collect();
        Image::from_data(side, 3, data).unwrap()
    }

    #[test]
    fn flip_is_an_involution() {
        let img = ramp(8);
        assert_ne!(img.flip_horizontal(), img);
        assert_eq!(img.flip_horizontal().flip_horizontal(), img);
    }

    #[test]
    fn full_crop_is_identity() {
        let img = ramp(8);
        let out = img.crop_resize(0.0, 0.0, 8.0, 8);
        for (a, b) in out.data.iter().zip(&img.data) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn downsample_averages_boxes() {
        let img = Image::from_data(2, 1, vec![0.0, 1.0, 0.5, 0.5]).unwrap();
        assert_eq!(img.downsample(2).unwrap().data, vec![0.5]);
        assert!(img.downsample(3).is_err());
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.png");
        let img = Image::from_u8(4, 3, &(0..48).map(|i| (i * 5) as u8).collect::<Vec<_>>()).unwrap();
        img.save_png(&p).unwrap();
        assert_eq!(Image::load_png(&p).unwrap(), img);
    }
}
