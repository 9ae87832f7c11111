use crate::config::TrainConfig;
use crate::image::Image;
use crate::rng::RandomStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Pretrain,
    Finetune,
}

/// Which random transforms run, and how often.
///
/// Pretraining uses flips and random crops; fine-tuning uses flips and color
/// jitter. Geometric transforms are mirrored onto the high-resolution source.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentationPolicy {
    pub stage: Stage,
    pub flip_prob: f64,
    pub crop_prob: f64,
    /// Crop area is uniform in `[crop_scale_min, 1]` of the image area.
    pub crop_scale_min: f64,
    pub jitter_prob: f64,
    /// Brightness, contrast and saturation factors are uniform in `1 ± strength`.
    pub jitter_strength: f64,
}

impl AugmentationPolicy {
    pub fn new(stage: Stage, cfg: &TrainConfig) -> Self {
        let (crop_prob, jitter_prob) = match stage {
            Stage::Pretrain => (cfg.crop_prob, 0.0),
            Stage::Finetune => (0.0, cfg.jitter_prob),
        };
        Self {
            stage,
            flip_prob: cfg.flip_prob,
            crop_prob,
            crop_scale_min: cfg.crop_scale_min,
            jitter_prob,
            jitter_strength: cfg.jitter_strength,
        }
    }

    /// Leaves every image unchanged.
    pub fn identity(stage: Stage) -> Self {
        Self {
            stage,
            flip_prob: 0.0,
            crop_prob: 0.0,
            crop_scale_min: 1.0,
            jitter_prob: 0.0,
            jitter_strength: 0.0,
        }
    }
}

/// Apply the policy to `image` and, geometrically only, to its `hr` source.
///
/// The random draws are made in a fixed order regardless of which transforms
/// fire, so a stream always yields the same number of values.
pub fn augment(
    image: &Image,
    hr: Option<&Image>,
    policy: &AugmentationPolicy,
    rng: &mut RandomStream,
) -> (Image, Option<Image>) {
    let flip = rng.bernoulli(policy.flip_prob);
    let crop = rng.bernoulli(policy.crop_prob);
    let scale = policy.crop_scale_min + (1.0 - policy.crop_scale_min) * rng.uniform();
    let (u_top, u_left) = (rng.uniform(), rng.uniform());
    let jitter = rng.bernoulli(policy.jitter_prob);
    let factors: Vec<f64> = (0..3)
        .map(|_| 1.0 + policy.jitter_strength * (2.0 * rng.uniform() - 1.0))
        .collect();

    let mut out = image.clone();
    let mut out_hr = hr.cloned();
    if flip {
        out = out.flip_horizontal();
        out_hr = out_hr.map(|h| h.flip_horizontal());
    }
    if crop {
        let side = image.side as f64;
        let size = scale.sqrt() * side;
        let (top, left) = (u_top * (side - size), u_left * (side - size));
        match out_hr.take() {
            // derive the input from the cropped source so the two stay exactly aligned
            Some(h) if h.side % image.side == 0 => {
                let k = h.side / image.side;
                let kf = k as f64;
                let cropped = h.crop_resize(top * kf, left * kf, size * kf, h.side);
                out = cropped.downsample(k).expect("integer factor");
                out_hr = Some(cropped);
            }
            other => {
                out = out.crop_resize(top, left, size, image.side);
                out_hr = other.map(|h| {
                    let k = h.side as f64 / side;
                    h.crop_resize(top * k, left * k, size * k, h.side)
                });
            }
        }
    }
    if jitter {
        color_jitter(&mut out, factors[0], factors[1], factors[2]);
    }
    (out, out_hr)
}

/// Brightness scale, contrast about the image mean, saturation about the
/// per-pixel channel mean; results clamped to `[0, 1]`.
pub fn color_jitter(image: &mut Image, brightness: f64, contrast: f64, saturation: f64) {
    image.data.iter_mut().for_each(|v| *v = (*v as f64 * brightness) as f32);
    let mean = image.mean() as f64;
    image
        .data
        .iter_mut()
        .for_each(|v| *v = (mean + (*v as f64 - mean) * contrast) as f32);
    if image.channels > 1 {
        for px in image.data.chunks_mut(image.channels) {
            let gray = px.iter().map(|&v| v as f64).sum::<f64>() / px.len() as f64;
            px.iter_mut()
                .for_each(|v| *v = (gray + (*v as f64 - gray) * saturation) as f32);
        }
    }
    image.data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_rng;

    fn noise(side: usize, seed: u64) -> Image {
        let mut rng = seeded_rng(seed, "img");
        Image::from_data(side, 3, (0..side * side * 3).map(|_| rng.uniform() as f32).collect()).unwrap()
    }

    fn forced(stage: Stage) -> AugmentationPolicy {
        AugmentationPolicy {
            flip_prob: 1.0,
            ..AugmentationPolicy::identity(stage)
        }
    }

    #[test]
    fn double_flip_is_identity() {
        let img = noise(8, 1);
        let p = forced(Stage::Pretrain);
        let (once, _) = augment(&img, None, &p, &mut seeded_rng(0, "a"));
        assert_ne!(once, img);
        let (twice, _) = augment(&once, None, &p, &mut seeded_rng(0, "a"));
        assert_eq!(twice, img);
    }

    #[test]
    fn full_scale_crop_is_identity() {
        let img = noise(8, 2);
        let p = AugmentationPolicy {
            crop_prob: 1.0,
            ..AugmentationPolicy::identity(Stage::Pretrain)
        };
        let (out, _) = augment(&img, None, &p, &mut seeded_rng(0, "a"));
        for (a, b) in out.data.iter().zip(&img.data) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn crops_stay_aligned_with_high_resolution_source() {
        let policy = AugmentationPolicy::new(Stage::Pretrain, &TrainConfig::pretrain());
        for seed in 0..20 {
            let hr = noise(16, seed);
            let lo = hr.downsample(2).unwrap();
            let (a, a_hr) = augment(&lo, Some(&hr), &policy, &mut seeded_rng(seed, "aug"));
            let back = a_hr.unwrap().downsample(2).unwrap();
            for (x, y) in a.data.iter().zip(&back.data) {
                assert!((x - y).abs() < 1e-5, "seed {seed}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn jitter_never_touches_the_hr_source_and_stays_in_range() {
        let policy = AugmentationPolicy {
            jitter_prob: 1.0,
            jitter_strength: 0.2,
            ..AugmentationPolicy::identity(Stage::Finetune)
        };
        let hr = noise(16, 3);
        let lo = hr.downsample(2).unwrap();
        let (a, a_hr) = augment(&lo, Some(&hr), &policy, &mut seeded_rng(1, "aug"));
        assert_eq!(a_hr.unwrap(), hr);
        assert_ne!(a, lo);
        assert!(a.data.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn stage_defaults() {
        let pre = AugmentationPolicy::new(Stage::Pretrain, &TrainConfig::pretrain());
        assert_eq!((pre.flip_prob, pre.jitter_prob), (0.5, 0.0));
        assert!(pre.crop_prob > 0.0);
        let ft = AugmentationPolicy::new(Stage::Finetune, &TrainConfig::finetune());
        assert_eq!((ft.flip_prob, ft.crop_prob, ft.jitter_prob), (0.5, 0.0, 0.5));
    }
}
