//! Property and oracle checks shared by the focused test files and the
//! acceptance target. Each returns an [`Outcome`] instead of panicking so the
//! acceptance report can print every line before failing.

use std::time::Instant;

use kgmm_core::config::{MlmReplacement, ModelConfig, Reduction};
use kgmm_core::datagen::{generate, SyntheticSpec};
use kgmm_core::eval::{auprc, auroc};
use kgmm_core::masking::{make_hr_targets, masked_count, sample_mask, HrTargetSet, MaskVector};
use kgmm_core::model::{prepare_example, ExampleOptions, ObjectiveOptions, PretrainExample, PretrainModel};
use kgmm_core::nn::Params;
use kgmm_core::objectives::{mim_loss, mlm_loss};
use kgmm_core::text::{mask_tokens, tokenize, TokenRecord, PAD};
use kgmm_core::train::{pretrain, vocabulary_for, AdamW};
use kgmm_core::{seeded_rng, Config, Dataset, Image, RandomStream, Split};
use ndarray::Array2;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::gradient_check;

pub struct Outcome {
    pub pass: bool,
    pub detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: String) -> Self {
        Self { pass, detail }
    }
}

fn random_matrix(rows: usize, cols: usize, spread: f64, rng: &mut RandomStream) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || spread * (2.0 * rng.uniform() - 1.0))
}

/// Analytic vs central-difference gradients on the micro model, seeds 1..=6.
pub fn gradients() -> Outcome {
    let start = Instant::now();
    let cfg = ModelConfig::micro();
    let mut checked = 0;
    let mut failed = 0;
    let mut max_rel: f64 = 0.0;
    for seed in 1..=6 {
        let r = gradient_check(seed, 1e-4, 1e-4, 1e-5);
        checked += r.checked;
        failed += r.failures.len();
        max_rel = max_rel.max(r.max_rel);
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome::new(
        failed == 0 && secs < 120.0,
        format!(
            "micro model d={} n={} L={} vocab={}: {checked} parameter checks, {failed} over 1e-4, max rel {max_rel:.2e}, {secs:.1}s",
            cfg.encoder_width,
            cfg.num_patches(),
            cfg.max_text_len,
            cfg.vocab_size
        ),
    )
}

/// Random MIM instance: mask, reconstructions over all patches, and targets
/// taken from a random high-resolution source.
struct MimInstance {
    mask: MaskVector,
    recon: Array2<f64>,
    source: Image,
    s: usize,
    hr: usize,
    size: usize,
}

impl MimInstance {
    fn random(rng: &mut RandomStream) -> Self {
        let s = 1 + rng.below(3);
        let grid = 2 + rng.below(3);
        let hr = 1 + rng.below(2);
        let channels = if rng.uniform() < 0.5 { 1 } else { 3 };
        let size = grid * s;
        let n = grid * grid;
        let ratio = 0.1 + 0.8 * rng.uniform();
        let mut mask = sample_mask(n, ratio, rng).unwrap();
        if mask.masked_count == 0 {
            mask = MaskVector::from_bits((0..n).map(|i| i == 0).collect());
        }
        let side = size * hr;
        let data = (0..side * side * channels).map(|_| rng.uniform() as f32).collect();
        let source = Image::from_data(side, channels, data).unwrap();
        let recon = random_matrix(n, (hr * s) * (hr * s) * channels, 1.5, rng);
        Self {
            mask,
            recon,
            source,
            s,
            hr,
            size,
        }
    }

    fn targets(&self) -> HrTargetSet<f64> {
        make_hr_targets(&self.source, &self.mask, self.s, self.hr, self.size).unwrap()
    }

    /// Overwrite every source pixel and reconstruction of unmasked patches.
    fn perturb_unmasked(&mut self, rng: &mut RandomStream) {
        let grid = self.size / self.s;
        let hs = self.hr * self.s;
        for (p, &masked) in self.mask.bits.iter().enumerate() {
            if masked {
                continue;
            }
            let (gr, gc) = (p / grid, p % grid);
            for r in 0..hs {
                for c in 0..hs {
                    for ch in 0..self.source.channels {
                        self.source.set(gr * hs + r, gc * hs + c, ch, rng.uniform() as f32 * 9.0 - 4.0);
                    }
                }
            }
            self.recon.row_mut(p).mapv_inplace(|_| 100.0 * rng.normal());
        }
    }
}

/// Random MLM instance: a masked record and logits over every position.
fn mlm_instance(rng: &mut RandomStream) -> (TokenRecord, Array2<f64>) {
    let len = 4 + rng.below(13);
    let vocab = 6 + rng.below(25);
    let real = 3 + rng.below(len - 2);
    let mut ids: Vec<u32> = (0..len).map(|_| (5 + rng.below(vocab - 5)) as u32).collect();
    ids[0] = kgmm_core::text::CLS;
    ids[real - 1] = kgmm_core::text::SEP;
    for id in ids.iter_mut().skip(real) {
        *id = PAD;
    }
    let record = TokenRecord {
        ids,
        attention_len: real,
        mask_positions: Vec::new(),
        original_ids: Vec::new(),
    };
    let ratio = 0.15 + 0.8 * rng.uniform();
    let masked = mask_tokens(&record, ratio, MlmReplacement::Bert, vocab, rng).unwrap();
    let logits = random_matrix(len, vocab, 6.0, rng);
    (masked, logits)
}

/// 200 trials per loss: unmasked targets / logits have exactly no effect.
pub fn masked_only_invariance(trials: usize) -> Outcome {
    let start = Instant::now();
    let mut rng = seeded_rng(2, "masked-only");
    let mut mim_changed = 0;
    let mut mlm_changed = 0;
    for _ in 0..trials {
        let mut inst = MimInstance::random(&mut rng);
        let before = mim_loss(&inst.recon, &inst.targets(), &inst.mask, Reduction::Mean).unwrap();
        inst.perturb_unmasked(&mut rng);
        let after = mim_loss(&inst.recon, &inst.targets(), &inst.mask, Reduction::Mean).unwrap();
        if before.to_bits() != after.to_bits() {
            mim_changed += 1;
        }

        let (record, mut logits) = mlm_instance(&mut rng);
        let before = mlm_loss(&logits, &record, Reduction::Mean).unwrap();
        for p in (0..record.len()).filter(|p| !record.mask_positions.contains(p)) {
            logits.row_mut(p).mapv_inplace(|_| 50.0 * rng.normal());
        }
        let after = mlm_loss(&logits, &record, Reduction::Mean).unwrap();
        if before.to_bits() != after.to_bits() {
            mlm_changed += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome::new(
        mim_changed == 0 && mlm_changed == 0 && secs < 60.0,
        format!("{trials} trials per loss: MIM changed in {mim_changed}, MLM changed in {mlm_changed}, {secs:.2}s"),
    )
}

/// Straight-line MIM: mean over masked patches of summed squared error.
fn mim_oracle(inst: &MimInstance) -> f64 {
    let grid = inst.size / inst.s;
    let hs = inst.hr * inst.s;
    let c = inst.source.channels;
    let mut total = 0.0;
    let mut count = 0;
    for p in 0..inst.mask.len() {
        if !inst.mask.bits[p] {
            continue;
        }
        count += 1;
        let (gr, gc) = (p / grid, p % grid);
        let mut k = 0;
        for r in 0..hs {
            for col in 0..hs {
                for ch in 0..c {
                    let y = inst.source.get(gr * hs + r, gc * hs + col, ch) as f64;
                    let d = inst.recon[[p, k]] - y;
                    total += d * d;
                    k += 1;
                }
            }
        }
    }
    total / count as f64
}

/// Straight-line MLM: mean negative log-softmax at masked positions.
fn mlm_oracle(record: &TokenRecord, logits: &Array2<f64>) -> f64 {
    let mut total = 0.0;
    for (i, &p) in record.mask_positions.iter().enumerate() {
        let mut z = 0.0;
        for v in 0..logits.ncols() {
            z += logits[[p, v]].exp();
        }
        total += z.ln() - logits[[p, record.original_ids[i] as usize]];
    }
    total / record.mask_positions.len() as f64
}

pub fn loss_oracles(instances: usize) -> Outcome {
    let mut rng = seeded_rng(3, "loss-oracles");
    let mut mim_err: f64 = 0.0;
    let mut mlm_err: f64 = 0.0;
    for _ in 0..instances {
        let inst = MimInstance::random(&mut rng);
        let got = mim_loss(&inst.recon, &inst.targets(), &inst.mask, Reduction::Mean).unwrap();
        mim_err = mim_err.max((got - mim_oracle(&inst)).abs());
        let (record, logits) = mlm_instance(&mut rng);
        let got = mlm_loss(&logits, &record, Reduction::Mean).unwrap();
        mlm_err = mlm_err.max((got - mlm_oracle(&record, &logits)).abs());
    }
    Outcome::new(
        mim_err <= 1e-10 && mlm_err <= 1e-8,
        format!("{instances} instances each: max |MIM − oracle| {mim_err:.2e} (≤ 1e-10), max |MLM − oracle| {mlm_err:.2e} (≤ 1e-8)"),
    )
}

/// Pairwise AUROC: P(score_pos > score_neg) + ½ P(tie).
fn auroc_pairs(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if positive[i] && !positive[j] {
                pairs += 1.0;
                if si > sj {
                    wins += 1.0;
                } else if si == sj {
                    wins += 0.5;
                }
            }
        }
    }
    (pairs > 0.0).then(|| wins / pairs)
}

/// Average precision by enumerating every distinct score as a threshold.
fn ap_thresholds(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    if n_pos == 0 || n_pos == positive.len() {
        return None;
    }
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for t in thresholds {
        let selected: Vec<usize> = (0..scores.len()).filter(|&i| scores[i] >= t).collect();
        let tp = selected.iter().filter(|&&i| positive[i]).count() as f64;
        let recall = tp / n_pos as f64;
        let precision = tp / selected.len() as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Some(ap)
}

fn macro_oracle(scores: &[Vec<f64>], labels: &[usize], f: fn(&[f64], &[bool]) -> Option<f64>) -> Option<f64> {
    let k = scores[0].len();
    let vals: Vec<f64> = (0..k)
        .filter_map(|c| {
            let col: Vec<f64> = scores.iter().map(|s| s[c]).collect();
            let pos: Vec<bool> = labels.iter().map(|&l| l == c).collect();
            let n_pos = pos.iter().filter(|&&p| p).count();
            if n_pos == 0 || n_pos == pos.len() {
                return None;
            }
            f(&col, &pos)
        })
        .collect();
    (!vals.is_empty()).then(|| 100.0 * vals.iter().sum::<f64>() / vals.len() as f64)
}

pub fn metric_oracles(instances: usize) -> Outcome {
    let mut rng = seeded_rng(4, "metric-oracles");
    let mut roc_err: f64 = 0.0;
    let mut pr_err: f64 = 0.0;
    let mut mono_err: f64 = 0.0;
    let mut mismatched_errors = 0;
    for _ in 0..instances {
        let n = 1 + rng.below(50);
        let k = 2 + rng.below(4);
        let coarse = rng.uniform() < 0.5;
        let scores: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                (0..k)
                    .map(|_| {
                        let u = rng.uniform();
                        if coarse {
                            (u * 5.0).floor() / 5.0
                        } else {
                            u
                        }
                    })
                    .collect()
            })
            .collect();
        let labels: Vec<usize> = (0..n).map(|_| rng.below(k)).collect();
        let expect_roc = macro_oracle(&scores, &labels, auroc_pairs);
        let expect_pr = macro_oracle(&scores, &labels, ap_thresholds);
        match (auroc(&scores, &labels), expect_roc) {
            (Ok(got), Some(want)) => roc_err = roc_err.max((got - want).abs()),
            (Err(_), None) => {}
            _ => mismatched_errors += 1,
        }
        match (auprc(&scores, &labels), expect_pr) {
            (Ok(got), Some(want)) => pr_err = pr_err.max((got - want).abs()),
            (Err(_), None) => {}
            _ => mismatched_errors += 1,
        }
        if let Ok(base) = auroc(&scores, &labels) {
            let warped: Vec<Vec<f64>> = scores
                .iter()
                .map(|row| row.iter().map(|&v| (3.0 * v).exp() + v.powi(3) - 7.0).collect())
                .collect();
            mono_err = mono_err.max((auroc(&warped, &labels).unwrap() - base).abs());
        }
    }
    Outcome::new(
        roc_err <= 1e-10 && pr_err <= 1e-10 && mono_err <= 1e-10 && mismatched_errors == 0,
        format!(
            "{instances} instances: max AUROC err {roc_err:.1e}, max AUPRC err {pr_err:.1e}, monotone-transform drift {mono_err:.1e}, {mismatched_errors} error-path mismatches"
        ),
    )
}

/// Exact counts over a grid of `(n, ρ)` plus a subset-uniformity chi-square.
pub fn masking_combinatorics(draws: usize) -> Outcome {
    let mut rng = seeded_rng(5, "masking");
    let mut wrong = 0;
    let mut tested = 0;
    for n in 1..=80 {
        for ratio in [0.05, 0.1, 0.25, 1.0 / 3.0, 0.5, 0.6, 0.75, 0.9, 0.95] {
            let m = sample_mask(n, ratio, &mut rng).unwrap();
            let want = (ratio * n as f64).round() as usize;
            tested += 1;
            if m.masked_count != want || m.bits.iter().filter(|&&b| b).count() != want || masked_count(n, ratio) != want {
                wrong += 1;
            }
        }
    }
    let mut counts = [0usize; 16];
    for _ in 0..draws {
        let m = sample_mask(4, 0.5, &mut rng).unwrap();
        let code = m.bits.iter().enumerate().fold(0, |acc, (i, &b)| acc | (usize::from(b) << i));
        counts[code] += 1;
    }
    let subsets: Vec<usize> = (0..16).filter(|c: &usize| c.count_ones() == 2).collect();
    let stray: usize = (0..16).filter(|c| !subsets.contains(c)).map(|c| counts[c]).sum();
    let expected = draws as f64 / subsets.len() as f64;
    let chi2: f64 = subsets.iter().map(|&c| (counts[c] as f64 - expected).powi(2) / expected).sum();
    let p = 1.0 - ChiSquared::new((subsets.len() - 1) as f64).unwrap().cdf(chi2);
    Outcome::new(
        wrong == 0 && stray == 0 && p > 0.001,
        format!("{tested} (n, ρ) pairs with {wrong} wrong counts; n=4 k=2 over {draws} draws: χ² {chi2:.2} on 5 dof, p {p:.3}"),
    )
}

/// Eight default-preset samples with a fixed mask each.
pub fn tiny_dataset(per_class: usize, n_classes: usize, seed: u64) -> Dataset {
    let mut config = Config::default();
    config.data.n_classes = n_classes;
    config.data.train_per_class = per_class;
    config.data.val_per_class = 1;
    config.data.test_per_class = 1;
    config.data.seed = seed;
    generate(&SyntheticSpec::from_config(&config.data, &config.model).unwrap()).unwrap()
}

fn fixed_examples(model_cfg: &ModelConfig, data: &Dataset, count: usize) -> Vec<PretrainExample<f32>> {
    let train = Config::default().pretrain;
    let vocab = vocabulary_for(&data.kb, model_cfg.vocab_size).unwrap();
    let opts = ExampleOptions::from_train(&train, vocab.len());
    data.manifest
        .select(Split::Train, train.modalities)
        .into_iter()
        .take(count)
        .enumerate()
        .map(|(i, r)| {
            let desc = &data.kb.descriptions(&r.label).unwrap()[i % 4];
            prepare_example(
                model_cfg,
                &opts,
                &data.store.image(&r.id).unwrap(),
                &data.store.hr(&r.id).unwrap(),
                Some(&tokenize(desc, &vocab, model_cfg.max_text_len)),
                &mut seeded_rng(i as u64, "overfit-image"),
                &mut seeded_rng(i as u64, "overfit-text"),
            )
            .unwrap()
        })
        .collect()
}

/// Toy model, 8 fixed masked samples, full-batch AdamW for up to 300 steps.
pub fn overfit(steps: usize) -> Outcome {
    let start = Instant::now();
    let cfg = ModelConfig::toy();
    let data = tiny_dataset(1, 4, 11);
    let examples = fixed_examples(&cfg, &data, 8);
    let mut model = PretrainModel::<f32>::new(&cfg, 0).unwrap();
    let objective = ObjectiveOptions::default();
    let mut opt = AdamW::new(0.9, 0.95, 0.0);
    let mut first = f64::NAN;
    let mut best = f64::INFINITY;
    let mut reached = None;
    for step in 1..=steps {
        let mut grads = model.zeros_like();
        let mut total = 0.0;
        for ex in &examples {
            total += model.accumulate(ex, &objective, &mut grads).unwrap().total;
        }
        total /= examples.len() as f64;
        grads.scale(1.0 / examples.len() as f32);
        opt.step(&mut model, &grads, 1e-3, &|_| true);
        if step == 1 {
            first = total;
        }
        best = best.min(total);
        if total < 0.1 * first {
            reached = Some(step);
            break;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome::new(
        reached.is_some() && secs < 300.0,
        format!(
            "{} samples: step-1 loss {first:.3}, lowest {best:.3} ({:.1}% of step 1), below 10% at step {}, {secs:.1}s",
            examples.len(),
            100.0 * best / first,
            reached.map_or("never".to_string(), |s| s.to_string())
        ),
    )
}

/// Two identical pretraining runs give byte-identical metrics logs.
pub fn determinism() -> Outcome {
    let data = tiny_dataset(3, 2, 21);
    let mut config = Config::default();
    config.pretrain.epochs = 2;
    config.pretrain.warmup_epochs = 1;
    config.pretrain.batch_size = 4;
    config.pretrain.seed = 9;
    let run = || {
        let mut model = PretrainModel::<f32>::new(&config.model, config.pretrain.seed).unwrap();
        let outcome = pretrain(&mut model, &data, &config.pretrain, &mut |_, _| Ok(())).unwrap();
        (outcome.metrics_log(), model.flatten())
    };
    let (log_a, params_a) = run();
    let (log_b, params_b) = run();
    let lines = log_a.lines().count() - 1;
    let same_params = params_a.iter().zip(&params_b).all(|(a, b)| a.to_bits() == b.to_bits());
    Outcome::new(
        log_a == log_b && same_params,
        format!(
            "{lines} logged steps; metrics logs identical: {}, final parameters bit-identical: {same_params}",
            log_a == log_b
        ),
    )
}
