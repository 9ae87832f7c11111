//! Acceptance report: one PASS/FAIL line per criterion, then a non-zero exit
//! if any failed. Runs without the libtest harness so the report is always
//! printed, captured or not.
//!
//! Criteria 7 to 10 share one set of pretraining runs per seed, using the
//! desk-scale recipe in `configs/desk.toml` on the default synthetic dataset.

mod support;

use std::io::Write;
use std::process::ExitCode;
use std::time::Instant;

use kgmm_core::datagen::{generate, SyntheticSpec};
use kgmm_core::eval::{finetune_and_test, mean_sd, run_pretrain};
use kgmm_core::model::Encoder;
use kgmm_core::train::Task;
use kgmm_core::{Config, Dataset, ModalityPool, PretrainModel, Split};
use support::checks::{self, Outcome};

const SEEDS: [u64; 3] = [1, 2, 3];
const DESK: &str = include_str!("../../../configs/desk.toml");

struct Report {
    failed: usize,
}

impl Report {
    fn line(&mut self, id: usize, name: &str, outcome: Outcome) {
        let verdict = if outcome.pass { "PASS" } else { "FAIL" };
        if !outcome.pass {
            self.failed += 1;
        }
        println!("criterion {id:>2} [{verdict}] {name}: {}", outcome.detail);
        let _ = std::io::stdout().flush();
    }
}

fn fmt_seeds(values: &[f64]) -> String {
    let parts: Vec<String> = SEEDS.iter().zip(values).map(|(s, v)| format!("seed {s} {v:.2}")).collect();
    parts.join(", ")
}

/// Fine-tune a copy of `encoder` on `pool` at `fraction` of the labels.
fn score(config: &Config, data: &Dataset, encoder: &Encoder<f32>, pool: ModalityPool, fraction: f64, seed: u64) -> f64 {
    let mut ft = config.finetune.clone();
    ft.seed = seed;
    ft.label_fraction = fraction;
    let task = Task::new(&data.manifest, pool);
    let id = format!("task-{pool}@{fraction}");
    finetune_and_test(&config.model, encoder.clone(), data, &task, &ft, &id)
        .expect("fine-tuning succeeds")
        .1
        .auroc
}

fn pretrained(config: &Config, data: &Dataset, pool: ModalityPool, text: bool, seed: u64) -> Encoder<f32> {
    let mut pre = config.pretrain.clone();
    pre.seed = seed;
    pre.modalities = pool;
    pre.text_enabled = text;
    run_pretrain(&config.model, data, &pre).expect("pretraining succeeds").model.encoder
}

fn mean(values: &[f64]) -> f64 {
    mean_sd(values).0
}

fn main() -> ExitCode {
    let mut report = Report { failed: 0 };
    report.line(1, "gradient correctness", checks::gradients());
    report.line(2, "masked-only loss invariance", checks::masked_only_invariance(200));
    report.line(3, "loss oracle equivalence", checks::loss_oracles(200));
    report.line(4, "metric oracle equivalence", checks::metric_oracles(500));
    report.line(5, "masking combinatorics", checks::masking_combinatorics(60_000));
    report.line(6, "overfit sanity", checks::overfit(300));

    let config = Config::parse(DESK).expect("desk config is valid");
    let data = generate(&SyntheticSpec::from_config(&config.data, &config.model).unwrap()).unwrap();
    let f = config.finetune.label_fraction;

    // 7: A+B text-on pretraining vs random init, identical fine-tuning budget.
    let start = Instant::now();
    let mut on_encoders = Vec::new();
    let (mut on_ab, mut rand_ab) = (Vec::new(), Vec::new());
    for &seed in &SEEDS {
        let enc = pretrained(&config, &data, ModalityPool::Both, true, seed);
        on_ab.push(score(&config, &data, &enc, ModalityPool::Both, f, seed));
        let random = PretrainModel::<f32>::new(&config.model, seed).unwrap().encoder;
        rand_ab.push(score(&config, &data, &random, ModalityPool::Both, f, seed));
        on_encoders.push(enc);
    }
    let gap = mean(&on_ab) - mean(&rand_ab);
    report.line(
        7,
        "transfer benefit",
        Outcome {
            pass: gap >= 5.0 && start.elapsed().as_secs_f64() < 45.0 * 60.0,
            detail: format!(
                "{} pretraining images, {:.0}% labels, task A+B: pretrained {:.2} [{}] vs random init {:.2} [{}], gap {gap:+.2} (≥ +5), {:.0}s",
                data.manifest.records.iter().filter(|r| r.split == Split::Train).count(),
                100.0 * f,
                mean(&on_ab),
                fmt_seeds(&on_ab),
                mean(&rand_ab),
                fmt_seeds(&rand_ab),
                start.elapsed().as_secs_f64()
            ),
        },
    );

    // 8: A+B pool, text on vs off; each arm scored as the mean of tasks A and B.
    let (mut on_cell, mut off_cell, mut on_b) = (Vec::new(), Vec::new(), Vec::new());
    for (i, &seed) in SEEDS.iter().enumerate() {
        let a = score(&config, &data, &on_encoders[i], ModalityPool::A, f, seed);
        let b = score(&config, &data, &on_encoders[i], ModalityPool::B, f, seed);
        on_cell.push((a + b) / 2.0);
        on_b.push(b);
        let off = pretrained(&config, &data, ModalityPool::Both, false, seed);
        let a = score(&config, &data, &off, ModalityPool::A, f, seed);
        let b = score(&config, &data, &off, ModalityPool::B, f, seed);
        off_cell.push((a + b) / 2.0);
    }
    let diffs: Vec<f64> = on_cell.iter().zip(&off_cell).map(|(a, b)| a - b).collect();
    report.line(
        8,
        "text-supervision direction",
        Outcome {
            pass: mean(&diffs) >= 0.0,
            detail: format!(
                "A+B pool, mean of tasks A and B: text on {:.2} vs off {:.2}; per-seed (on − off) [{}], mean {:+.2} (≥ 0)",
                mean(&on_cell),
                mean(&off_cell),
                fmt_seeds(&diffs),
                mean(&diffs)
            ),
        },
    );

    // 9: A-only vs A+B pretraining (text on), both scored on task B.
    let mut a_only_b = Vec::new();
    for &seed in &SEEDS {
        let enc = pretrained(&config, &data, ModalityPool::A, true, seed);
        a_only_b.push(score(&config, &data, &enc, ModalityPool::B, f, seed));
    }
    report.line(
        9,
        "multimodality direction",
        Outcome {
            pass: mean(&a_only_b) < mean(&on_b),
            detail: format!(
                "task B: A-only pretraining {:.2} [{}] vs A+B pretraining {:.2} [{}]",
                mean(&a_only_b),
                fmt_seeds(&a_only_b),
                mean(&on_b),
                fmt_seeds(&on_b)
            ),
        },
    );

    // 10: A+B pretrained encoder, task A+B, 10% vs 100% of the labels.
    let mut full = Vec::new();
    for (i, &seed) in SEEDS.iter().enumerate() {
        full.push(score(&config, &data, &on_encoders[i], ModalityPool::Both, 1.0, seed));
    }
    report.line(
        10,
        "data-efficiency ordering",
        Outcome {
            pass: mean(&full) >= mean(&on_ab),
            detail: format!(
                "task A+B: {:.0}% labels {:.2} [{}] → 100% labels {:.2} [{}]",
                100.0 * f,
                mean(&on_ab),
                fmt_seeds(&on_ab),
                mean(&full),
                fmt_seeds(&full)
            ),
        },
    );

    report.line(11, "determinism", checks::determinism());

    if report.failed == 0 {
        println!("acceptance: all 11 criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {} of 11 criteria failed", report.failed);
        ExitCode::FAILURE
    }
}
