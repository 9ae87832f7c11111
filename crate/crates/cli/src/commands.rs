use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use kgmm_core::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointKind};
use kgmm_core::datagen::{generate, verify, SyntheticSpec};
use kgmm_core::eval::{data_efficiency_sweep, finetune_and_test, run_ablation, sweep_csv, test_report};
use kgmm_core::model::Encoder;
use kgmm_core::train::{pretrain, Task, METRICS_HEADER};
use kgmm_core::{Error, PretrainModel};
use serde_json::{json, Map, Value};

use crate::args::{AblateArgs, Common, InspectArgs, SweepArgs, WithCheckpoint};
use crate::run::{Run, Stage};

fn fields(value: Value) -> Map<String, Value> {
    match value {
        Value::Object(m) => m,
        _ => unreachable!("json! object literal"),
    }
}

pub fn datagen(args: &Common) -> Result<()> {
    let run = Run::prepare(args, Stage::Data)?;
    let spec = SyntheticSpec::from_config(&run.config.data, &run.config.model)?;
    let data = generate(&spec)?;
    let report = verify(&data).into_result()?;
    data.save(&run.out)?;
    log::info!("wrote {} records to {}", data.manifest.records.len(), run.out.display());
    run.write_result(
        "datagen",
        fields(json!({
            "records": data.manifest.records.len(),
            "classes": spec.n_classes,
            "checked_records": report.checked_records,
            "kb_labels": data.kb.len(),
        })),
    )
}

pub fn pretrain_cmd(args: &Common) -> Result<()> {
    let run = Run::prepare(args, Stage::Pretrain)?;
    let data = run.load_data()?;
    let cfg = run.config.pretrain.clone();
    let mut model = PretrainModel::<f32>::new(&run.config.model, cfg.seed)?;
    let ckpt_dir = run.out.join("checkpoints");
    fs::create_dir_all(&ckpt_dir)?;
    let every = cfg.checkpoint_every;
    let seed = run.seed;
    let outcome = pretrain(&mut model, &data, &cfg, &mut |end, model| {
        if end.is_last || (every > 0 && end.epoch % every == 0) {
            let mut ck = Checkpoint::from_pretrain(model, end.step as u64, end.epoch as u64);
            ck.meta.insert("seed".into(), seed.to_string());
            save_checkpoint(&ck, ckpt_dir.join(format!("epoch-{:04}.ckpt", end.epoch)))?;
        }
        Ok(())
    })?;
    let mut ck = Checkpoint::from_pretrain(&model, outcome.steps as u64, cfg.epochs as u64);
    ck.meta.insert("seed".into(), seed.to_string());
    save_checkpoint(&ck, run.out.join("pretrain.ckpt"))?;
    run.write("metrics.csv", &outcome.metrics_log())?;
    let last = outcome.metrics.last();
    run.write_result(
        "pretrain",
        fields(json!({
            "steps": outcome.steps,
            "epochs": cfg.epochs,
            "final_mim": last.map(|m| m.mim),
            "final_mlm": last.map(|m| m.mlm),
            "final_total": last.map(|m| m.total),
            "text_enabled": cfg.text_enabled,
            "modalities": cfg.modalities.to_string(),
            "fingerprint": ck.fingerprint(),
            "metrics_columns": METRICS_HEADER,
        })),
    )
}

/// Encoder from a pretrain or classifier checkpoint, or a fresh one.
fn encoder_for(run: &Run, checkpoint: Option<&Path>) -> Result<(Encoder<f32>, String)> {
    match checkpoint {
        Some(path) => {
            let ck = load_checkpoint(path, Some(&run.config.model))
                .with_context(|| format!("loading checkpoint {}", path.display()))?;
            Ok((ck.restore_encoder()?, path.display().to_string()))
        }
        None => Ok((
            PretrainModel::<f32>::new(&run.config.model, run.config.finetune.seed)?.encoder,
            "random".to_string(),
        )),
    }
}

pub fn finetune_cmd(args: &WithCheckpoint) -> Result<()> {
    let run = Run::prepare(&args.common, Stage::Finetune)?;
    let data = run.load_data()?;
    let cfg = run.config.finetune.clone();
    let task = Task::new(&data.manifest, cfg.modalities);
    let (encoder, init) = encoder_for(&run, args.checkpoint.as_deref())?;
    let id = format!("task-{}", task.pool);
    let (outcome, report) = finetune_and_test(&run.config.model, encoder, &data, &task, &cfg, &id)?;
    let mut ck = Checkpoint::from_classifier(&outcome.classifier, outcome.steps as u64, outcome.best_epoch as u64);
    ck.meta.insert("classes".into(), task.classes.join(","));
    ck.meta.insert("pool".into(), task.pool.to_string());
    ck.meta.insert("seed".into(), run.seed.to_string());
    save_checkpoint(&ck, run.out.join("classifier.ckpt"))?;
    let mut history = String::from("epoch,train_loss,val_auroc\n");
    for h in &outcome.history {
        history.push_str(&format!("{},{:.9e},{:.6}\n", h.epoch, h.train_loss, h.val_auroc));
    }
    run.write("history.csv", &history)?;
    run.write_result(
        "finetune",
        fields(json!({
            "init": init,
            "task": id,
            "label_fraction": cfg.label_fraction,
            "train_size": outcome.train_size,
            "best_epoch": outcome.best_epoch,
            "best_val_auroc": outcome.best_val_auroc,
            "test_auroc": report.auroc,
            "test_auprc": report.auprc,
            "n_test": report.n_test,
        })),
    )
}

pub fn eval_cmd(args: &WithCheckpoint) -> Result<()> {
    let run = Run::prepare(&args.common, Stage::Finetune)?;
    let Some(path) = &args.checkpoint else {
        bail!(Error::invalid("--checkpoint", "eval needs a fine-tuned classifier checkpoint"));
    };
    let ck = load_checkpoint(path, Some(&run.config.model))?;
    if ck.kind != CheckpointKind::Classifier {
        bail!(Error::invalid("--checkpoint", "eval needs a classifier checkpoint, not a pretraining one"));
    }
    let data = run.load_data()?;
    let pool = match ck.meta.get("pool") {
        Some(p) => p.parse()?,
        None => run.config.finetune.modalities,
    };
    let task = Task::new(&data.manifest, pool);
    if let Some(classes) = ck.meta.get("classes") {
        if *classes != task.classes.join(",") {
            bail!(Error::invalid(
                "--checkpoint",
                format!("classifier was trained on classes [{classes}], dataset has [{}]", task.classes.join(","))
            ));
        }
    }
    let clf = ck.restore_classifier::<f32>()?;
    let id = format!("task-{}", task.pool);
    let report = test_report(&clf, &data, &task, &id, run.seed)?;
    run.write("metrics.json", &(serde_json::to_string_pretty(&report)? + "\n"))?;
    run.write_result(
        "eval",
        fields(json!({
            "checkpoint": path.display().to_string(),
            "task": id,
            "test_auroc": report.auroc,
            "test_auprc": report.auprc,
            "n_test": report.n_test,
        })),
    )
}

pub fn sweep_cmd(args: &SweepArgs) -> Result<()> {
    let run = Run::prepare(&args.common, Stage::Finetune)?;
    let data = run.load_data()?;
    let cfg = run.config.finetune.clone();
    let task = Task::new(&data.manifest, cfg.modalities);
    let (encoder, init) = encoder_for(&run, args.checkpoint.as_deref())?;
    let seeds = if args.seeds.is_empty() { vec![run.seed] } else { args.seeds.clone() };
    let points = data_efficiency_sweep(&run.config.model, &encoder, &data, &task, &cfg, &args.fractions, &seeds)?;
    run.write("sweep.csv", &sweep_csv(&points))?;
    let curve: Vec<Value> = points
        .iter()
        .map(|p| json!({ "fraction": p.fraction, "mean": p.mean, "sd": p.sd, "per_seed": p.per_seed }))
        .collect();
    run.write_result(
        "sweep",
        fields(json!({ "init": init, "task": format!("task-{}", task.pool), "seeds": seeds, "points": curve })),
    )
}

pub fn ablate_cmd(args: &AblateArgs) -> Result<()> {
    let run = Run::prepare(&args.common, Stage::Both)?;
    let data = run.load_data()?;
    let seeds = if args.seeds.is_empty() { vec![run.seed] } else { args.seeds.clone() };
    let grid = run_ablation(&run.config, &data, &seeds)?;
    run.write("ablation.csv", &grid.to_csv())?;
    let table = grid.render();
    run.write("ablation.md", &table)?;
    print!("{table}");
    let cells: Map<String, Value> = grid
        .cells
        .iter()
        .map(|(key, runs)| {
            let per_seed: Vec<Value> = runs
                .iter()
                .map(|r| json!({ "seed": r.seed, "task_a_auroc": r.task_a.auroc, "task_b_auroc": r.task_b.auroc }))
                .collect();
            (key.label(), Value::Array(per_seed))
        })
        .collect();
    run.write_result("ablate", fields(json!({ "seeds": seeds, "cells": cells })))
}

pub fn inspect_cmd(args: &InspectArgs) -> Result<()> {
    let ck = load_checkpoint(&args.checkpoint, None)
        .with_context(|| format!("loading checkpoint {}", args.checkpoint.display()))?;
    println!("kind: {:?}", ck.kind);
    println!("fingerprint: {}", ck.fingerprint());
    println!("parameters: {}", ck.param_count());
    println!("step: {}", ck.step);
    println!("epoch: {}", ck.epoch);
    if ck.kind == CheckpointKind::Classifier {
        println!("classes: {}", ck.num_classes);
    }
    for (k, v) in &ck.meta {
        println!("meta.{k}: {v}");
    }
    Ok(())
}
