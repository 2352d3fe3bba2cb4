//! `fda train`: train a reference classifier and write the checkpoint plus a
//! structured training history.

use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use fda_core::attacks::AttackMethod;
use fda_core::models::{build_model, evaluate_accuracy, train, LabeledImages, TrainConfig};
use serde::Serialize;

use crate::checkpoint::{self, TrainMeta};
use crate::config::{pick, pick_required, resolve_attack_config, BudgetEcho, FileConfig};

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Architecture name (mnist-cnn, cifar-cnn).
    #[arg(long)]
    pub arch: Option<String>,
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Train on a 50/50 mix of clean batches and PGD-ML adversaries.
    #[arg(long)]
    pub adversarial: bool,
    /// Budget of the training-time attack (0-255 units).
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub nb_iter: Option<usize>,
    #[arg(long)]
    pub eps_iter: Option<f64>,
    /// Use only the first N training images.
    #[arg(long)]
    pub train_limit: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct ResolvedTrainConfig {
    arch: String,
    dataset: String,
    data_dir: String,
    epochs: usize,
    batch_size: usize,
    lr: f64,
    momentum: f64,
    seed: u64,
    adversarial: Option<BudgetEcho>,
    train_limit: Option<usize>,
}

#[derive(Debug, Serialize)]
struct EpochEcho {
    epoch: usize,
    mean_loss: f64,
    train_accuracy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    adv_accuracy: Option<f64>,
}

#[derive(Debug, Serialize)]
struct HistoryFile {
    version: u32,
    config: ResolvedTrainConfig,
    epochs: Vec<EpochEcho>,
    test_top1: f64,
    test_topk: f64,
    test_k: usize,
}

pub fn run(args: TrainArgs) -> anyhow::Result<()> {
    let file = FileConfig::load(args.config.as_deref())?;
    let train_section = file.train();

    let arch_name = pick(args.arch, train_section.arch.clone(), "mnist-cnn".into());
    let dataset_name = pick_required(args.dataset, file.dataset.clone(), "--dataset")?;
    let data_dir = pick_required(args.data_dir, file.data_dir.clone(), "--data-dir")?;
    let out = pick_required(args.out, file.out.clone(), "--out")?;
    let seed = pick(args.seed, file.seed, 0);
    let epochs = pick(args.epochs, train_section.epochs, 3);
    let batch_size = pick(args.batch_size, train_section.batch_size, 32);
    let lr = pick(args.lr, train_section.lr, 0.05);
    let momentum = pick(args.momentum, train_section.momentum, 0.9);
    let adversarial = args.adversarial || train_section.adversarial.unwrap_or(false);
    let train_limit = args.train_limit.or(train_section.train_limit);

    let kind = super::parse_dataset_kind(&dataset_name)?;
    let arch = super::arch_by_name(&arch_name)?;
    anyhow::ensure!(
        arch.input_shape == kind.input_shape(),
        "architecture {arch_name} expects input {:?}, dataset {dataset_name} provides {:?}",
        arch.input_shape,
        kind.input_shape()
    );

    let pair = crate::dataset::load(kind, &data_dir)?;
    let mut train_set = pair.train;
    if let Some(limit) = train_limit {
        train_set = LabeledImages::new(
            train_set.images[..limit.min(train_set.len())].to_vec(),
            train_set.labels[..limit.min(train_set.labels.len())].to_vec(),
        );
    }

    let adversarial_config = if adversarial {
        Some(resolve_attack_config(
            Some(AttackMethod::PgdMl.name().to_string()),
            args.eps.or(Some(8.0)),
            args.nb_iter.or(Some(5)),
            args.eps_iter.or(Some(2.0)),
            None,
            seed,
            &file.attack(),
        )?)
    } else {
        None
    };

    let resolved = ResolvedTrainConfig {
        arch: arch_name,
        dataset: dataset_name,
        data_dir: data_dir.display().to_string(),
        epochs,
        batch_size,
        lr,
        momentum,
        seed,
        adversarial: adversarial_config.as_ref().map(|c| c.budget.into()),
        train_limit,
    };
    println!(
        "training {} on {} images (seed {seed}, {} epochs{})",
        resolved.arch,
        train_set.len(),
        epochs,
        if adversarial { ", adversarial" } else { "" }
    );

    let mut model = build_model::<f32>(arch, seed)?;
    let mut config = TrainConfig::new(epochs, batch_size, lr, seed);
    config.momentum = momentum;
    config.adversarial = adversarial_config;
    let history = train(&mut model, &train_set, &config)?;
    for e in &history {
        match e.adv_accuracy {
            Some(adv) => println!(
                "epoch {}: loss {:.4}, accuracy {:.4}, adversarial accuracy {:.4}",
                e.epoch, e.mean_loss, e.train_accuracy, adv
            ),
            None => println!(
                "epoch {}: loss {:.4}, accuracy {:.4}",
                e.epoch, e.mean_loss, e.train_accuracy
            ),
        }
    }

    let k = 5.min(model.num_classes());
    let report = evaluate_accuracy(&model, &pair.test, k)?;
    println!(
        "test top-1 {:.4}, top-{} {:.4} over {} images",
        report.top1,
        report.k,
        report.topk,
        pair.test.len()
    );

    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let meta = TrainMeta {
        seed,
        epochs,
        adversarial,
        final_train_accuracy: history.last().map(|e| e.train_accuracy),
        test_top1: Some(report.top1),
    };
    checkpoint::save(&model, &meta, &out.join("checkpoint.fda"))?;

    let history_file = HistoryFile {
        version: 1,
        config: resolved,
        epochs: history
            .iter()
            .map(|e| EpochEcho {
                epoch: e.epoch,
                mean_loss: e.mean_loss,
                train_accuracy: e.train_accuracy,
                adv_accuracy: e.adv_accuracy,
            })
            .collect(),
        test_top1: report.top1,
        test_topk: report.topk,
        test_k: report.k,
    };
    std::fs::write(
        out.join("history.json"),
        serde_json::to_string_pretty(&history_file)?,
    )?;
    println!("wrote {} and {}", out.join("checkpoint.fda").display(), out.join("history.json").display());
    Ok(())
}
