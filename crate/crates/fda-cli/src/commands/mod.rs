//! Implementations behind the `fda` subcommands.

pub mod attack;
pub mod datagen;
pub mod eval;
pub mod report;
pub mod train;

use std::path::Path;

use anyhow::Context;
use fda_core::models::{Architecture, LabeledImages, Model};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::DatasetKind;

pub(crate) fn parse_dataset_kind(name: &str) -> anyhow::Result<DatasetKind> {
    DatasetKind::parse(name).with_context(|| format!("unknown dataset '{name}' (mnist, cifar10)"))
}

pub(crate) fn arch_by_name(name: &str) -> anyhow::Result<Architecture> {
    match name {
        "mnist-cnn" => Ok(Architecture::mnist_cnn()),
        "cifar-cnn" => Ok(Architecture::cifar_cnn()),
        other => anyhow::bail!("unknown architecture '{other}' (mnist-cnn, cifar-cnn)"),
    }
}

pub(crate) fn load_model(path: &Path) -> anyhow::Result<Model<f32>> {
    let (model, _) = crate::checkpoint::load(path)
        .with_context(|| format!("loading checkpoint {}", path.display()))?;
    Ok(model)
}

/// Seed-pinned evaluation subset: a seeded shuffle of the test indices,
/// truncated to n_images.
pub(crate) fn evaluation_subset(test_len: usize, n_images: usize, seed: u64) -> Vec<usize> {
    let mut indices: Vec<usize> = (0..test_len).collect();
    indices.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    indices.truncate(n_images.min(test_len));
    indices
}

pub(crate) fn take_subset(data: &LabeledImages<f32>, indices: &[usize]) -> LabeledImages<f32> {
    LabeledImages::new(
        indices.iter().map(|&i| data.images[i].clone()).collect(),
        indices.iter().map(|&i| data.labels[i]).collect(),
    )
}

/// Format a float with full round-trip precision (deterministic output).
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

pub(crate) fn fmt_f32(v: f32) -> String {
    format!("{v}")
}
