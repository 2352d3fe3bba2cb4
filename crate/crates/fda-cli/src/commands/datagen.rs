//! `fda datagen`: write a deterministic synthetic digit dataset in IDX or
//! CIFAR-10 binary form.

use std::path::PathBuf;

use anyhow::Context;
use clap::Args;

use crate::dataset::DatasetKind;
use crate::{cifar, idx, synth};

#[derive(Debug, Args)]
pub struct DatagenArgs {
    /// Dataset layout to emit.
    #[arg(long, default_value = "mnist")]
    pub dataset: String,
    /// Directory to write the files into (created if missing).
    #[arg(long)]
    pub data_dir: PathBuf,
    #[arg(long, default_value_t = 8000)]
    pub train_count: usize,
    #[arg(long, default_value_t = 2000)]
    pub test_count: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

pub fn run(args: DatagenArgs) -> anyhow::Result<()> {
    let kind = super::parse_dataset_kind(&args.dataset)?;
    std::fs::create_dir_all(&args.data_dir)
        .with_context(|| format!("creating {}", args.data_dir.display()))?;
    let test_seed = args.seed.wrapping_add(0x9E37_79B9);
    match kind {
        DatasetKind::Mnist => {
            let (pixels, labels) = synth::generate_gray(args.train_count, 28, args.seed);
            idx::save_images(&args.data_dir.join("train-images-idx3-ubyte"), 28, 28, &pixels)?;
            idx::save_labels(&args.data_dir.join("train-labels-idx1-ubyte"), &labels)?;
            let (pixels, labels) = synth::generate_gray(args.test_count, 28, test_seed);
            idx::save_images(&args.data_dir.join("t10k-images-idx3-ubyte"), 28, 28, &pixels)?;
            idx::save_labels(&args.data_dir.join("t10k-labels-idx1-ubyte"), &labels)?;
        }
        DatasetKind::Cifar10 => {
            let (pixels, labels) = synth::generate_rgb(args.train_count, args.seed);
            cifar::save_batch(&args.data_dir.join("data_batch_1.bin"), &labels, &pixels)?;
            let (pixels, labels) = synth::generate_rgb(args.test_count, test_seed);
            cifar::save_batch(&args.data_dir.join("test_batch.bin"), &labels, &pixels)?;
        }
    }
    println!(
        "wrote synthetic {} set: {} train / {} test images to {} (seed {})",
        kind.name(),
        args.train_count,
        args.test_count,
        args.data_dir.display(),
        args.seed
    );
    Ok(())
}
