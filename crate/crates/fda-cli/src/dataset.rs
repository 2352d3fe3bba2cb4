//! Loading labeled image sets from disk into model-ready tensors.

use std::path::Path;

use fda_core::models::LabeledImages;
use fda_core::tensor::Tensor;
use thiserror::Error;

use crate::cifar::{self, CifarError};
use crate::idx::{self, IdxError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Mnist,
    Cifar10,
}

impl DatasetKind {
    pub fn name(&self) -> &'static str {
        match self {
            DatasetKind::Mnist => "mnist",
            DatasetKind::Cifar10 => "cifar10",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "mnist" => Some(DatasetKind::Mnist),
            "cifar10" => Some(DatasetKind::Cifar10),
            _ => None,
        }
    }

    pub fn input_shape(&self) -> (usize, usize, usize) {
        match self {
            DatasetKind::Mnist => (28, 28, 1),
            DatasetKind::Cifar10 => (32, 32, 3),
        }
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error(transparent)]
    Idx(#[from] IdxError),
    #[error(transparent)]
    Cifar(#[from] CifarError),
    #[error("no cifar batch files (data_batch_*.bin) in {0}")]
    NoCifarBatches(String),
    #[error("image geometry {got:?} does not match the {expected:?} expected for {kind}")]
    WrongGeometry {
        kind: &'static str,
        expected: (usize, usize, usize),
        got: (usize, usize, usize),
    },
}

/// Train and test splits, pixels already scaled to [0, 1].
pub struct DataPair {
    pub train: LabeledImages<f32>,
    pub test: LabeledImages<f32>,
    pub input_shape: (usize, usize, usize),
}

fn to_labeled(
    pixels: &[u8],
    labels: &[u8],
    shape: (usize, usize, usize),
) -> LabeledImages<f32> {
    let (h, w, c) = shape;
    let per = h * w * c;
    let images = pixels
        .chunks(per)
        .map(|img| {
            Tensor::new(
                vec![h, w, c],
                img.iter().map(|&b| b as f32 / 255.0).collect(),
            )
            .unwrap()
        })
        .collect();
    LabeledImages::new(images, labels.iter().map(|&l| l as usize).collect())
}

/// Classic IDX file-name layout: train-* and t10k-* image/label pairs.
pub fn load_mnist(dir: &Path) -> Result<DataPair, DatasetError> {
    let split = |prefix: &str| -> Result<LabeledImages<f32>, DatasetError> {
        let (images, labels) = idx::load_split(
            &dir.join(format!("{prefix}-images-idx3-ubyte")),
            &dir.join(format!("{prefix}-labels-idx1-ubyte")),
        )?;
        let got = (images.rows, images.cols, 1);
        let expected = DatasetKind::Mnist.input_shape();
        if got != expected {
            return Err(DatasetError::WrongGeometry {
                kind: "mnist",
                expected,
                got,
            });
        }
        Ok(to_labeled(&images.pixels, &labels, expected))
    };
    Ok(DataPair {
        train: split("train")?,
        test: split("t10k")?,
        input_shape: DatasetKind::Mnist.input_shape(),
    })
}

/// data_batch_*.bin (any number, lexically ordered) plus test_batch.bin.
pub fn load_cifar10(dir: &Path) -> Result<DataPair, DatasetError> {
    let mut batch_paths: Vec<_> = (1..=5)
        .map(|i| dir.join(format!("data_batch_{i}.bin")))
        .filter(|p| p.exists())
        .collect();
    batch_paths.sort();
    if batch_paths.is_empty() {
        return Err(DatasetError::NoCifarBatches(dir.display().to_string()));
    }
    let mut train = cifar::CifarBatch::default();
    for path in &batch_paths {
        let batch = cifar::load_batch(path)?;
        train.labels.extend_from_slice(&batch.labels);
        train.pixels.extend_from_slice(&batch.pixels);
    }
    let test = cifar::load_batch(&dir.join("test_batch.bin"))?;
    let shape = DatasetKind::Cifar10.input_shape();
    Ok(DataPair {
        train: to_labeled(&train.pixels, &train.labels, shape),
        test: to_labeled(&test.pixels, &test.labels, shape),
        input_shape: shape,
    })
}

pub fn load(kind: DatasetKind, dir: &Path) -> Result<DataPair, DatasetError> {
    match kind {
        DatasetKind::Mnist => load_mnist(dir),
        DatasetKind::Cifar10 => load_cifar10(dir),
    }
}
