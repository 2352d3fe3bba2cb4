//! Dense tensors and the reverse-mode autodiff tape.

mod grad_check;
pub mod kernels;
mod tape;

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::scalar::Scalar;

pub use grad_check::grad_check;
pub use tape::{Tape, VarId};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("shape {shape:?} holds {expected} elements but {got} were provided")]
    ShapeDataMismatch {
        shape: Vec<usize>,
        expected: usize,
        got: usize,
    },
    #[error("{op} needs matching shapes, got {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("matmul dimensions disagree: {lhs:?} x {rhs:?}")]
    MatmulDims { lhs: Vec<usize>, rhs: Vec<usize> },
    #[error("log input must be strictly positive, found {0}")]
    NonPositiveLog(f64),
    #[error(
        "conv2d output extent < 1 for input {h}x{w}, kernel {kh}x{kw}, \
         stride {stride}, padding {padding}"
    )]
    EmptyConvOutput {
        h: usize,
        w: usize,
        kh: usize,
        kw: usize,
        stride: usize,
        padding: usize,
    },
    #[error("conv2d kernel tensor must be kh x kw x cin x cout, got {0:?}")]
    BadKernelShape(Vec<usize>),
    #[error("conv2d input channels {input} do not match kernel channels {kernel}")]
    ChannelMismatch { input: usize, kernel: usize },
    #[error("stride must be >= 1")]
    ZeroStride,
    #[error("pool window {window} exceeds input extent {h}x{w}")]
    WindowTooLarge { window: usize, h: usize, w: usize },
    #[error("expected a {expected}-d tensor, got shape {got:?}")]
    WrongRank { expected: usize, got: Vec<usize> },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("mask selects no coordinates")]
    EmptyMask,
    #[error("mask length {mask} does not match tensor length {tensor}")]
    MaskLenMismatch { mask: usize, tensor: usize },
    #[error("backward root must be scalar, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),
    #[error("tape is frozen; no further ops may be recorded")]
    TapeFrozen,
}

/// Dense row-major n-dimensional array. The innermost axis varies fastest;
/// images and activation maps use H x W x C with channels contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self, TensorError> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(TensorError::ShapeDataMismatch {
                expected,
                got: data.len(),
                shape,
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape,
            data: vec![T::zero(); n],
        }
    }

    pub fn scalar(value: T) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn from_fn(shape: Vec<usize>, mut f: impl FnMut(usize) -> T) -> Self {
        let n: usize = shape.iter().product();
        Tensor {
            shape,
            data: (0..n).map(&mut f).collect(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Scalar payload of a 1-element tensor.
    pub fn item(&self) -> T {
        debug_assert!(self.is_scalar(), "item() on shape {:?}", self.shape);
        self.data[0]
    }

    pub fn reshaped(&self, shape: Vec<usize>) -> Result<Self, TensorError> {
        Tensor::new(shape, self.data.clone())
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Max absolute difference to another tensor of the same shape.
    pub fn linf_distance(&self, other: &Tensor<T>) -> T {
        debug_assert_eq!(self.shape, other.shape);
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |m, (a, b)| m.max((*a - *b).abs()))
    }
}
