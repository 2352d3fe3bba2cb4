//! Adversarial attacks that disrupt intermediate CNN features, plus the
//! baselines and metrics needed to compare them.
//!
//! The crate is self-contained and `no_std` (with `alloc`): a tape-based
//! reverse-mode autodiff engine ([`tensor`]), small convolutional classifiers
//! with per-nonlinearity activation capture ([`models`]), four L∞-budgeted
//! iterative attacks ([`attacks`]), and rank-based robustness metrics
//! ([`metrics`]). File formats, dataset loaders, and the command-line harness
//! live in the companion `fda-cli` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod attacks;
pub mod metrics;
pub mod models;
pub mod scalar;
pub mod tensor;

pub use scalar::Scalar;
pub use tensor::{Tape, Tensor, TensorError, VarId};
