//! Central finite-difference verification of tape gradients.

use alloc::vec::Vec;

use crate::scalar::Scalar;

use super::tape::{Tape, VarId};
use super::{Tensor, TensorError};

/// Compares the tape gradient of `f` at `point` against central finite
/// differences with step `h`, returning the max over coordinates of
/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
///
/// `f` must build a scalar from the single differentiable leaf it is given;
/// callers keep `point` away from relu kinks / pool ties for the comparison
/// to be meaningful.
pub fn grad_check<T, F>(f: F, point: &Tensor<T>, h: T) -> Result<T, TensorError>
where
    T: Scalar,
    F: Fn(&mut Tape<T>, VarId) -> Result<VarId, TensorError>,
{
    let mut tape = Tape::new();
    let x = tape.leaf(point);
    let root = f(&mut tape, x)?;
    tape.backward(root)?;
    let analytic = tape
        .grad(x)
        .map(Tensor::into_data)
        .unwrap_or_else(|| alloc::vec![T::zero(); point.len()]);

    let eval = |p: &Tensor<T>| -> Result<T, TensorError> {
        let mut tape = Tape::new();
        let x = tape.constant(p);
        let root = f(&mut tape, x)?;
        Ok(tape.value(root).item())
    };

    let floor = T::from_f64(1e-8);
    let two = T::from_f64(2.0);
    let mut worst = T::zero();
    let mut probe: Vec<T> = point.data().to_vec();
    for i in 0..probe.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let plus = eval(&Tensor::new(point.shape().to_vec(), probe.clone())?)?;
        probe[i] = orig - h;
        let minus = eval(&Tensor::new(point.shape().to_vec(), probe.clone())?)?;
        probe[i] = orig;
        let numeric = (plus - minus) / (two * h);
        let denom = analytic[i].abs().max(numeric.abs()).max(floor);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    Ok(worst)
}
