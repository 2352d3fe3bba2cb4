//! Pure value kernels shared by the plain forward pass and the tape ops, so
//! that traced and untraced execution produce bit-identical numbers.

use alloc::vec;
use alloc::vec::Vec;

use crate::scalar::Scalar;

use super::TensorError;

/// Static geometry of one conv2d application.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvDims {
    pub h: usize,
    pub w: usize,
    pub cin: usize,
    pub kh: usize,
    pub kw: usize,
    pub cout: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvDims {
    pub fn new(
        h: usize,
        w: usize,
        cin: usize,
        kh: usize,
        kw: usize,
        cout: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Self, TensorError> {
        if stride == 0 {
            return Err(TensorError::ZeroStride);
        }
        let ph = h + 2 * padding;
        let pw = w + 2 * padding;
        if kh > ph || kw > pw || ph.saturating_sub(kh) / stride + 1 < 1 {
            return Err(TensorError::EmptyConvOutput {
                h,
                w,
                kh,
                kw,
                stride,
                padding,
            });
        }
        Ok(ConvDims {
            h,
            w,
            cin,
            kh,
            kw,
            cout,
            stride,
            padding,
            out_h: (ph - kh) / stride + 1,
            out_w: (pw - kw) / stride + 1,
        })
    }

    /// Rows of the patch matrix: one per output position.
    pub fn patch_rows(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Columns of the patch matrix: one per (kh, kw, cin) entry.
    pub fn patch_cols(&self) -> usize {
        self.kh * self.kw * self.cin
    }
}

/// out[m x n] = a[m x k] * b[k x n]. `out` must be zeroed by the caller.
pub fn matmul_accumulate<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize, out: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        for l in 0..k {
            let a_il = a[i * k + l];
            if a_il == T::zero() {
                continue;
            }
            let b_row = &b[l * n..(l + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o = *o + a_il * bv;
            }
        }
    }
}

pub fn matmul<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    matmul_accumulate(a, b, m, k, n, &mut out);
    out
}

/// out[k x n] += a^T * g for a[m x k], g[m x n]. Backward for the right
/// matmul operand and for conv kernels.
pub fn matmul_at_b_accumulate<T: Scalar>(
    a: &[T],
    g: &[T],
    m: usize,
    k: usize,
    n: usize,
    out: &mut [T],
) {
    debug_assert_eq!(out.len(), k * n);
    for i in 0..m {
        let g_row = &g[i * n..(i + 1) * n];
        for l in 0..k {
            let a_il = a[i * k + l];
            if a_il == T::zero() {
                continue;
            }
            let out_row = &mut out[l * n..(l + 1) * n];
            for (o, &gv) in out_row.iter_mut().zip(g_row) {
                *o = *o + a_il * gv;
            }
        }
    }
}

/// out[m x k] += g * b^T for g[m x n], b[k x n]. Backward for the left
/// matmul operand.
pub fn matmul_a_bt_accumulate<T: Scalar>(
    g: &[T],
    b: &[T],
    m: usize,
    k: usize,
    n: usize,
    out: &mut [T],
) {
    debug_assert_eq!(out.len(), m * k);
    for i in 0..m {
        let g_row = &g[i * n..(i + 1) * n];
        let out_row = &mut out[i * k..(i + 1) * k];
        for l in 0..k {
            let b_row = &b[l * n..(l + 1) * n];
            let mut acc = T::zero();
            for (&gv, &bv) in g_row.iter().zip(b_row) {
                acc = acc + gv * bv;
            }
            out_row[l] = out_row[l] + acc;
        }
    }
}

/// Unfold an H x W x Cin input into the patch matrix [patch_rows x patch_cols],
/// zero-padded, with column order (kh, kw, cin) to match the kernel layout.
pub fn im2col<T: Scalar>(input: &[T], d: &ConvDims) -> Vec<T> {
    let mut col = vec![T::zero(); d.patch_rows() * d.patch_cols()];
    let pcols = d.patch_cols();
    for oh in 0..d.out_h {
        for ow in 0..d.out_w {
            let row = &mut col[(oh * d.out_w + ow) * pcols..(oh * d.out_w + ow + 1) * pcols];
            for r in 0..d.kh {
                let ih = (oh * d.stride + r) as isize - d.padding as isize;
                if ih < 0 || ih >= d.h as isize {
                    continue;
                }
                for s in 0..d.kw {
                    let iw = (ow * d.stride + s) as isize - d.padding as isize;
                    if iw < 0 || iw >= d.w as isize {
                        continue;
                    }
                    let src = (ih as usize * d.w + iw as usize) * d.cin;
                    let dst = (r * d.kw + s) * d.cin;
                    row[dst..dst + d.cin].copy_from_slice(&input[src..src + d.cin]);
                }
            }
        }
    }
    col
}

/// Scatter-add the patch-matrix gradient back onto the input layout.
pub fn col2im_accumulate<T: Scalar>(d_col: &[T], d: &ConvDims, d_input: &mut [T]) {
    debug_assert_eq!(d_input.len(), d.h * d.w * d.cin);
    let pcols = d.patch_cols();
    for oh in 0..d.out_h {
        for ow in 0..d.out_w {
            let row = &d_col[(oh * d.out_w + ow) * pcols..(oh * d.out_w + ow + 1) * pcols];
            for r in 0..d.kh {
                let ih = (oh * d.stride + r) as isize - d.padding as isize;
                if ih < 0 || ih >= d.h as isize {
                    continue;
                }
                for s in 0..d.kw {
                    let iw = (ow * d.stride + s) as isize - d.padding as isize;
                    if iw < 0 || iw >= d.w as isize {
                        continue;
                    }
                    let dst = (ih as usize * d.w + iw as usize) * d.cin;
                    let src = (r * d.kw + s) * d.cin;
                    for c in 0..d.cin {
                        d_input[dst + c] = d_input[dst + c] + row[src + c];
                    }
                }
            }
        }
    }
}

/// Forward conv: returns (patch matrix, output in H' x W' x Cout layout).
/// The patch matrix is kept for the backward pass.
pub fn conv2d_forward<T: Scalar>(input: &[T], kernels: &[T], d: &ConvDims) -> (Vec<T>, Vec<T>) {
    let col = im2col(input, d);
    let out = matmul(&col, kernels, d.patch_rows(), d.patch_cols(), d.cout);
    (col, out)
}

/// Max-pool forward: returns (output, flat argmax index per output coordinate).
/// Ties go to the first coordinate in row-major window order.
pub fn maxpool_forward<T: Scalar>(
    input: &[T],
    h: usize,
    w: usize,
    c: usize,
    window: usize,
    stride: usize,
) -> (Vec<T>, Vec<u32>, usize, usize) {
    let out_h = (h - window) / stride + 1;
    let out_w = (w - window) / stride + 1;
    let mut out = vec![T::zero(); out_h * out_w * c];
    let mut argmax = vec![0u32; out_h * out_w * c];
    for oh in 0..out_h {
        for ow in 0..out_w {
            for ch in 0..c {
                let mut best = T::neg_infinity();
                let mut best_idx = 0usize;
                for r in 0..window {
                    for s in 0..window {
                        let idx = ((oh * stride + r) * w + (ow * stride + s)) * c + ch;
                        if input[idx] > best {
                            best = input[idx];
                            best_idx = idx;
                        }
                    }
                }
                let o = (oh * out_w + ow) * c + ch;
                out[o] = best;
                argmax[o] = best_idx as u32;
            }
        }
    }
    (out, argmax, out_h, out_w)
}

/// Numerically stable softmax (max-shifted).
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    let exps: Vec<T> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum = exps.iter().fold(T::zero(), |a, &v| a + v);
    exps.into_iter().map(|v| v / sum).collect()
}

/// Stable -log softmax(logits)[label]; returns the loss and the softmax
/// vector (saved for the backward pass).
pub fn softmax_cross_entropy_forward<T: Scalar>(logits: &[T], label: usize) -> (T, Vec<T>) {
    let max = logits.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    let mut sum = T::zero();
    for &v in logits {
        sum = sum + (v - max).exp();
    }
    let log_sum_exp = max + sum.ln();
    let loss = log_sum_exp - logits[label];
    let probs = logits.iter().map(|&v| (v - max).exp() / sum).collect();
    (loss, probs)
}

/// sqrt(sum of squares over masked coordinates + delta).
pub fn masked_l2_norm_forward<T: Scalar>(data: &[T], mask: &[bool], delta: T) -> T {
    let mut acc = T::zero();
    for (&v, &m) in data.iter().zip(mask) {
        if m {
            acc = acc + v * v;
        }
    }
    (acc + delta).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_identity() {
        let eye = [1.0f64, 0.0, 0.0, 1.0];
        let b = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(matmul(&eye, &b, 2, 2, 2), b.to_vec());
    }

    #[test]
    fn matmul_selector_row() {
        let a = [1.0f64, 0.0];
        let b = [2.0, 5.0];
        assert_eq!(matmul(&a, &b, 1, 2, 1), vec![2.0]);
    }

    #[test]
    fn conv_dims_rejects_empty_output() {
        assert!(matches!(
            ConvDims::new(2, 2, 1, 3, 3, 1, 1, 0),
            Err(TensorError::EmptyConvOutput { .. })
        ));
    }

    #[test]
    fn conv_output_shape_formula() {
        let d = ConvDims::new(28, 28, 1, 5, 5, 32, 1, 0).unwrap();
        assert_eq!((d.out_h, d.out_w), (24, 24));
        let d = ConvDims::new(32, 32, 3, 3, 3, 16, 1, 1).unwrap();
        assert_eq!((d.out_h, d.out_w), (32, 32));
        let d = ConvDims::new(7, 9, 2, 3, 3, 4, 2, 0).unwrap();
        assert_eq!((d.out_h, d.out_w), (3, 4));
    }

    #[test]
    fn conv_one_by_one_kernel_scales() {
        let d = ConvDims::new(3, 3, 1, 1, 1, 1, 1, 0).unwrap();
        let input = vec![1.0f64; 9];
        let (_, out) = conv2d_forward(&input, &[2.0], &d);
        assert_eq!(out, vec![2.0; 9]);
    }

    #[test]
    fn conv_all_ones_kernel_sums() {
        let d = ConvDims::new(3, 3, 1, 3, 3, 1, 1, 0).unwrap();
        let input: Vec<f64> = (1..=9).map(|v| v as f64).collect();
        let (_, out) = conv2d_forward(&input, &vec![1.0; 9], &d);
        assert_eq!(out, vec![45.0]);
    }

    #[test]
    fn maxpool_two_by_two() {
        let (out, argmax, oh, ow) = maxpool_forward(&[1.0f32, 2.0, 3.0, 4.0], 2, 2, 1, 2, 2);
        assert_eq!((oh, ow), (1, 1));
        assert_eq!(out, vec![4.0]);
        assert_eq!(argmax, vec![3]);
    }

    #[test]
    fn maxpool_tie_routes_to_first() {
        let (out, argmax, _, _) = maxpool_forward(&[5.0f32; 4], 2, 2, 1, 2, 2);
        assert_eq!(out, vec![5.0]);
        assert_eq!(argmax, vec![0]);
    }

    #[test]
    fn softmax_ce_uniform_logits() {
        let (loss, _) = softmax_cross_entropy_forward(&[0.0f64; 10], 3);
        assert!((loss - 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn softmax_ce_extreme_logits_no_overflow() {
        let (loss, probs) = softmax_cross_entropy_forward(&[1000.0f64, -1000.0], 0);
        assert!(loss.abs() < 1e-12);
        assert!(probs.iter().all(|p| p.is_finite()));
    }

    #[test]
    fn masked_norm_three_four_five() {
        let v = masked_l2_norm_forward(&[3.0f64, 4.0], &[true, true], 0.0);
        assert_eq!(v, 5.0);
        let v = masked_l2_norm_forward(&[3.0f64, 4.0], &[true, false], 0.0);
        assert_eq!(v, 3.0);
    }
}
