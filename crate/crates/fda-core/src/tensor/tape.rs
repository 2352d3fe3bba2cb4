//! Append-only computation tape for reverse-mode differentiation.
//!
//! Ops record their output tensor plus whatever the backward pass needs
//! (patch matrices, argmax routes, softmax vectors). `backward` replays the
//! tape once in reverse, accumulating vector-Jacobian products into the
//! differentiable leaves; branches that cannot reach a differentiable leaf
//! are skipped entirely, which is what makes attack gradients (input-only)
//! cheap on a tape that also serves training (parameter gradients).

use alloc::vec;
use alloc::vec::Vec;

use crate::scalar::Scalar;

use super::kernels::{self, ConvDims};
use super::{Tensor, TensorError};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VarId(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum UnaryKind {
    Neg,
    Relu,
    Sign,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BinaryKind {
    Add,
    Sub,
    Mul,
}

#[derive(Debug)]
enum Op<T: Scalar> {
    Leaf {
        differentiable: bool,
    },
    Unary {
        kind: UnaryKind,
        a: VarId,
    },
    Clamp {
        a: VarId,
        lo: T,
        hi: T,
    },
    Binary {
        kind: BinaryKind,
        a: VarId,
        b: VarId,
    },
    AddScalar {
        a: VarId,
    },
    Scale {
        a: VarId,
        c: T,
    },
    Sum {
        a: VarId,
    },
    Reshape {
        a: VarId,
    },
    BiasAdd {
        a: VarId,
        bias: VarId,
    },
    Matmul {
        a: VarId,
        b: VarId,
        m: usize,
        k: usize,
        n: usize,
    },
    Conv2d {
        input: VarId,
        kernels: VarId,
        dims: ConvDims,
        patches: Vec<T>,
    },
    MaxPool2d {
        input: VarId,
        argmax: Vec<u32>,
    },
    SoftmaxCrossEntropy {
        logits: VarId,
        label: usize,
        softmax: Vec<T>,
    },
    MaskedL2Norm {
        input: VarId,
        mask: Vec<bool>,
    },
}

struct Node<T: Scalar> {
    op: Op<T>,
    value: Tensor<T>,
    needs_grad: bool,
}

/// Recording tape. One tape per forward/backward episode; tapes are
/// single-threaded and independent of each other.
pub struct Tape<T: Scalar> {
    nodes: Vec<Node<T>>,
    /// Accumulated gradients for differentiable leaves; `backward` adds into
    /// these so repeated calls accumulate until `reset_grads`.
    leaf_grads: Vec<Option<Vec<T>>>,
    frozen: bool,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            leaf_grads: Vec::new(),
            frozen: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn value(&self, id: VarId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    /// Gradient accumulated in a differentiable leaf, as a tensor of the
    /// leaf's shape. `None` before any `backward` reached it.
    pub fn grad(&self, id: VarId) -> Option<Tensor<T>> {
        self.leaf_grads[id.0]
            .as_ref()
            .map(|g| Tensor::new(self.nodes[id.0].value.shape().to_vec(), g.clone()).unwrap())
    }

    /// Clears all accumulated leaf gradients.
    pub fn reset_grads(&mut self) {
        for g in self.leaf_grads.iter_mut() {
            *g = None;
        }
    }

    fn push(&mut self, op: Op<T>, value: Tensor<T>, needs_grad: bool) -> VarId {
        debug_assert!(
            matches!(op, Op::Leaf { .. }) || value.all_finite(),
            "non-finite value produced by a forward op"
        );
        let id = VarId(self.nodes.len());
        self.nodes.push(Node {
            op,
            value,
            needs_grad,
        });
        self.leaf_grads.push(None);
        id
    }

    fn check_recording(&self) -> Result<(), TensorError> {
        if self.frozen {
            Err(TensorError::TapeFrozen)
        } else {
            Ok(())
        }
    }

    fn needs(&self, id: VarId) -> bool {
        self.nodes[id.0].needs_grad
    }

    /// Differentiable leaf (gradient target).
    pub fn leaf(&mut self, value: &Tensor<T>) -> VarId {
        self.push(
            Op::Leaf {
                differentiable: true,
            },
            value.clone(),
            true,
        )
    }

    /// Non-differentiable input (frozen weights, masks' host tensors, ...).
    pub fn constant(&mut self, value: &Tensor<T>) -> VarId {
        self.push(
            Op::Leaf {
                differentiable: false,
            },
            value.clone(),
            false,
        )
    }

    fn unary(&mut self, kind: UnaryKind, a: VarId, data: Vec<T>) -> VarId {
        let shape = self.value(a).shape().to_vec();
        let needs = self.needs(a);
        self.push(
            Op::Unary { kind, a },
            Tensor::new(shape, data).unwrap(),
            needs,
        )
    }

    pub fn neg(&mut self, a: VarId) -> Result<VarId, TensorError> {
        self.check_recording()?;
        let data = self.value(a).data().iter().map(|&v| -v).collect();
        Ok(self.unary(UnaryKind::Neg, a, data))
    }

    pub fn relu(&mut self, a: VarId) -> Result<VarId, TensorError> {
        self.check_recording()?;
        let data = self
            .value(a)
            .data()
            .iter()
            .map(|&v| v.max(T::zero()))
            .collect();
        Ok(self.unary(UnaryKind::Relu, a, data))
    }

    /// Elementwise sign in {-1, 0, 1}; gradient is zero everywhere.
    pub fn sign(&mut self, a: VarId) -> Result<VarId, TensorError> {
        self.check_recording()?;
        let data = self
            .value(a)
            .data()
            .iter()
            .map(|&v| {
                if v > T::zero() {
                    T::one()
                } else if v < T::zero() {
                    -T::one()
                } else {
                    T::zero()
                }
            })
            .collect();
        Ok(self.unary(UnaryKind::Sign, a, data))
    }

    /// Natural log; inputs must be strictly positive (stabilize via
    /// `add_scalar` first when they may touch zero).
    pub fn log(&mut self, a: VarId) -> Result<VarId, TensorError> {
        self.check_recording()?;
        if let Some(&bad) = self.value(a).data().iter().find(|v| **v <= T::zero()) {
            return Err(TensorError::NonPositiveLog(bad.as_f64()));
        }
        let data = self.value(a).data().iter().map(|&v| v.ln()).collect();
        Ok(self.unary(UnaryKind::Log, a, data))
    }

    /// Coordinate-wise clamp to [lo, hi]; gradient passes inside the closed
    /// interval and is zero outside.
    pub fn clamp(&mut self, a: VarId, lo: T, hi: T) -> Result<VarId, TensorError> {
        self.check_recording()?;
        let shape = self.value(a).shape().to_vec();
        let data = self
            .value(a)
            .data()
            .iter()
            .map(|&v| v.max(lo).min(hi))
            .collect();
        let needs = self.needs(a);
        Ok(self.push(
            Op::Clamp { a, lo, hi },
            Tensor::new(shape, data).unwrap(),
            needs,
        ))
    }

    fn binary(&mut self, kind: BinaryKind, a: VarId, b: VarId) -> Result<VarId, TensorError> {
        self.check_recording()?;
        let (va, vb) = (self.value(a), self.value(b));
        // Equal shapes, or one true scalar operand; no other broadcasting.
        let shape = if va.shape() == vb.shape() {
            va.shape().to_vec()
        } else if va.is_scalar() {
            vb.shape().to_vec()
        } else if vb.is_scalar() {
            va.shape().to_vec()
        } else {
            return Err(TensorError::ShapeMismatch {
                op: match kind {
                    BinaryKind::Add => "add",
                    BinaryKind::Sub => "sub",
                    BinaryKind::Mul => "mul",
                },
                lhs: va.shape().to_vec(),
                rhs: vb.shape().to_vec(),
            });
        };
        let n = shape.iter().product();
        let f = |x: T, y: T| match kind {
            BinaryKind::Add => x + y,
            BinaryKind::Sub => x - y,
            BinaryKind::Mul => x * y,
        };
        let (da, db) = (va.data(), vb.data());
        let data: Vec<T> = (0..n)
            .map(|i| f(da[i % da.len()], db[i % db.len()]))
            .collect();
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(
            Op::Binary { kind, a, b },
            Tensor::new(shape, data).unwrap(),
            needs,
        ))
    }

    pub fn add(&mut self, a: VarId, b: VarId) -> Result<VarId, TensorError> {
        self.binary(BinaryKind::Add, a, b)
    }

    pub fn sub(&mut self, a: VarId, b: VarId) -> Result<VarId, TensorError> {
        self.binary(BinaryKind::Sub, a, b)
    }

    pub fn mul(&mut self, a: VarId, b: VarId) -> Result<VarId, TensorError> {
        self.binary(BinaryKind::Mul, a, b)
    }

    pub fn add_scalar(&mut self, a: VarId, c: T) -> Result<VarId, TensorError> {
        self.check_recording()?;
        let shape = self.value(a).shape().to_vec();
        let data = self.value(a).data().iter().map(|&v| v + c).collect();
        let needs = self.needs(a);
        Ok(self.push(Op::AddScalar { a }, Tensor::new(shape, data).unwrap(), needs))
    }

    pub fn scale(&mut self, a: VarId, c: T) -> Result<VarId, TensorError> {
        self.check_recording()?;
        let shape = self.value(a).shape().to_vec();
        let data = self.value(a).data().iter().map(|&v| v * c).collect();
        let needs = self.needs(a);
        Ok(self.push(Op::Scale { a, c }, Tensor::new(shape, data).unwrap(), needs))
    }

    /// Sum of all coordinates, as a scalar.
    pub fn sum(&mut self, a: VarId) -> Result<VarId, TensorError> {
        self.check_recording()?;
        let total = self
            .value(a)
            .data()
            .iter()
            .fold(T::zero(), |acc, &v| acc + v);
        let needs = self.needs(a);
        Ok(self.push(Op::Sum { a }, Tensor::scalar(total), needs))
    }

    pub fn reshape(&mut self, a: VarId, shape: Vec<usize>) -> Result<VarId, TensorError> {
        self.check_recording()?;
        let value = self.value(a).reshaped(shape)?;
        let needs = self.needs(a);
        Ok(self.push(Op::Reshape { a }, value, needs))
    }

    /// a[... x C] + bias[C], broadcasting the bias over leading positions.
    pub fn bias_add(&mut self, a: VarId, bias: VarId) -> Result<VarId, TensorError> {
        self.check_recording()?;
        let (va, vb) = (self.value(a), self.value(bias));
        let c = *va.shape().last().unwrap_or(&0);
        if vb.shape() != [c] {
            return Err(TensorError::ShapeMismatch {
                op: "bias_add",
                lhs: va.shape().to_vec(),
                rhs: vb.shape().to_vec(),
            });
        }
        let bias_data = vb.data();
        let data: Vec<T> = va
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| v + bias_data[i % c])
            .collect();
        let shape = va.shape().to_vec();
        let needs = self.needs(a) || self.needs(bias);
        Ok(self.push(
            Op::BiasAdd { a, bias },
            Tensor::new(shape, data).unwrap(),
            needs,
        ))
    }

    /// a[m x k] * b[k x n]; both operands must be 2-d.
    pub fn matmul(&mut self, a: VarId, b: VarId) -> Result<VarId, TensorError> {
        self.check_recording()?;
        let (va, vb) = (self.value(a), self.value(b));
        let (&[m, k], &[k2, n]) = (va.shape(), vb.shape()) else {
            return Err(TensorError::MatmulDims {
                lhs: va.shape().to_vec(),
                rhs: vb.shape().to_vec(),
            });
        };
        if k != k2 {
            return Err(TensorError::MatmulDims {
                lhs: va.shape().to_vec(),
                rhs: vb.shape().to_vec(),
            });
        }
        let data = kernels::matmul(va.data(), vb.data(), m, k, n);
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(
            Op::Matmul { a, b, m, k, n },
            Tensor::new(vec![m, n], data).unwrap(),
            needs,
        ))
    }

    /// input[H x W x Cin] ⊛ kernels[kh x kw x Cin x Cout], zero padding.
    pub fn conv2d(
        &mut self,
        input: VarId,
        kernels_id: VarId,
        stride: usize,
        padding: usize,
    ) -> Result<VarId, TensorError> {
        self.check_recording()?;
        let (vi, vk) = (self.value(input), self.value(kernels_id));
        let &[h, w, cin] = vi.shape() else {
            return Err(TensorError::WrongRank {
                expected: 3,
                got: vi.shape().to_vec(),
            });
        };
        let &[kh, kw, kcin, cout] = vk.shape() else {
            return Err(TensorError::BadKernelShape(vk.shape().to_vec()));
        };
        if kcin != cin {
            return Err(TensorError::ChannelMismatch {
                input: cin,
                kernel: kcin,
            });
        }
        let dims = ConvDims::new(h, w, cin, kh, kw, cout, stride, padding)?;
        let (patches, out) = kernels::conv2d_forward(vi.data(), vk.data(), &dims);
        let needs = self.needs(input) || self.needs(kernels_id);
        Ok(self.push(
            Op::Conv2d {
                input,
                kernels: kernels_id,
                dims,
                patches,
            },
            Tensor::new(vec![dims.out_h, dims.out_w, cout], out).unwrap(),
            needs,
        ))
    }

    /// Per-window max over H x W with the channel axis untouched; gradient
    /// routes to the argmax coordinate (first occurrence on ties).
    pub fn maxpool2d(
        &mut self,
        input: VarId,
        window: usize,
        stride: usize,
    ) -> Result<VarId, TensorError> {
        self.check_recording()?;
        let vi = self.value(input);
        let &[h, w, c] = vi.shape() else {
            return Err(TensorError::WrongRank {
                expected: 3,
                got: vi.shape().to_vec(),
            });
        };
        if stride == 0 {
            return Err(TensorError::ZeroStride);
        }
        if window > h || window > w {
            return Err(TensorError::WindowTooLarge { window, h, w });
        }
        let (out, argmax, out_h, out_w) = kernels::maxpool_forward(vi.data(), h, w, c, window, stride);
        let needs = self.needs(input);
        Ok(self.push(
            Op::MaxPool2d { input, argmax },
            Tensor::new(vec![out_h, out_w, c], out).unwrap(),
            needs,
        ))
    }

    /// -log softmax(logits)[label], max-shifted for stability.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: VarId,
        label: usize,
    ) -> Result<VarId, TensorError> {
        self.check_recording()?;
        let vl = self.value(logits);
        let classes = vl.len();
        if vl.shape().len() != 1 {
            return Err(TensorError::WrongRank {
                expected: 1,
                got: vl.shape().to_vec(),
            });
        }
        if label >= classes {
            return Err(TensorError::LabelOutOfRange { label, classes });
        }
        let (loss, softmax) = kernels::softmax_cross_entropy_forward(vl.data(), label);
        let needs = self.needs(logits);
        Ok(self.push(
            Op::SoftmaxCrossEntropy {
                logits,
                label,
                softmax,
            },
            Tensor::scalar(loss),
            needs,
        ))
    }

    /// sqrt(sum of squares over `mask` + delta); differentiable everywhere
    /// for delta > 0, with a zero subgradient if the norm is exactly zero.
    pub fn masked_l2_norm(
        &mut self,
        input: VarId,
        mask: &[bool],
        delta: T,
    ) -> Result<VarId, TensorError> {
        self.check_recording()?;
        let vi = self.value(input);
        if mask.len() != vi.len() {
            return Err(TensorError::MaskLenMismatch {
                mask: mask.len(),
                tensor: vi.len(),
            });
        }
        if !mask.iter().any(|&m| m) {
            return Err(TensorError::EmptyMask);
        }
        let norm = kernels::masked_l2_norm_forward(vi.data(), mask, delta);
        let needs = self.needs(input);
        Ok(self.push(
            Op::MaskedL2Norm {
                input,
                mask: mask.to_vec(),
            },
            Tensor::scalar(norm),
            needs,
        ))
    }

    /// Reverse pass from a scalar root. Accumulates into leaf gradients, so
    /// repeated calls without `reset_grads` add up. Freezes the tape.
    pub fn backward(&mut self, root: VarId) -> Result<(), TensorError> {
        if !self.value(root).is_scalar() {
            return Err(TensorError::NonScalarRoot(self.value(root).shape().to_vec()));
        }
        self.frozen = true;

        // Per-call adjoint buffers; only leaf adjoints survive into
        // `leaf_grads` so that accumulation over calls stays linear.
        let mut adj: Vec<Option<Vec<T>>> = vec![None; self.nodes.len()];
        adj[root.0] = Some(vec![T::one()]);

        for idx in (0..self.nodes.len()).rev() {
            if !self.nodes[idx].needs_grad {
                continue;
            }
            let Some(g) = adj[idx].take() else { continue };
            self.backward_node(idx, &g, &mut adj);
            if let Op::Leaf {
                differentiable: true,
            } = self.nodes[idx].op
            {
                match &mut self.leaf_grads[idx] {
                    Some(acc) => {
                        for (a, &gv) in acc.iter_mut().zip(&g) {
                            *a = *a + gv;
                        }
                    }
                    None => self.leaf_grads[idx] = Some(g),
                }
            }
        }
        Ok(())
    }

    fn accumulate(adj: &mut [Option<Vec<T>>], id: VarId, len: usize, f: impl Fn(&mut [T])) {
        let slot = adj[id.0].get_or_insert_with(|| vec![T::zero(); len]);
        f(slot);
    }

    fn backward_node(&self, idx: usize, g: &[T], adj: &mut [Option<Vec<T>>]) {
        match &self.nodes[idx].op {
            Op::Leaf { .. } => {}
            Op::Unary { kind, a } => {
                if !self.needs(*a) {
                    return;
                }
                let va = self.nodes[a.0].value.data();
                Self::accumulate(adj, *a, va.len(), |da| match kind {
                    UnaryKind::Neg => {
                        for (d, &gv) in da.iter_mut().zip(g) {
                            *d = *d - gv;
                        }
                    }
                    UnaryKind::Relu => {
                        for ((d, &gv), &x) in da.iter_mut().zip(g).zip(va) {
                            if x > T::zero() {
                                *d = *d + gv;
                            }
                        }
                    }
                    UnaryKind::Sign => {}
                    UnaryKind::Log => {
                        for ((d, &gv), &x) in da.iter_mut().zip(g).zip(va) {
                            *d = *d + gv / x;
                        }
                    }
                });
            }
            Op::Clamp { a, lo, hi } => {
                if !self.needs(*a) {
                    return;
                }
                let va = self.nodes[a.0].value.data();
                Self::accumulate(adj, *a, va.len(), |da| {
                    for ((d, &gv), &x) in da.iter_mut().zip(g).zip(va) {
                        if x >= *lo && x <= *hi {
                            *d = *d + gv;
                        }
                    }
                });
            }
            Op::Binary { kind, a, b } => {
                let (la, lb) = (self.nodes[a.0].value.len(), self.nodes[b.0].value.len());
                let va = self.nodes[a.0].value.data();
                let vb = self.nodes[b.0].value.data();
                if self.needs(*a) {
                    Self::accumulate(adj, *a, la, |da| {
                        for (i, &gv) in g.iter().enumerate() {
                            let contrib = match kind {
                                BinaryKind::Add | BinaryKind::Sub => gv,
                                BinaryKind::Mul => gv * vb[i % lb],
                            };
                            da[i % la] = da[i % la] + contrib;
                        }
                    });
                }
                if self.needs(*b) {
                    Self::accumulate(adj, *b, lb, |db| {
                        for (i, &gv) in g.iter().enumerate() {
                            let contrib = match kind {
                                BinaryKind::Add => gv,
                                BinaryKind::Sub => -gv,
                                BinaryKind::Mul => gv * va[i % la],
                            };
                            db[i % lb] = db[i % lb] + contrib;
                        }
                    });
                }
            }
            Op::AddScalar { a } => {
                if !self.needs(*a) {
                    return;
                }
                Self::accumulate(adj, *a, g.len(), |da| {
                    for (d, &gv) in da.iter_mut().zip(g) {
                        *d = *d + gv;
                    }
                });
            }
            Op::Scale { a, c } => {
                if !self.needs(*a) {
                    return;
                }
                let c = *c;
                Self::accumulate(adj, *a, g.len(), |da| {
                    for (d, &gv) in da.iter_mut().zip(g) {
                        *d = *d + c * gv;
                    }
                });
            }
            Op::Sum { a } => {
                if !self.needs(*a) {
                    return;
                }
                let la = self.nodes[a.0].value.len();
                let gv = g[0];
                Self::accumulate(adj, *a, la, |da| {
                    for d in da.iter_mut() {
                        *d = *d + gv;
                    }
                });
            }
            Op::Reshape { a } => {
                if !self.needs(*a) {
                    return;
                }
                Self::accumulate(adj, *a, g.len(), |da| {
                    for (d, &gv) in da.iter_mut().zip(g) {
                        *d = *d + gv;
                    }
                });
            }
            Op::BiasAdd { a, bias } => {
                let c = self.nodes[bias.0].value.len();
                if self.needs(*a) {
                    Self::accumulate(adj, *a, g.len(), |da| {
                        for (d, &gv) in da.iter_mut().zip(g) {
                            *d = *d + gv;
                        }
                    });
                }
                if self.needs(*bias) {
                    Self::accumulate(adj, *bias, c, |db| {
                        for (i, &gv) in g.iter().enumerate() {
                            db[i % c] = db[i % c] + gv;
                        }
                    });
                }
            }
            Op::Matmul { a, b, m, k, n } => {
                let (m, k, n) = (*m, *k, *n);
                if self.needs(*a) {
                    let vb = self.nodes[b.0].value.data();
                    Self::accumulate(adj, *a, m * k, |da| {
                        kernels::matmul_a_bt_accumulate(g, vb, m, k, n, da);
                    });
                }
                if self.needs(*b) {
                    let va = self.nodes[a.0].value.data();
                    Self::accumulate(adj, *b, k * n, |db| {
                        kernels::matmul_at_b_accumulate(va, g, m, k, n, db);
                    });
                }
            }
            Op::Conv2d {
                input,
                kernels: kern,
                dims,
                patches,
            } => {
                let rows = dims.patch_rows();
                let cols = dims.patch_cols();
                if self.needs(*kern) {
                    Self::accumulate(adj, *kern, cols * dims.cout, |dk| {
                        kernels::matmul_at_b_accumulate(patches, g, rows, cols, dims.cout, dk);
                    });
                }
                if self.needs(*input) {
                    let vk = self.nodes[kern.0].value.data();
                    let mut d_col = vec![T::zero(); rows * cols];
                    kernels::matmul_a_bt_accumulate(g, vk, rows, cols, dims.cout, &mut d_col);
                    Self::accumulate(adj, *input, dims.h * dims.w * dims.cin, |di| {
                        kernels::col2im_accumulate(&d_col, dims, di);
                    });
                }
            }
            Op::MaxPool2d { input, argmax } => {
                if !self.needs(*input) {
                    return;
                }
                let li = self.nodes[input.0].value.len();
                Self::accumulate(adj, *input, li, |di| {
                    for (o, &src) in argmax.iter().enumerate() {
                        di[src as usize] = di[src as usize] + g[o];
                    }
                });
            }
            Op::SoftmaxCrossEntropy {
                logits,
                label,
                softmax,
            } => {
                if !self.needs(*logits) {
                    return;
                }
                let gv = g[0];
                let label = *label;
                Self::accumulate(adj, *logits, softmax.len(), |dl| {
                    for (i, (d, &p)) in dl.iter_mut().zip(softmax).enumerate() {
                        let one_hot = if i == label { T::one() } else { T::zero() };
                        *d = *d + gv * (p - one_hot);
                    }
                });
            }
            Op::MaskedL2Norm { input, mask } => {
                if !self.needs(*input) {
                    return;
                }
                let norm = self.nodes[idx].value.item();
                let vi = self.nodes[input.0].value.data();
                let gv = g[0];
                Self::accumulate(adj, *input, vi.len(), |di| {
                    if norm == T::zero() {
                        return;
                    }
                    for ((d, &x), &m) in di.iter_mut().zip(vi).zip(mask) {
                        if m {
                            *d = *d + gv * x / norm;
                        }
                    }
                });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(data: &[f64]) -> Tensor<f64> {
        Tensor::new(vec![data.len()], data.to_vec()).unwrap()
    }

    #[test]
    fn relu_forward() {
        let mut tape = Tape::new();
        let x = tape.leaf(&t(&[-1.0, 0.0, 2.0]));
        let y = tape.relu(x).unwrap();
        assert_eq!(tape.value(y).data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn sign_forward_and_zero_grad() {
        let mut tape = Tape::new();
        let x = tape.leaf(&t(&[-0.5, 0.0, 3.0]));
        let y = tape.sign(x).unwrap();
        assert_eq!(tape.value(y).data(), &[-1.0, 0.0, 1.0]);
        let s = tape.sum(y).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap().data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn add_forward() {
        let mut tape = Tape::new();
        let a = tape.leaf(&t(&[1.0, 2.0]));
        let b = tape.leaf(&t(&[3.0, 4.0]));
        let y = tape.add(a, b).unwrap();
        assert_eq!(tape.value(y).data(), &[4.0, 6.0]);
    }

    #[test]
    fn binary_rejects_shape_mismatch() {
        let mut tape = Tape::<f64>::new();
        let a = tape.leaf(&t(&[1.0, 2.0]));
        let b = tape.leaf(&t(&[1.0, 2.0, 3.0]));
        assert!(matches!(
            tape.add(a, b),
            Err(TensorError::ShapeMismatch { op: "add", .. })
        ));
    }

    #[test]
    fn scalar_broadcast_mul_grads() {
        let mut tape = Tape::new();
        let a = tape.leaf(&t(&[1.0, 2.0, 3.0]));
        let s = tape.leaf(&Tensor::scalar(2.0));
        let y = tape.mul(a, s).unwrap();
        assert_eq!(tape.value(y).data(), &[2.0, 4.0, 6.0]);
        let total = tape.sum(y).unwrap();
        tape.backward(total).unwrap();
        assert_eq!(tape.grad(a).unwrap().data(), &[2.0, 2.0, 2.0]);
        assert_eq!(tape.grad(s).unwrap().data(), &[6.0]);
    }

    #[test]
    fn linear_chain_grad() {
        // y = 3 * x at x = 2 -> dy/dx = 3
        let mut tape = Tape::new();
        let x = tape.leaf(&Tensor::scalar(2.0));
        let y = tape.scale(x, 3.0).unwrap();
        tape.backward(y).unwrap();
        assert_eq!(tape.grad(x).unwrap().item(), 3.0);
    }

    #[test]
    fn dead_relu_grad_is_zero() {
        // y = relu(-x) at x = 1 -> dy/dx = 0
        let mut tape = Tape::new();
        let x = tape.leaf(&Tensor::scalar(1.0));
        let n = tape.neg(x).unwrap();
        let y = tape.relu(n).unwrap();
        tape.backward(y).unwrap();
        assert_eq!(tape.grad(x).unwrap().item(), 0.0);
    }

    #[test]
    fn log_rejects_non_positive() {
        let mut tape = Tape::new();
        let x = tape.leaf(&t(&[1.0, 0.0]));
        assert!(matches!(tape.log(x), Err(TensorError::NonPositiveLog(v)) if v == 0.0));
    }

    #[test]
    fn repeated_backward_accumulates_and_reset_clears() {
        let mut tape = Tape::new();
        let x = tape.leaf(&Tensor::scalar(2.0));
        let y = tape.scale(x, 3.0).unwrap();
        tape.backward(y).unwrap();
        tape.backward(y).unwrap();
        assert_eq!(tape.grad(x).unwrap().item(), 6.0);
        tape.reset_grads();
        assert!(tape.grad(x).is_none());
        tape.backward(y).unwrap();
        assert_eq!(tape.grad(x).unwrap().item(), 3.0);
    }

    #[test]
    fn backward_requires_scalar_root() {
        let mut tape = Tape::new();
        let x = tape.leaf(&t(&[1.0, 2.0]));
        let y = tape.relu(x).unwrap();
        assert!(matches!(
            tape.backward(y),
            Err(TensorError::NonScalarRoot(_))
        ));
    }

    #[test]
    fn frozen_tape_rejects_new_ops() {
        let mut tape = Tape::new();
        let x = tape.leaf(&Tensor::scalar(1.0));
        let y = tape.scale(x, 2.0).unwrap();
        tape.backward(y).unwrap();
        assert!(matches!(tape.relu(x), Err(TensorError::TapeFrozen)));
    }

    #[test]
    fn maxpool_tie_gradient_goes_to_first() {
        let mut tape = Tape::new();
        let x = tape.leaf(&Tensor::new(vec![2, 2, 1], vec![7.0f64; 4]).unwrap());
        let y = tape.maxpool2d(x, 2, 2).unwrap();
        let s = tape.sum(y).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap().data(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn masked_norm_rejects_empty_mask() {
        let mut tape = Tape::new();
        let x = tape.leaf(&t(&[1.0, 2.0]));
        assert!(matches!(
            tape.masked_l2_norm(x, &[false, false], 1e-12),
            Err(TensorError::EmptyMask)
        ));
    }

    #[test]
    fn masked_norm_full_mask_matches_plain_norm() {
        let mut tape = Tape::new();
        let x = tape.leaf(&t(&[3.0, 4.0]));
        let n = tape.masked_l2_norm(x, &[true, true], 0.0).unwrap();
        assert_eq!(tape.value(n).item(), 5.0);
    }

    #[test]
    fn softmax_ce_rejects_bad_label() {
        let mut tape = Tape::new();
        let x = tape.leaf(&t(&[0.0, 0.0]));
        assert!(matches!(
            tape.softmax_cross_entropy(x, 2),
            Err(TensorError::LabelOutOfRange {
                label: 2,
                classes: 2
            })
        ));
    }

    #[test]
    fn constants_receive_no_grad() {
        let mut tape = Tape::new();
        let x = tape.constant(&Tensor::scalar(2.0));
        let y = tape.scale(x, 3.0).unwrap();
        tape.backward(y).unwrap();
        assert!(tape.grad(x).is_none());
    }
}
