//! Finite-difference and brute-force oracles for the tape ops, plus the
//! backward-pass algebra properties.

use fda_core::models::{build_model, Architecture, LayerSpec};
use fda_core::tensor::{grad_check, Tape, Tensor, VarId};
use proptest::prelude::*;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-4;
const FD_STEP: f64 = 1e-5;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform in [lo, hi), re-drawn until no coordinate is within `margin` of
/// `kinks` (relu corners, clamp edges, ...).
fn random_tensor(
    rng: &mut ChaCha8Rng,
    shape: Vec<usize>,
    lo: f64,
    hi: f64,
    kinks: &[f64],
    margin: f64,
) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| loop {
        let v = rng.random::<f64>() * (hi - lo) + lo;
        if kinks.iter().all(|k| (v - k).abs() > margin) {
            return v;
        }
    })
}

/// Random positive weights so a reduction to scalar exercises every output
/// coordinate with a distinct sensitivity.
fn weighted_sum(
    tape: &mut Tape<f64>,
    value: VarId,
    rng: &mut ChaCha8Rng,
) -> Result<VarId, fda_core::TensorError> {
    let shape = tape.value(value).shape().to_vec();
    let weights = Tensor::from_fn(shape, |_| rng.random::<f64>() + 0.5);
    let w = tape.constant(&weights);
    let prod = tape.mul(value, w)?;
    tape.sum(prod)
}

#[test]
fn elementwise_ops_match_finite_differences() {
    // 20 random 64-bit inputs per differentiable elementwise op, kinks avoided.
    for rep in 0..20u64 {
        let mut r = rng(1000 + rep);
        let x = random_tensor(&mut r, vec![6], -2.0, 2.0, &[0.0], 0.05);
        let other = random_tensor(&mut r, vec![6], -2.0, 2.0, &[], 0.0);
        let positive = random_tensor(&mut r, vec![6], 0.2, 3.0, &[], 0.0);

        let cases: Vec<(&str, Box<dyn Fn(&mut Tape<f64>, VarId) -> Result<VarId, _>>, &Tensor<f64>)> = vec![
            (
                "add",
                Box::new({
                    let other = other.clone();
                    move |t: &mut Tape<f64>, v| {
                        let o = t.constant(&other);
                        let y = t.add(v, o)?;
                        t.sum(y)
                    }
                }),
                &x,
            ),
            (
                "sub",
                Box::new({
                    let other = other.clone();
                    move |t: &mut Tape<f64>, v| {
                        let o = t.constant(&other);
                        let y = t.sub(v, o)?;
                        t.sum(y)
                    }
                }),
                &x,
            ),
            (
                "mul",
                Box::new({
                    let other = other.clone();
                    move |t: &mut Tape<f64>, v| {
                        let o = t.constant(&other);
                        let y = t.mul(v, o)?;
                        t.sum(y)
                    }
                }),
                &x,
            ),
            (
                "neg",
                Box::new(|t: &mut Tape<f64>, v| {
                    let y = t.neg(v)?;
                    t.sum(y)
                }),
                &x,
            ),
            (
                "relu",
                Box::new(|t: &mut Tape<f64>, v| {
                    let y = t.relu(v)?;
                    t.sum(y)
                }),
                &x,
            ),
            (
                "log",
                Box::new(|t: &mut Tape<f64>, v| {
                    let y = t.log(v)?;
                    t.sum(y)
                }),
                &positive,
            ),
        ];
        for (name, f, point) in cases {
            let err = grad_check(f, point, FD_STEP).unwrap();
            assert!(err <= TOL, "{name} rep {rep}: rel-err {err}");
        }

        // clamp: keep coordinates away from the clamp edges at +-1.
        let c = random_tensor(&mut r, vec![6], -2.0, 2.0, &[-1.0, 1.0], 0.05);
        let err = grad_check(
            |t, v| {
                let y = t.clamp(v, -1.0, 1.0)?;
                t.sum(y)
            },
            &c,
            FD_STEP,
        )
        .unwrap();
        assert!(err <= TOL, "clamp rep {rep}: rel-err {err}");
    }
}

#[test]
fn matmul_grads_match_finite_differences() {
    // Random 3x4 by 4x2 per the reference example, both operands.
    for rep in 0..20u64 {
        let mut r = rng(2000 + rep);
        let a = random_tensor(&mut r, vec![3, 4], -1.0, 1.0, &[], 0.0);
        let b = random_tensor(&mut r, vec![4, 2], -1.0, 1.0, &[], 0.0);

        let err = grad_check(
            |t, v| {
                let bc = t.constant(&b);
                let y = t.matmul(v, bc)?;
                weighted_sum(t, y, &mut rng(7))
            },
            &a,
            FD_STEP,
        )
        .unwrap();
        assert!(err <= TOL, "matmul lhs rep {rep}: {err}");

        let err = grad_check(
            |t, v| {
                let ac = t.constant(&a);
                let y = t.matmul(ac, v)?;
                weighted_sum(t, y, &mut rng(8))
            },
            &b,
            FD_STEP,
        )
        .unwrap();
        assert!(err <= TOL, "matmul rhs rep {rep}: {err}");
    }
}

#[test]
fn conv2d_grads_match_finite_differences() {
    // Random 5x5x2 input against 3x3x2x3 kernels, input and kernel grads.
    for rep in 0..20u64 {
        let mut r = rng(3000 + rep);
        let input = random_tensor(&mut r, vec![5, 5, 2], -1.0, 1.0, &[], 0.0);
        let kernels = random_tensor(&mut r, vec![3, 3, 2, 3], -1.0, 1.0, &[], 0.0);

        let err = grad_check(
            |t, v| {
                let k = t.constant(&kernels);
                let y = t.conv2d(v, k, 1, 0)?;
                weighted_sum(t, y, &mut rng(9))
            },
            &input,
            FD_STEP,
        )
        .unwrap();
        assert!(err <= TOL, "conv input rep {rep}: {err}");

        let err = grad_check(
            |t, v| {
                let i = t.constant(&input);
                let y = t.conv2d(i, v, 1, 0)?;
                weighted_sum(t, y, &mut rng(10))
            },
            &kernels,
            FD_STEP,
        )
        .unwrap();
        assert!(err <= TOL, "conv kernel rep {rep}: {err}");

        // Strided + padded variant.
        let err = grad_check(
            |t, v| {
                let k = t.constant(&kernels);
                let y = t.conv2d(v, k, 2, 1)?;
                weighted_sum(t, y, &mut rng(11))
            },
            &input,
            FD_STEP,
        )
        .unwrap();
        assert!(err <= TOL, "conv stride/pad rep {rep}: {err}");
    }
}

#[test]
fn maxpool_grads_match_finite_differences_away_from_ties() {
    for rep in 0..20u64 {
        let mut r = rng(4000 + rep);
        // Distinct values spaced well apart keep the argmax stable under h.
        let mut values: Vec<f64> = (0..16).map(|i| i as f64 * 0.11).collect();
        for v in values.iter_mut() {
            *v += r.random::<f64>() * 0.03;
        }
        for i in (1..16).rev() {
            let j = (r.random::<u32>() as usize) % (i + 1);
            values.swap(i, j);
        }
        let input = Tensor::new(vec![4, 4, 1], values).unwrap();
        let err = grad_check(
            |t, v| {
                let y = t.maxpool2d(v, 2, 2)?;
                weighted_sum(t, y, &mut rng(12))
            },
            &input,
            FD_STEP,
        )
        .unwrap();
        assert!(err <= TOL, "maxpool rep {rep}: {err}");
    }
}

#[test]
fn softmax_cross_entropy_grad_matches_finite_differences() {
    for rep in 0..20u64 {
        let mut r = rng(5000 + rep);
        let logits = random_tensor(&mut r, vec![10], -3.0, 3.0, &[], 0.0);
        let label = (r.random::<u32>() % 10) as usize;
        let err = grad_check(|t, v| t.softmax_cross_entropy(v, label), &logits, FD_STEP).unwrap();
        assert!(err <= TOL, "softmax_ce rep {rep}: {err}");
    }
}

#[test]
fn masked_l2_norm_matches_independent_sum_of_squares() {
    // Independent oracle: a straight sum-of-squares loop over the mask.
    let mut r = rng(6000);
    for _ in 0..50 {
        let t16 = random_tensor(&mut r, vec![16], -2.0, 2.0, &[], 0.0);
        let mask: Vec<bool> = (0..16).map(|_| r.random::<f64>() < 0.6).collect();
        if !mask.iter().any(|&b| b) {
            continue;
        }
        let mut expected = 0.0f64;
        for (v, &m) in t16.data().iter().zip(&mask) {
            if m {
                expected += v * v;
            }
        }
        let expected = expected.sqrt();

        let mut tape = Tape::new();
        let x = tape.leaf(&t16);
        let n = tape.masked_l2_norm(x, &mask, 0.0).unwrap();
        assert!((tape.value(n).item() - expected).abs() < 1e-6);
    }
}

#[test]
fn masked_l2_norm_grad_matches_finite_differences() {
    for rep in 0..20u64 {
        let mut r = rng(7000 + rep);
        let point = random_tensor(&mut r, vec![12], 0.3, 2.0, &[], 0.0);
        let mask: Vec<bool> = (0..12).map(|i| i % 3 != 0).collect();
        let err = grad_check(
            |t, v| t.masked_l2_norm(v, &mask, 1e-12),
            &point,
            FD_STEP,
        )
        .unwrap();
        assert!(err <= TOL, "masked norm rep {rep}: {err}");
    }
}

/// conv -> relu -> pool -> conv -> relu -> pool -> dense -> relu -> dense
/// -> loss, differentiated end to end through the image.
#[test]
fn composite_model_loss_grad_matches_finite_differences() {
    let arch = Architecture {
        layers: vec![
            LayerSpec::Conv {
                kh: 3,
                kw: 3,
                out_channels: 4,
                stride: 1,
                padding: 0,
            },
            LayerSpec::Relu,
            LayerSpec::MaxPool { window: 2, stride: 2 },
            LayerSpec::Conv {
                kh: 3,
                kw: 3,
                out_channels: 6,
                stride: 1,
                padding: 1,
            },
            LayerSpec::Relu,
            LayerSpec::Flatten,
            LayerSpec::Dense { out_units: 16 },
            LayerSpec::Relu,
            LayerSpec::Dense { out_units: 5 },
        ],
        input_shape: (10, 10, 1),
        num_classes: 5,
    };
    let model = build_model::<f64>(arch, 42).unwrap();
    let mut r = rng(8000);
    let mut checked = 0;
    let mut attempts = 0;
    while checked < 3 && attempts < 20 {
        attempts += 1;
        let image = random_tensor(&mut r, vec![10, 10, 1], 0.05, 0.95, &[], 0.0);
        // Skip draws that land a pre-relu activation close to its kink.
        let (_, trace) = model.forward(&image).unwrap();
        let near_kink = trace
            .entries
            .iter()
            .flat_map(|e| e.activation.data())
            .any(|&v| v != 0.0 && v.abs() < 1e-3);
        if near_kink {
            continue;
        }
        let err = grad_check(
            |t, v| {
                let fwd = model.forward_on_tape(t, v).unwrap();
                t.softmax_cross_entropy(fwd.logits, 2)
            },
            &image,
            FD_STEP,
        )
        .unwrap();
        assert!(err <= TOL, "composite rel-err {err}");
        checked += 1;
    }
    assert!(checked >= 3, "could not find enough kink-free draws");
}

#[test]
fn backward_is_linear_in_the_root() {
    // grads of a*f + b*g equal a*grad(f) + b*grad(g) within 1e-6.
    let mut r = rng(9000);
    for _ in 0..10 {
        let point = random_tensor(&mut r, vec![8], 0.2, 1.5, &[], 0.0);
        let (a, b) = (1.75f64, -0.4f64);

        let grad_of = |combine: &dyn Fn(&mut Tape<f64>, VarId) -> VarId| -> Vec<f64> {
            let mut tape = Tape::new();
            let x = tape.leaf(&point);
            let root = combine(&mut tape, x);
            tape.backward(root).unwrap();
            tape.grad(x).unwrap().into_data()
        };

        // f = masked norm of the first half, g = sum of squares via mul+sum.
        let mask: Vec<bool> = (0..8).map(|i| i < 4).collect();
        let f = |t: &mut Tape<f64>, x: VarId| t.masked_l2_norm(x, &mask, 1e-12).unwrap();
        let g = |t: &mut Tape<f64>, x: VarId| {
            let sq = t.mul(x, x).unwrap();
            t.sum(sq).unwrap()
        };

        let gf = grad_of(&|t, x| f(t, x));
        let gg = grad_of(&|t, x| g(t, x));
        let combined = grad_of(&|t, x| {
            let fa = f(t, x);
            let gb = g(t, x);
            let sfa = t.scale(fa, a).unwrap();
            let sgb = t.scale(gb, b).unwrap();
            t.add(sfa, sgb).unwrap()
        });

        for i in 0..8 {
            let expect = a * gf[i] + b * gg[i];
            assert!(
                (combined[i] - expect).abs() < 1e-6,
                "coordinate {i}: {} vs {expect}",
                combined[i]
            );
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conv_output_shape_formula_holds(
        h in 1usize..12,
        w in 1usize..12,
        kh in 1usize..6,
        kw in 1usize..6,
        stride in 1usize..4,
        padding in 0usize..3,
    ) {
        let ph = h + 2 * padding;
        let pw = w + 2 * padding;
        prop_assume!(kh <= ph && kw <= pw);
        let input = Tensor::<f64>::zeros(vec![h, w, 2]);
        let kernels = Tensor::<f64>::zeros(vec![kh, kw, 2, 3]);
        let mut tape = Tape::new();
        let i = tape.constant(&input);
        let k = tape.constant(&kernels);
        let out = tape.conv2d(i, k, stride, padding).unwrap();
        let expect_h = (ph - kh) / stride + 1;
        let expect_w = (pw - kw) / stride + 1;
        prop_assert_eq!(tape.value(out).shape(), &[expect_h, expect_w, 3]);
    }

    #[test]
    fn masked_norm_with_full_mask_equals_euclidean_norm(
        values in proptest::collection::vec(-10.0f64..10.0, 1..32),
    ) {
        let n = values.len();
        let expected = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        let tensor = Tensor::new(vec![n], values).unwrap();
        let mut tape = Tape::new();
        let x = tape.constant(&tensor);
        let norm = tape.masked_l2_norm(x, &vec![true; n], 0.0).unwrap();
        prop_assert!((tape.value(norm).item() - expected).abs() < 1e-6);
    }
}
