//! Deterministic synthetic digit images.
//!
//! Each class is a fixed stroke skeleton rendered with per-sample jitter
//! (affine warp, stroke thickness, control-point wobble, contrast, noise).
//! The generator exists because this toolkit trains its reference models
//! from scratch and must not depend on downloaded corpora; it emits
//! standard IDX / CIFAR-10 binary files through the same writers the
//! loaders are tested against.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const SAMPLES_PER_ARC: usize = 20;

enum Stroke {
    Line((f32, f32), (f32, f32)),
    /// Ellipse arc around `c`, angles in degrees, y axis pointing down.
    Arc {
        c: (f32, f32),
        r: (f32, f32),
        a0: f32,
        a1: f32,
    },
    Poly(&'static [(f32, f32)]),
}

/// Skeletons on the unit square (y down).
fn skeleton(digit: u8) -> Vec<Stroke> {
    use Stroke::*;
    match digit {
        0 => vec![Arc {
            c: (0.50, 0.50),
            r: (0.30, 0.40),
            a0: 0.0,
            a1: 360.0,
        }],
        1 => vec![
            Line((0.38, 0.28), (0.56, 0.10)),
            Line((0.56, 0.10), (0.56, 0.90)),
        ],
        2 => vec![
            Arc {
                c: (0.50, 0.32),
                r: (0.28, 0.22),
                a0: 170.0,
                a1: 370.0,
            },
            Line((0.76, 0.40), (0.22, 0.88)),
            Line((0.22, 0.88), (0.80, 0.88)),
        ],
        3 => vec![
            Arc {
                c: (0.44, 0.30),
                r: (0.24, 0.20),
                a0: 200.0,
                a1: 450.0,
            },
            Arc {
                c: (0.44, 0.68),
                r: (0.26, 0.21),
                a0: 270.0,
                a1: 520.0,
            },
        ],
        4 => vec![
            Line((0.62, 0.10), (0.22, 0.62)),
            Line((0.22, 0.62), (0.82, 0.62)),
            Line((0.62, 0.10), (0.62, 0.90)),
        ],
        5 => vec![
            Line((0.75, 0.12), (0.28, 0.12)),
            Line((0.28, 0.12), (0.26, 0.45)),
            Arc {
                c: (0.45, 0.66),
                r: (0.27, 0.22),
                a0: 240.0,
                a1: 490.0,
            },
        ],
        6 => vec![
            Poly(&[(0.64, 0.10), (0.45, 0.30), (0.33, 0.52)]),
            Arc {
                c: (0.47, 0.63),
                r: (0.24, 0.25),
                a0: 0.0,
                a1: 360.0,
            },
        ],
        7 => vec![
            Line((0.22, 0.12), (0.80, 0.12)),
            Line((0.80, 0.12), (0.40, 0.90)),
        ],
        8 => vec![
            Arc {
                c: (0.50, 0.30),
                r: (0.22, 0.18),
                a0: 0.0,
                a1: 360.0,
            },
            Arc {
                c: (0.50, 0.70),
                r: (0.26, 0.21),
                a0: 0.0,
                a1: 360.0,
            },
        ],
        9 => vec![
            Arc {
                c: (0.52, 0.35),
                r: (0.24, 0.22),
                a0: 0.0,
                a1: 360.0,
            },
            Poly(&[(0.76, 0.35), (0.72, 0.62), (0.58, 0.88)]),
        ],
        other => panic!("digit {other} out of range"),
    }
}

fn polylines(digit: u8) -> Vec<Vec<(f32, f32)>> {
    skeleton(digit)
        .into_iter()
        .map(|stroke| match stroke {
            Stroke::Line(a, b) => vec![a, b],
            Stroke::Poly(pts) => pts.to_vec(),
            Stroke::Arc { c, r, a0, a1 } => (0..=SAMPLES_PER_ARC)
                .map(|i| {
                    let t = (a0 + (a1 - a0) * i as f32 / SAMPLES_PER_ARC as f32).to_radians();
                    (c.0 + r.0 * t.cos(), c.1 + r.1 * t.sin())
                })
                .collect(),
        })
        .collect()
}

fn dist_to_segment(p: (f32, f32), a: (f32, f32), b: (f32, f32)) -> f32 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    let (cx, cy) = (a.0 + t * dx, a.1 + t * dy);
    ((p.0 - cx) * (p.0 - cx) + (p.1 - cy) * (p.1 - cy)).sqrt()
}

/// Per-sample draw parameters.
struct Jitter {
    rotation: f32,
    scale: (f32, f32),
    shear: f32,
    shift: (f32, f32),
    thickness: f32,
    foreground: f32,
    background: f32,
    noise_sigma: f32,
    wobble: f32,
}

impl Jitter {
    fn sample(rng: &mut ChaCha8Rng) -> Self {
        let u = |rng: &mut ChaCha8Rng, lo: f32, hi: f32| rng.random::<f32>() * (hi - lo) + lo;
        Jitter {
            rotation: u(rng, -0.30, 0.30),
            scale: (u(rng, 0.72, 1.12), u(rng, 0.72, 1.12)),
            shear: u(rng, -0.25, 0.25),
            shift: (u(rng, -2.8, 2.8), u(rng, -2.8, 2.8)),
            thickness: u(rng, 0.9, 2.2),
            foreground: u(rng, 0.40, 0.95),
            background: u(rng, 0.02, 0.22),
            noise_sigma: u(rng, 0.05, 0.13),
            wobble: 0.026,
        }
    }
}

/// Renders one digit as `side x side` grayscale coverage in [0, 1].
fn render_gray(digit: u8, side: usize, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let jitter = Jitter::sample(rng);
    let wobble = Normal::new(0.0f32, jitter.wobble).unwrap();
    let noise = Normal::new(0.0f32, jitter.noise_sigma).unwrap();

    // Jitter control points in unit space, then map through the affine warp
    // into pixel space.
    let glyph = side as f32 - 8.0;
    let margin = 4.0;
    let centre = side as f32 / 2.0;
    let (sin, cos) = jitter.rotation.sin_cos();
    let mut segments: Vec<((f32, f32), (f32, f32))> = Vec::new();
    for line in polylines(digit) {
        let pts: Vec<(f32, f32)> = line
            .into_iter()
            .map(|(x, y)| {
                let (x, y) = (x + wobble.sample(rng), y + wobble.sample(rng));
                // Unit square -> glyph box.
                let (x, y) = (margin + x * glyph, margin + y * glyph);
                // Centered affine: scale, shear, rotate, translate.
                let (x, y) = (x - centre, y - centre);
                let (x, y) = (x * jitter.scale.0, y * jitter.scale.1);
                let (x, y) = (x + jitter.shear * y, y);
                let (x, y) = (x * cos - y * sin, x * sin + y * cos);
                (x + centre + jitter.shift.0, y + centre + jitter.shift.1)
            })
            .collect();
        segments.extend(pts.windows(2).map(|w| (w[0], w[1])));
    }

    let aa = 0.9f32;
    let mut out = vec![0.0f32; side * side];
    for (i, v) in out.iter_mut().enumerate() {
        let p = ((i % side) as f32 + 0.5, (i / side) as f32 + 0.5);
        let mut best = f32::INFINITY;
        for &(a, b) in &segments {
            best = best.min(dist_to_segment(p, a, b));
        }
        let coverage = ((jitter.thickness / 2.0 + aa / 2.0 - best) / aa).clamp(0.0, 1.0);
        let value = jitter.background + coverage * (jitter.foreground - jitter.background);
        *v = (value + noise.sample(rng)).clamp(0.0, 1.0);
    }
    out
}

fn quantize(values: &[f32]) -> Vec<u8> {
    values.iter().map(|v| (v * 255.0).round() as u8).collect()
}

/// Synthetic grayscale digit set in IDX pixel layout (side x side bytes per
/// image). Deterministic in (seed, count, side).
pub fn generate_gray(count: usize, side: usize, seed: u64) -> (Vec<u8>, Vec<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pixels = Vec::with_capacity(count * side * side);
    let mut labels = Vec::with_capacity(count);
    for _ in 0..count {
        let digit = (rng.random::<u32>() % 10) as u8;
        labels.push(digit);
        pixels.extend(quantize(&render_gray(digit, side, &mut rng)));
    }
    (pixels, labels)
}

/// Synthetic RGB digit set in H x W x C byte layout (32x32x3 per image):
/// random saturated stroke color over a dark background.
pub fn generate_rgb(count: usize, seed: u64) -> (Vec<u8>, Vec<u8>) {
    let side = crate::cifar::SIDE;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pixels = Vec::with_capacity(count * side * side * 3);
    let mut labels = Vec::with_capacity(count);
    for _ in 0..count {
        let digit = (rng.random::<u32>() % 10) as u8;
        labels.push(digit);
        let gray = render_gray(digit, side, &mut rng);
        let bg: Vec<f32> = (0..3).map(|_| rng.random::<f32>() * 0.35).collect();
        let fg: Vec<f32> = (0..3).map(|_| 0.55 + rng.random::<f32>() * 0.45).collect();
        for v in gray {
            for ch in 0..3 {
                let value = bg[ch] + v * (fg[ch] - bg[ch]);
                pixels.push((value.clamp(0.0, 1.0) * 255.0).round() as u8);
            }
        }
    }
    (pixels, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let (p1, l1) = generate_gray(8, 28, 123);
        let (p2, l2) = generate_gray(8, 28, 123);
        assert_eq!(p1, p2);
        assert_eq!(l1, l2);
        let (p3, _) = generate_gray(8, 28, 124);
        assert_ne!(p1, p3);
    }

    #[test]
    fn images_have_ink_and_background() {
        let (pixels, labels) = generate_gray(20, 28, 7);
        assert_eq!(pixels.len(), 20 * 28 * 28);
        assert_eq!(labels.len(), 20);
        for img in pixels.chunks(28 * 28) {
            let bright = img.iter().filter(|&&v| v > 128).count();
            assert!(bright > 15, "digit should have visible ink");
            assert!(bright < 28 * 28 / 2, "background should dominate");
        }
    }
}
