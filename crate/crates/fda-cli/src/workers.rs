//! Fan-out of independent attack instances over a thread pool. Workers share
//! only the frozen model; results are collected by position, so the output
//! order never depends on scheduling.

use std::sync::Mutex;

use fda_core::attacks::{run_attack, AdversarialExample, AttackConfig, AttackError};
use fda_core::models::Model;
use fda_core::tensor::Tensor;

/// Attacks every image with its own tape, using up to `workers` threads.
/// Output order matches input order.
pub fn attack_all(
    model: &Model<f32>,
    images: &[Tensor<f32>],
    config: &AttackConfig,
    workers: usize,
) -> Result<Vec<AdversarialExample<f32>>, AttackError> {
    let workers = workers.max(1).min(images.len().max(1));
    if workers == 1 {
        return images.iter().map(|img| run_attack(model, img, config)).collect();
    }

    let slots: Mutex<Vec<Option<Result<AdversarialExample<f32>, AttackError>>>> =
        Mutex::new((0..images.len()).map(|_| None).collect());
    let next = std::sync::atomic::AtomicUsize::new(0);

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let ix = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if ix >= images.len() {
                    break;
                }
                let result = run_attack(model, &images[ix], config);
                slots.lock().unwrap()[ix] = Some(result);
            });
        }
    });

    slots
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|slot| slot.expect("every slot filled"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use fda_core::attacks::{AttackBudget, AttackMethod};
    use fda_core::models::{build_model, Architecture, LayerSpec};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn parallel_results_match_sequential() {
        let arch = Architecture {
            layers: vec![
                LayerSpec::Conv {
                    kh: 3,
                    kw: 3,
                    out_channels: 3,
                    stride: 1,
                    padding: 0,
                },
                LayerSpec::Relu,
                LayerSpec::Flatten,
                LayerSpec::Dense { out_units: 4 },
            ],
            input_shape: (6, 6, 1),
            num_classes: 4,
        };
        let model = build_model::<f32>(arch, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let images: Vec<Tensor<f32>> = (0..9)
            .map(|_| Tensor::from_fn(vec![6, 6, 1], |_| rng.random::<f32>()))
            .collect();
        let config = AttackConfig::new(AttackMethod::Fda, AttackBudget::new(8.0, 4, 2.0));

        let seq = attack_all(&model, &images, &config, 1).unwrap();
        let par = attack_all(&model, &images, &config, 4).unwrap();
        assert_eq!(seq.len(), par.len());
        for (a, b) in seq.iter().zip(&par) {
            assert_eq!(a.adv.data(), b.adv.data());
            assert_eq!(a.objective_trajectory, b.objective_trajectory);
        }
    }
}
