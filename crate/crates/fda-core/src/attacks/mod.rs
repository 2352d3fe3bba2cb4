//! L∞-budgeted iterative attacks: the feature-disruptive objective plus the
//! PGD-ML / PGD-LL / PGD-CW baselines, under one shared sign-step optimizer.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::metrics::{argmax, argmin};
use crate::models::{ActivationTrace, Model, ModelError};
use crate::scalar::Scalar;
use crate::tensor::{kernels, Tape, Tensor, TensorError, VarId};

/// Stabilizer added inside each masked norm.
const NORM_DELTA: f64 = 1e-12;
/// Stabilizer added to each norm before taking its log.
const LOG_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AttackError {
    #[error("objective became non-finite at iteration {iteration}, trajectory {trajectory:?}")]
    NonFiniteObjective {
        iteration: usize,
        trajectory: Vec<f64>,
    },
    #[error("image pixel {index} = {value} lies outside [0, 1]")]
    ImageOutOfRange { index: usize, value: f64 },
    #[error("hook subset names layer {0}, which is not a hooked relu")]
    UnknownHookLayer(usize),
    #[error("support mask has no entry for hooked layer {0}")]
    MissingMaskLayer(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("tensor op failed: {0}")]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AttackMethod {
    Fda,
    PgdMl,
    PgdLl,
    PgdCw,
}

impl AttackMethod {
    pub const ALL: [AttackMethod; 4] = [
        AttackMethod::Fda,
        AttackMethod::PgdMl,
        AttackMethod::PgdLl,
        AttackMethod::PgdCw,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            AttackMethod::Fda => "fda",
            AttackMethod::PgdMl => "pgd-ml",
            AttackMethod::PgdLl => "pgd-ll",
            AttackMethod::PgdCw => "pgd-cw",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|m| m.name() == s)
    }
}

/// Which per-location statistic splits activations into support/non-support.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum CentralTendency {
    #[default]
    SpatialMean,
    Median,
    InterQuartileMean,
}

impl CentralTendency {
    pub const ALL: [CentralTendency; 3] = [
        CentralTendency::SpatialMean,
        CentralTendency::Median,
        CentralTendency::InterQuartileMean,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            CentralTendency::SpatialMean => "mean",
            CentralTendency::Median => "median",
            CentralTendency::InterQuartileMean => "iqm",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "mean" | "spatial-mean" => Some(CentralTendency::SpatialMean),
            "median" => Some(CentralTendency::Median),
            "iqm" => Some(CentralTendency::InterQuartileMean),
            _ => None,
        }
    }
}

/// (ε, nb_iter, ε_iter) in 0-255 pixel units; converted to the image domain
/// by division by 255 exactly once.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackBudget {
    pub epsilon: f64,
    pub nb_iter: usize,
    pub eps_iter: f64,
}

impl AttackBudget {
    pub const fn new(epsilon: f64, nb_iter: usize, eps_iter: f64) -> Self {
        AttackBudget {
            epsilon,
            nb_iter,
            eps_iter,
        }
    }

    pub fn epsilon_image(&self) -> f64 {
        self.epsilon / 255.0
    }

    pub fn step_image(&self) -> f64 {
        self.eps_iter / 255.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackConfig {
    pub method: AttackMethod,
    pub budget: AttackBudget,
    /// FDA only: central-tendency statistic C.
    pub central_tendency: CentralTendency,
    /// FDA only: restrict the objective to these hooked layer ids.
    pub hook_subset: Option<Vec<usize>>,
    /// FDA only: include flat (dense) activations via a scalar C.
    pub include_flat_layers: bool,
    /// FDA only: divide each masked norm by sqrt(set size).
    pub normalize_by_count: bool,
    /// FDA ablation only: rebuild the support mask from the current
    /// adversary every iteration instead of freezing the clean-image mask.
    pub recompute_mask_each_iter: bool,
    pub seed: u64,
}

impl AttackConfig {
    pub fn new(method: AttackMethod, budget: AttackBudget) -> Self {
        AttackConfig {
            method,
            budget,
            central_tendency: CentralTendency::SpatialMean,
            hook_subset: None,
            include_flat_layers: true,
            normalize_by_count: false,
            recompute_mask_each_iter: false,
            seed: 0,
        }
    }
}

/// Ternary split of one hooked layer's coordinates, computed from the clean
/// activations: support (above C), non-support (below C); coordinates equal
/// to C belong to neither.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskEntry<T> {
    pub layer_id: usize,
    pub support: Vec<bool>,
    pub nonsupport: Vec<bool>,
    pub c_values: Tensor<T>,
}

impl<T> MaskEntry<T> {
    pub fn support_count(&self) -> usize {
        self.support.iter().filter(|&&b| b).count()
    }

    pub fn nonsupport_count(&self) -> usize {
        self.nonsupport.iter().filter(|&&b| b).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupportMask<T> {
    pub layers: Vec<MaskEntry<T>>,
}

impl<T> SupportMask<T> {
    pub fn entry(&self, layer_id: usize) -> Option<&MaskEntry<T>> {
        self.layers.iter().find(|e| e.layer_id == layer_id)
    }
}

/// Per-location central tendency across channels: H x W x C maps yield an
/// H x W tensor; flat activations collapse to a single scalar over all units.
pub fn central_tendency<T: Scalar>(activation: &Tensor<T>, mode: CentralTendency) -> Tensor<T> {
    let data = activation.data();
    match *activation.shape() {
        [h, w, c] => {
            let mut scratch = vec![T::zero(); c];
            Tensor::from_fn(vec![h, w], |loc| {
                scratch.copy_from_slice(&data[loc * c..(loc + 1) * c]);
                tendency_of(&mut scratch, mode)
            })
        }
        _ => {
            let mut scratch = data.to_vec();
            Tensor::scalar(tendency_of(&mut scratch, mode))
        }
    }
}

/// Statistic over one channel slice. The scratch buffer is sorted in place
/// for the order-based modes. Median of an even count takes the lower of the
/// two middles; the inter-quartile mean trims floor(n/4) values at each end.
fn tendency_of<T: Scalar>(scratch: &mut [T], mode: CentralTendency) -> T {
    let n = scratch.len();
    debug_assert!(n > 0);
    let mean_of = |vals: &[T]| {
        let sum = vals.iter().fold(T::zero(), |acc, &v| acc + v);
        sum / T::from_usize(vals.len())
    };
    match mode {
        CentralTendency::SpatialMean => mean_of(scratch),
        CentralTendency::Median => {
            scratch.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite activations"));
            scratch[(n - 1) / 2]
        }
        CentralTendency::InterQuartileMean => {
            scratch.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite activations"));
            let trim = n / 4;
            mean_of(&scratch[trim..n - trim])
        }
    }
}

/// Builds the per-layer support split from a clean-image activation trace.
/// The mask is a function of the clean image only; the attack computes it
/// once and reuses it across iterations.
pub fn support_mask<T: Scalar>(
    clean_trace: &ActivationTrace<T>,
    mode: CentralTendency,
) -> SupportMask<T> {
    let layers = clean_trace
        .entries
        .iter()
        .map(|entry| {
            let act = &entry.activation;
            let c_values = central_tendency(act, mode);
            let per_location = act.len() / c_values.len();
            let data = act.data();
            let cs = c_values.data();
            let mut support = vec![false; act.len()];
            let mut nonsupport = vec![false; act.len()];
            for (i, &v) in data.iter().enumerate() {
                let c = cs[i / per_location];
                if v > c {
                    support[i] = true;
                } else if v < c {
                    nonsupport[i] = true;
                }
            }
            MaskEntry {
                layer_id: entry.layer_id,
                support,
                nonsupport,
                c_values,
            }
        })
        .collect();
    SupportMask { layers }
}

fn count_scale<T: Scalar>(count: usize) -> T {
    T::one() / T::from_usize(count).sqrt()
}

/// Tape-recorded layer objective log D(non-support of x̃) - log D(support
/// of x̃). Returns `None` when either side is empty (the layer contributes
/// nothing and is surfaced in diagnostics).
pub fn fda_layer_objective<T: Scalar>(
    tape: &mut Tape<T>,
    adv_activation: VarId,
    entry: &MaskEntry<T>,
    normalize_by_count: bool,
) -> Result<Option<VarId>, TensorError> {
    let (ns, s) = (entry.nonsupport_count(), entry.support_count());
    if ns == 0 || s == 0 {
        return Ok(None);
    }
    let delta = T::from_f64(NORM_DELTA);
    let eps = T::from_f64(LOG_EPS);
    let mut side = |mask: &[bool], count: usize| -> Result<VarId, TensorError> {
        let mut norm = tape.masked_l2_norm(adv_activation, mask, delta)?;
        if normalize_by_count {
            norm = tape.scale(norm, count_scale(count))?;
        }
        let stabilized = tape.add_scalar(norm, eps)?;
        tape.log(stabilized)
    };
    let log_ns = side(&entry.nonsupport, ns)?;
    let log_s = side(&entry.support, s)?;
    Ok(Some(tape.sub(log_ns, log_s)?))
}

/// Untaped twin of [`fda_layer_objective`]; the arithmetic mirrors the tape
/// ops step for step so both routes agree bit-exactly.
pub fn fda_layer_objective_value<T: Scalar>(
    adv_activation: &Tensor<T>,
    entry: &MaskEntry<T>,
    normalize_by_count: bool,
) -> Option<T> {
    let (ns, s) = (entry.nonsupport_count(), entry.support_count());
    if ns == 0 || s == 0 {
        return None;
    }
    let delta = T::from_f64(NORM_DELTA);
    let eps = T::from_f64(LOG_EPS);
    let side = |mask: &[bool], count: usize| -> T {
        let mut norm = kernels::masked_l2_norm_forward(adv_activation.data(), mask, delta);
        if normalize_by_count {
            norm = norm * count_scale::<T>(count);
        }
        (norm + eps).ln()
    };
    Some(side(&entry.nonsupport, ns) - side(&entry.support, s))
}

/// FDA layer filter: the hook subset plus the flat-layer switch.
fn fda_selects<T: Scalar>(model: &Model<T>, config: &AttackConfig, layer_id: usize) -> bool {
    if let Some(subset) = &config.hook_subset {
        if !subset.contains(&layer_id) {
            return false;
        }
    }
    config.include_flat_layers || model.layer_shape(layer_id).dims().len() == 3
}

/// Eq.-4 objective: minus the sum of per-layer objectives over the selected
/// hooked layers of a taped forward pass. Also returns the ids of layers
/// skipped for having an empty support or non-support side.
pub fn fda_objective<T: Scalar>(
    model: &Model<T>,
    tape: &mut Tape<T>,
    x_adv: VarId,
    mask: &SupportMask<T>,
    config: &AttackConfig,
) -> Result<(VarId, Vec<usize>), AttackError> {
    let fwd = model.forward_on_tape(tape, x_adv)?;
    let mut acc: Option<VarId> = None;
    let mut skipped = Vec::new();
    for (layer_id, act) in &fwd.trace {
        if !fda_selects(model, config, *layer_id) {
            continue;
        }
        let entry = mask
            .entry(*layer_id)
            .ok_or(AttackError::MissingMaskLayer(*layer_id))?;
        match fda_layer_objective(tape, *act, entry, config.normalize_by_count)? {
            Some(layer_obj) => {
                acc = Some(match acc {
                    None => layer_obj,
                    Some(sum) => tape.add(sum, layer_obj)?,
                });
            }
            None => skipped.push(*layer_id),
        }
    }
    let objective = match acc {
        Some(sum) => tape.neg(sum)?,
        // Every layer degenerate: a constant zero objective (no gradient).
        None => tape.constant(&Tensor::scalar(T::zero())),
    };
    Ok((objective, skipped))
}

/// -cross_entropy(logits(x̃), clean prediction): descending maximizes the
/// loss of the most-likely label.
pub fn pgd_ml_objective<T: Scalar>(
    model: &Model<T>,
    tape: &mut Tape<T>,
    x_adv: VarId,
    y_clean_pred: usize,
) -> Result<VarId, AttackError> {
    let fwd = model.forward_on_tape(tape, x_adv)?;
    let ce = tape.softmax_cross_entropy(fwd.logits, y_clean_pred)?;
    Ok(tape.neg(ce)?)
}

/// cross_entropy(logits(x̃), least-likely class): descending drives the
/// least-likely class up.
pub fn pgd_ll_objective<T: Scalar>(
    model: &Model<T>,
    tape: &mut Tape<T>,
    x_adv: VarId,
    y_least_likely: usize,
) -> Result<VarId, AttackError> {
    let fwd = model.forward_on_tape(tape, x_adv)?;
    Ok(tape.softmax_cross_entropy(fwd.logits, y_least_likely)?)
}

/// Carlini-Wagner margin Z[y] - max_{j != y} Z[j]; negative means the clean
/// prediction has been displaced. The runner-up is re-resolved from the
/// current logits each call.
pub fn cw_objective<T: Scalar>(
    model: &Model<T>,
    tape: &mut Tape<T>,
    x_adv: VarId,
    y_clean_pred: usize,
) -> Result<VarId, AttackError> {
    let fwd = model.forward_on_tape(tape, x_adv)?;
    let logits = tape.value(fwd.logits);
    let classes = logits.len();
    let mut runner = usize::MAX;
    for j in 0..classes {
        if j == y_clean_pred {
            continue;
        }
        if runner == usize::MAX || logits.data()[j] > logits.data()[runner] {
            runner = j;
        }
    }
    let one_hot = |idx: usize| {
        Tensor::from_fn(vec![classes], |i| if i == idx { T::one() } else { T::zero() })
    };
    let ey = tape.constant(&one_hot(y_clean_pred));
    let er = tape.constant(&one_hot(runner));
    let picked_y = tape.mul(fwd.logits, ey)?;
    let picked_r = tape.mul(fwd.logits, er)?;
    let zy = tape.sum(picked_y)?;
    let zr = tape.sum(picked_r)?;
    Ok(tape.sub(zy, zr)?)
}

/// Coordinate-wise projection onto the ε-ball around `x_clean` intersected
/// with the [0, 1] pixel box.
pub fn project_linf<T: Scalar>(x_adv: &Tensor<T>, x_clean: &Tensor<T>, eps: T) -> Tensor<T> {
    debug_assert_eq!(x_adv.shape(), x_clean.shape());
    let data = x_adv
        .data()
        .iter()
        .zip(x_clean.data())
        .map(|(&v, &c)| {
            v.max(c - eps)
                .min(c + eps)
                .max(T::zero())
                .min(T::one())
        })
        .collect();
    Tensor::new(x_adv.shape().to_vec(), data).unwrap()
}

/// The produced adversary plus everything the evaluation needs about it.
#[derive(Debug, Clone)]
pub struct AdversarialExample<T> {
    pub clean: Tensor<T>,
    pub adv: Tensor<T>,
    pub clean_probs: Vec<f64>,
    pub adv_probs: Vec<f64>,
    /// Objective value before each step, plus the value at the final iterate
    /// (length nb_iter + 1).
    pub objective_trajectory: Vec<f64>,
    pub diagnostics: AttackDiagnostics,
}

/// Degenerate events observed while attacking (currently: FDA layers whose
/// support or non-support side was empty and therefore contributed nothing).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AttackDiagnostics {
    pub skipped_layers: Vec<usize>,
}

/// Method-specific state resolved once from the clean image.
enum MethodState<T> {
    Fda { mask: SupportMask<T> },
    PgdMl { y_pred: usize },
    PgdLl { y_least_likely: usize },
    PgdCw { y_pred: usize },
}

/// Runs the configured attack: x̃₀ = x (no random start), then nb_iter
/// steps of x̃ ← Π(x̃ − (ε_iter/255)·sign(∇ objective)) in the ε-ball.
/// Deterministic: identical (model, image, config) give an identical
/// adversary.
pub fn run_attack<T: Scalar>(
    model: &Model<T>,
    image: &Tensor<T>,
    config: &AttackConfig,
) -> Result<AdversarialExample<T>, AttackError> {
    if let Some((index, &value)) = image
        .data()
        .iter()
        .enumerate()
        .find(|(_, &v)| v < T::zero() || v > T::one())
    {
        return Err(AttackError::ImageOutOfRange {
            index,
            value: value.as_f64(),
        });
    }
    if let Some(subset) = &config.hook_subset {
        for id in subset {
            if !model.hook_layer_ids().contains(id) {
                return Err(AttackError::UnknownHookLayer(*id));
            }
        }
    }

    let (clean_logits, clean_trace) = model.forward(image)?;
    let clean_scores: Vec<f64> = clean_logits.data().iter().map(|v| v.as_f64()).collect();
    let clean_probs = kernels::softmax(&clean_scores);

    let mut state = match config.method {
        AttackMethod::Fda => MethodState::Fda {
            mask: support_mask(&clean_trace, config.central_tendency),
        },
        AttackMethod::PgdMl => MethodState::PgdMl {
            y_pred: argmax(&clean_probs),
        },
        AttackMethod::PgdLl => MethodState::PgdLl {
            y_least_likely: argmin(&clean_probs),
        },
        AttackMethod::PgdCw => MethodState::PgdCw {
            y_pred: argmax(&clean_probs),
        },
    };

    let eps = T::from_f64(config.budget.epsilon_image());
    let step = T::from_f64(config.budget.step_image());
    let mut adv = image.clone();
    let mut trajectory = Vec::with_capacity(config.budget.nb_iter + 1);
    let mut diagnostics = AttackDiagnostics::default();

    for iteration in 0..config.budget.nb_iter {
        if config.recompute_mask_each_iter && iteration > 0 {
            if let MethodState::Fda { mask } = &mut state {
                let (_, trace) = model.forward(&adv)?;
                *mask = support_mask(&trace, config.central_tendency);
            }
        }

        let mut tape = Tape::new();
        let x = tape.leaf(&adv);
        let objective = build_objective(model, &mut tape, x, &state, config, &mut diagnostics)?;
        let value = tape.value(objective).item().as_f64();
        if !value.is_finite() {
            return Err(AttackError::NonFiniteObjective {
                iteration,
                trajectory,
            });
        }
        trajectory.push(value);

        tape.backward(objective)?;
        if let Some(grad) = tape.grad(x) {
            for ((a, &c), &g) in adv
                .data_mut()
                .iter_mut()
                .zip(image.data())
                .zip(grad.data())
            {
                let sgn = if g > T::zero() {
                    T::one()
                } else if g < T::zero() {
                    -T::one()
                } else {
                    T::zero()
                };
                let moved = *a - step * sgn;
                *a = moved
                    .max(c - eps)
                    .min(c + eps)
                    .max(T::zero())
                    .min(T::one());
            }
        }
    }

    let (adv_logits, adv_trace) = model.forward(&adv)?;
    trajectory.push(objective_value(
        model,
        &adv_logits,
        &adv_trace,
        &state,
        config,
    ));
    let adv_scores: Vec<f64> = adv_logits.data().iter().map(|v| v.as_f64()).collect();
    let adv_probs = kernels::softmax(&adv_scores);

    Ok(AdversarialExample {
        clean: image.clone(),
        adv,
        clean_probs,
        adv_probs,
        objective_trajectory: trajectory,
        diagnostics,
    })
}

fn build_objective<T: Scalar>(
    model: &Model<T>,
    tape: &mut Tape<T>,
    x: VarId,
    state: &MethodState<T>,
    config: &AttackConfig,
    diagnostics: &mut AttackDiagnostics,
) -> Result<VarId, AttackError> {
    match state {
        MethodState::Fda { mask } => {
            let (objective, skipped) = fda_objective(model, tape, x, mask, config)?;
            for layer in skipped {
                if !diagnostics.skipped_layers.contains(&layer) {
                    diagnostics.skipped_layers.push(layer);
                }
            }
            Ok(objective)
        }
        MethodState::PgdMl { y_pred } => pgd_ml_objective(model, tape, x, *y_pred),
        MethodState::PgdLl { y_least_likely } => pgd_ll_objective(model, tape, x, *y_least_likely),
        MethodState::PgdCw { y_pred } => cw_objective(model, tape, x, *y_pred),
    }
}

/// Objective value at a finished iterate, computed from an untaped forward
/// pass. Matches the taped objective bit-for-bit (shared kernels, same
/// operation order).
fn objective_value<T: Scalar>(
    model: &Model<T>,
    logits: &Tensor<T>,
    trace: &ActivationTrace<T>,
    state: &MethodState<T>,
    config: &AttackConfig,
) -> f64 {
    match state {
        MethodState::Fda { mask } => {
            let mut acc: Option<T> = None;
            for entry in &trace.entries {
                if !fda_selects(model, config, entry.layer_id) {
                    continue;
                }
                let Some(mask_entry) = mask.entry(entry.layer_id) else {
                    continue;
                };
                if let Some(v) = fda_layer_objective_value(
                    &entry.activation,
                    mask_entry,
                    config.normalize_by_count,
                ) {
                    acc = Some(match acc {
                        None => v,
                        Some(sum) => sum + v,
                    });
                }
            }
            acc.map(|v| -v).unwrap_or_else(T::zero).as_f64()
        }
        MethodState::PgdMl { y_pred } => {
            let (loss, _) = kernels::softmax_cross_entropy_forward(logits.data(), *y_pred);
            (-loss).as_f64()
        }
        MethodState::PgdLl { y_least_likely } => {
            let (loss, _) = kernels::softmax_cross_entropy_forward(logits.data(), *y_least_likely);
            loss.as_f64()
        }
        MethodState::PgdCw { y_pred } => {
            let z = logits.data();
            let mut runner = usize::MAX;
            for j in 0..z.len() {
                if j == *y_pred {
                    continue;
                }
                if runner == usize::MAX || z[j] > z[runner] {
                    runner = j;
                }
            }
            (z[*y_pred] - z[runner]).as_f64()
        }
    }
}
