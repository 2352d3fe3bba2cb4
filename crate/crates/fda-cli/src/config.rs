//! Experiment configuration: an optional JSON config file whose fields are
//! overridden by command-line flags (flag wins, then file, then default).

use std::path::{Path, PathBuf};

use anyhow::Context;
use fda_core::attacks::{AttackBudget, AttackConfig, AttackMethod, CentralTendency};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub model: Option<String>,
    pub dataset: Option<String>,
    pub data_dir: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub train: Option<TrainSection>,
    pub attack: Option<AttackSection>,
    pub eval: Option<EvalSection>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub arch: Option<String>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr: Option<f64>,
    pub momentum: Option<f64>,
    pub adversarial: Option<bool>,
    pub train_limit: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSection {
    pub method: Option<String>,
    pub eps: Option<f64>,
    pub nb_iter: Option<usize>,
    pub eps_iter: Option<f64>,
    pub central_tendency: Option<String>,
    pub hook_subset: Option<Vec<usize>>,
    pub include_flat_layers: Option<bool>,
    pub normalize_by_count: Option<bool>,
    pub recompute_mask_each_iter: Option<bool>,
    pub n_images: Option<usize>,
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub k_max: Option<usize>,
    pub transfer_models: Option<Vec<PathBuf>>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        match path {
            None => Ok(FileConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                serde_json::from_str(&text)
                    .with_context(|| format!("parsing config {}", p.display()))
            }
        }
    }

    pub fn train(&self) -> TrainSection {
        self.train.clone().unwrap_or_default()
    }

    pub fn attack(&self) -> AttackSection {
        self.attack.clone().unwrap_or_default()
    }

    pub fn eval(&self) -> EvalSection {
        self.eval.clone().unwrap_or_default()
    }
}

/// flag > config file > default.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

pub fn pick_required<T>(flag: Option<T>, file: Option<T>, what: &str) -> anyhow::Result<T> {
    flag.or(file)
        .with_context(|| format!("{what} is required (flag or config file)"))
}

/// The (ε, nb_iter, ε_iter) tuple plus method-specific knobs, resolved into
/// a core attack configuration. Budgets are in 0-255 pixel units here; the
/// division by 255 happens inside the attack.
#[allow(clippy::too_many_arguments)]
pub fn resolve_attack_config(
    method: Option<String>,
    eps: Option<f64>,
    nb_iter: Option<usize>,
    eps_iter: Option<f64>,
    central_tendency: Option<String>,
    seed: u64,
    section: &AttackSection,
) -> anyhow::Result<AttackConfig> {
    let method_name = pick_required(method, section.method.clone(), "--method")?;
    let method = AttackMethod::parse(&method_name)
        .with_context(|| format!("unknown method '{method_name}' (fda, pgd-ml, pgd-ll, pgd-cw)"))?;
    let budget = AttackBudget::new(
        pick(eps, section.eps, 8.0),
        pick(nb_iter, section.nb_iter, 10),
        pick(eps_iter, section.eps_iter, 1.0),
    );
    anyhow::ensure!(budget.epsilon >= 0.0, "--eps must be >= 0");
    anyhow::ensure!(budget.nb_iter >= 1, "--nb-iter must be >= 1");
    anyhow::ensure!(budget.eps_iter > 0.0, "--eps-iter must be > 0");
    let tendency_name = pick(
        central_tendency,
        section.central_tendency.clone(),
        "mean".to_string(),
    );
    let central_tendency = CentralTendency::parse(&tendency_name)
        .with_context(|| format!("unknown central tendency '{tendency_name}' (mean, median, iqm)"))?;
    let mut config = AttackConfig::new(method, budget);
    config.central_tendency = central_tendency;
    config.hook_subset = section.hook_subset.clone();
    config.include_flat_layers = section.include_flat_layers.unwrap_or(true);
    config.normalize_by_count = section.normalize_by_count.unwrap_or(false);
    config.recompute_mask_each_iter = section.recompute_mask_each_iter.unwrap_or(false);
    config.seed = seed;
    Ok(config)
}

/// Budget echo used across summary/report files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetEcho {
    pub epsilon: f64,
    pub nb_iter: usize,
    pub eps_iter: f64,
}

impl From<AttackBudget> for BudgetEcho {
    fn from(b: AttackBudget) -> Self {
        BudgetEcho {
            epsilon: b.epsilon,
            nb_iter: b.nb_iter,
            eps_iter: b.eps_iter,
        }
    }
}
