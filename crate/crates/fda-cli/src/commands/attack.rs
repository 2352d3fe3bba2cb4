//! `fda attack`: run one attack over the seed-pinned evaluation subset and
//! persist per-image rows, a summary, and the adversary archive.

use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use fda_core::attacks::AdversarialExample;
use fda_core::metrics::{self, PredictionPair};
use serde::{Deserialize, Serialize};

use crate::config::{pick, pick_required, resolve_attack_config, BudgetEcho, FileConfig};
use crate::csvio::CsvWriter;
use crate::workers;

pub const ADV_MAGIC: &[u8; 8] = b"FDAADV1\0";

#[derive(Debug, Args)]
pub struct AttackArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Checkpoint to attack.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// fda, pgd-ml, pgd-ll, or pgd-cw.
    #[arg(long)]
    pub method: Option<String>,
    /// L∞ limit in 0-255 pixel units.
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub nb_iter: Option<usize>,
    /// Per-iteration step in 0-255 pixel units.
    #[arg(long)]
    pub eps_iter: Option<f64>,
    /// mean, median, or iqm (fda only).
    #[arg(long)]
    pub central_tendency: Option<String>,
    #[arg(long)]
    pub n_images: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Quick-look aggregates echoed into summary.json.
#[derive(Debug, Serialize, Deserialize)]
pub struct AttackSummary {
    pub version: u32,
    pub method: String,
    pub budget: BudgetEcho,
    pub central_tendency: String,
    pub seed: u64,
    pub n_images: usize,
    pub model: String,
    pub dataset: String,
    pub fooling_rate: f64,
    pub n_fooled: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_olnr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_nlor: Option<f64>,
    /// Images for which at least one FDA layer had an empty support or
    /// non-support side.
    pub degenerate_layer_images: usize,
}

pub fn run(args: AttackArgs) -> anyhow::Result<()> {
    let file = FileConfig::load(args.config.as_deref())?;
    let section = file.attack();

    let model_path = pick_required(
        args.model,
        file.model.clone().map(PathBuf::from),
        "--model",
    )?;
    let dataset_name = pick_required(args.dataset, file.dataset.clone(), "--dataset")?;
    let data_dir = pick_required(args.data_dir, file.data_dir.clone(), "--data-dir")?;
    let out = pick_required(args.out, file.out.clone(), "--out")?;
    let seed = pick(args.seed, file.seed, 7);
    let n_images = pick(args.n_images, section.n_images, 512);
    let n_workers = pick(args.workers, section.workers, 1);
    let attack_config = resolve_attack_config(
        args.method,
        args.eps,
        args.nb_iter,
        args.eps_iter,
        args.central_tendency,
        seed,
        &section,
    )?;

    let kind = super::parse_dataset_kind(&dataset_name)?;
    let model = super::load_model(&model_path)?;
    let pair = crate::dataset::load(kind, &data_dir)?;
    let indices = super::evaluation_subset(pair.test.len(), n_images, seed);
    let subset = super::take_subset(&pair.test, &indices);

    println!(
        "attacking {} images with {} at budget (ε={}, nb_iter={}, ε_iter={}), {} workers",
        indices.len(),
        attack_config.method.name(),
        attack_config.budget.epsilon,
        attack_config.budget.nb_iter,
        attack_config.budget.eps_iter,
        n_workers
    );
    let examples = workers::attack_all(&model, &subset.images, &attack_config, n_workers)?;

    let eps_image = (attack_config.budget.epsilon_image() + 1e-6) as f32;
    let mut csv = CsvWriter::new(
        "results",
        &[
            "image_index",
            "clean_label",
            "clean_pred",
            "adv_pred",
            "fooled",
            "olnr",
            "nlor",
            "linf_attained",
            "objective_initial",
            "objective_final",
        ],
    );
    let mut pairs = Vec::with_capacity(examples.len());
    let mut degenerate = 0usize;
    for ((&test_index, example), &label) in indices.iter().zip(&examples).zip(&subset.labels) {
        let linf = example.adv.linf_distance(&example.clean);
        // The budget constraint is a hard guarantee of the attack loop.
        assert!(
            linf <= eps_image,
            "budget violation: image {test_index} attained {linf} > {eps_image}",
        );
        let pair = PredictionPair::new(example.clean_probs.clone(), example.adv_probs.clone());
        let fooled = pair.is_fooled();
        let (olnr, nlor) = if fooled {
            (
                metrics::olnr(&pair)?.to_string(),
                metrics::nlor(&pair)?.to_string(),
            )
        } else {
            (String::new(), String::new())
        };
        if !example.diagnostics.skipped_layers.is_empty() {
            degenerate += 1;
        }
        csv.row(&[
            test_index.to_string(),
            label.to_string(),
            pair.clean_pred().to_string(),
            pair.adv_pred().to_string(),
            (fooled as u8).to_string(),
            olnr,
            nlor,
            super::fmt_f32(linf),
            super::fmt_f64(*example.objective_trajectory.first().unwrap()),
            super::fmt_f64(*example.objective_trajectory.last().unwrap()),
        ]);
        pairs.push(pair);
    }

    let report = metrics::aggregate(&pairs, None)?;
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    csv.write_to(&out.join("results.csv"))?;
    write_adversaries(&out.join("adversaries.bin"), &indices, &subset.labels, &examples)?;

    let summary = AttackSummary {
        version: 1,
        method: attack_config.method.name().to_string(),
        budget: attack_config.budget.into(),
        central_tendency: attack_config.central_tendency.name().to_string(),
        seed,
        n_images: indices.len(),
        model: model_path.display().to_string(),
        dataset: dataset_name,
        fooling_rate: report.fooling_rate,
        n_fooled: report.n_fooled,
        mean_olnr: report.mean_olnr,
        mean_nlor: report.mean_nlor,
        degenerate_layer_images: degenerate,
    };
    std::fs::write(
        out.join("summary.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    println!(
        "fooling rate {:.2}% ({} of {}); wrote results.csv, adversaries.bin, summary.json to {}",
        report.fooling_rate,
        report.n_fooled,
        indices.len(),
        out.display()
    );
    Ok(())
}

/// Adversary archive: magic, count, H, W, C, then per image the test-set
/// index, the clean label, and the raw little-endian f32 pixels.
fn write_adversaries(
    path: &Path,
    indices: &[usize],
    labels: &[usize],
    examples: &[AdversarialExample<f32>],
) -> anyhow::Result<()> {
    let shape = examples
        .first()
        .map(|e| e.adv.shape().to_vec())
        .unwrap_or_else(|| vec![0, 0, 0]);
    let mut bytes = Vec::new();
    bytes.extend_from_slice(ADV_MAGIC);
    bytes.extend_from_slice(&(examples.len() as u32).to_le_bytes());
    for dim in &shape {
        bytes.extend_from_slice(&(*dim as u32).to_le_bytes());
    }
    for ((&index, &label), example) in indices.iter().zip(labels).zip(examples) {
        bytes.extend_from_slice(&(index as u32).to_le_bytes());
        bytes.extend_from_slice(&(label as u32).to_le_bytes());
        for v in example.adv.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

/// One archived adversary.
pub struct ArchivedAdversary {
    pub test_index: usize,
    pub clean_label: usize,
    pub adv: fda_core::tensor::Tensor<f32>,
}

pub fn read_adversaries(path: &Path) -> anyhow::Result<Vec<ArchivedAdversary>> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    anyhow::ensure!(
        bytes.len() >= 24 && &bytes[..8] == ADV_MAGIC,
        "{} is not an adversary archive",
        path.display()
    );
    let u32_at = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
    let count = u32_at(8);
    let (h, w, c) = (u32_at(12), u32_at(16), u32_at(20));
    let per = h * w * c;
    let record = 8 + 4 * per;
    anyhow::ensure!(
        bytes.len() == 24 + count * record,
        "{}: expected {} bytes, found {}",
        path.display(),
        24 + count * record,
        bytes.len()
    );
    let mut out = Vec::with_capacity(count);
    for rec in 0..count {
        let base = 24 + rec * record;
        let data: Vec<f32> = bytes[base + 8..base + record]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        out.push(ArchivedAdversary {
            test_index: u32_at(base),
            clean_label: u32_at(base + 4),
            adv: fda_core::tensor::Tensor::new(vec![h, w, c], data)?,
        });
    }
    Ok(out)
}
