//! `fda eval`: recompute the full metric set for an attack run from its
//! adversary archive, optionally re-evaluating the stored adversaries under
//! other checkpoints (black-box transfer).

use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use fda_core::metrics::{self, LayerSimilarity, PredictionPair};
use fda_core::models::Model;
use fda_core::tensor::kernels::softmax;
use serde::{Deserialize, Serialize};

use crate::commands::attack::{read_adversaries, AttackSummary};
use crate::config::{pick, BudgetEcho, FileConfig};
use crate::csvio::CsvWriter;

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Attack run directory (holding summary.json and adversaries.bin).
    #[arg(long)]
    pub run: PathBuf,
    /// Checkpoint the run was produced against.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Largest k in the fooling-rate-at-k sweep (defaults to the class count).
    #[arg(long)]
    pub k_max: Option<usize>,
    /// Re-evaluate the stored adversaries under these checkpoints.
    #[arg(long, value_delimiter = ',')]
    pub transfer_models: Vec<PathBuf>,
    /// Output directory (defaults to the run directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsEcho {
    pub fooling_rate: f64,
    pub n_fooled: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_olnr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_nlor: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TransferEcho {
    pub model: String,
    #[serde(flatten)]
    pub metrics: MetricsEcho,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EvalReport {
    pub version: u32,
    pub method: String,
    pub budget: BudgetEcho,
    pub seed: u64,
    pub n_images: usize,
    pub metrics: MetricsEcho,
    pub fr_at_k: Vec<(usize, f64)>,
    pub feature_similarity: Vec<LayerSimilarity2>,
    pub transfer: Vec<TransferEcho>,
}

/// Serializable twin of the core LayerSimilarity.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LayerSimilarity2 {
    pub layer_id: usize,
    pub cosine: f64,
    pub normalized_l2: f64,
}

impl From<LayerSimilarity> for LayerSimilarity2 {
    fn from(s: LayerSimilarity) -> Self {
        LayerSimilarity2 {
            layer_id: s.layer_id,
            cosine: s.cosine,
            normalized_l2: s.normalized_l2,
        }
    }
}

fn probs_of(model: &Model<f32>, image: &fda_core::tensor::Tensor<f32>) -> anyhow::Result<Vec<f64>> {
    let (logits, _) = model.forward(image)?;
    let scores: Vec<f64> = logits.data().iter().map(|&v| v as f64).collect();
    Ok(softmax(&scores))
}

pub fn run(args: EvalArgs) -> anyhow::Result<()> {
    let file = FileConfig::load(args.config.as_deref())?;
    let eval_section = file.eval();

    let summary_text = std::fs::read_to_string(args.run.join("summary.json"))
        .with_context(|| format!("reading {}/summary.json", args.run.display()))?;
    let summary: AttackSummary = serde_json::from_str(&summary_text)?;

    let model_path = pick(
        args.model,
        file.model.clone().map(PathBuf::from),
        PathBuf::from(&summary.model),
    );
    let dataset_name = pick(args.dataset, file.dataset.clone(), summary.dataset.clone());
    let data_dir = crate::config::pick_required(args.data_dir, file.data_dir.clone(), "--data-dir")?;
    let out = args.out.unwrap_or_else(|| args.run.clone());
    std::fs::create_dir_all(&out)?;

    let kind = super::parse_dataset_kind(&dataset_name)?;
    let model = super::load_model(&model_path)?;
    let pair = crate::dataset::load(kind, &data_dir)?;
    let adversaries = read_adversaries(&args.run.join("adversaries.bin"))?;
    anyhow::ensure!(!adversaries.is_empty(), "adversary archive is empty");
    let k_max = pick(args.k_max, eval_section.k_max, model.num_classes())
        .clamp(1, model.num_classes());

    // White-box pass: prediction pairs plus per-image feature similarity.
    let mut pairs = Vec::with_capacity(adversaries.len());
    let mut similarity_rows = Vec::with_capacity(adversaries.len());
    for adv in &adversaries {
        let clean = &pair.test.images[adv.test_index];
        let (clean_logits, clean_trace) = model.forward(clean)?;
        let (adv_logits, adv_trace) = model.forward(&adv.adv)?;
        let to_probs = |logits: &fda_core::tensor::Tensor<f32>| {
            softmax(&logits.data().iter().map(|&v| v as f64).collect::<Vec<_>>())
        };
        pairs.push(PredictionPair::new(
            to_probs(&clean_logits),
            to_probs(&adv_logits),
        ));
        similarity_rows.push(metrics::feature_similarity(&clean_trace, &adv_trace)?);
    }
    let report = metrics::aggregate(&pairs, Some(&similarity_rows))?;

    // Transfer passes: stored adversaries against other checkpoints.
    let transfer_paths: Vec<PathBuf> = if args.transfer_models.is_empty() {
        eval_section.transfer_models.clone().unwrap_or_default()
    } else {
        args.transfer_models.clone()
    };
    let mut transfer = Vec::new();
    for path in &transfer_paths {
        let target = super::load_model(path)?;
        let mut t_pairs = Vec::with_capacity(adversaries.len());
        for adv in &adversaries {
            let clean = &pair.test.images[adv.test_index];
            t_pairs.push(PredictionPair::new(
                probs_of(&target, clean)?,
                probs_of(&target, &adv.adv)?,
            ));
        }
        let t_report = metrics::aggregate(&t_pairs, None)?;
        transfer.push(TransferEcho {
            model: path.display().to_string(),
            metrics: MetricsEcho {
                fooling_rate: t_report.fooling_rate,
                n_fooled: t_report.n_fooled,
                mean_olnr: t_report.mean_olnr,
                mean_nlor: t_report.mean_nlor,
            },
        });
    }

    // fr_at_k curve data for plot tooling.
    let mut fr_csv = CsvWriter::new("fr_at_k", &["k", "fooling_rate_at_k"]);
    let fr_at_k: Vec<(usize, f64)> = report.fr_at_k.iter().copied().take(k_max).collect();
    for &(k, fr) in &fr_at_k {
        fr_csv.row(&[k.to_string(), super::fmt_f64(fr)]);
    }
    fr_csv.write_to(&out.join("fr_at_k.csv"))?;

    // Per-layer feature similarity.
    let sims: Vec<LayerSimilarity2> = report
        .feature_similarity
        .clone()
        .unwrap_or_default()
        .into_iter()
        .map(Into::into)
        .collect();
    let mut sim_csv = CsvWriter::new(
        "feature_similarity",
        &["layer_id", "cosine_mean", "normalized_l2_mean"],
    );
    for s in &sims {
        sim_csv.row(&[
            s.layer_id.to_string(),
            super::fmt_f64(s.cosine),
            super::fmt_f64(s.normalized_l2),
        ]);
    }
    sim_csv.write_to(&out.join("feature_similarity.csv"))?;

    let eval_report = EvalReport {
        version: 1,
        method: summary.method.clone(),
        budget: summary.budget,
        seed: summary.seed,
        n_images: adversaries.len(),
        metrics: MetricsEcho {
            fooling_rate: report.fooling_rate,
            n_fooled: report.n_fooled,
            mean_olnr: report.mean_olnr,
            mean_nlor: report.mean_nlor,
        },
        fr_at_k,
        feature_similarity: sims,
        transfer,
    };
    std::fs::write(
        out.join("report.json"),
        serde_json::to_string_pretty(&eval_report)?,
    )?;
    println!(
        "{}: fooling rate {:.2}%, mean OLNR {:?}, mean NLOR {:?}; wrote report.json, fr_at_k.csv, feature_similarity.csv to {}",
        eval_report.method,
        eval_report.metrics.fooling_rate,
        eval_report.metrics.mean_olnr,
        eval_report.metrics.mean_nlor,
        out.display()
    );
    Ok(())
}

pub fn load_report(run: &Path) -> anyhow::Result<EvalReport> {
    let text = std::fs::read_to_string(run.join("report.json"))
        .with_context(|| format!("reading {}/report.json (run `fda eval` first)", run.display()))?;
    Ok(serde_json::from_str(&text)?)
}
