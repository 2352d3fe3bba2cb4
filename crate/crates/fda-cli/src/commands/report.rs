//! `fda report`: merge evaluated runs that share one optimization budget
//! into a comparison table and per-method FR@k curve files.

use std::path::PathBuf;

use anyhow::Context;
use clap::Args;

use crate::commands::eval::{load_report, EvalReport};
use crate::csvio::CsvWriter;

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory whose immediate subdirectories are evaluated attack runs.
    pub dir: PathBuf,
    /// Output directory (defaults to <dir>/comparison).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: ReportArgs) -> anyhow::Result<()> {
    let mut runs: Vec<(String, EvalReport)> = Vec::new();
    let mut entries: Vec<_> = std::fs::read_dir(&args.dir)
        .with_context(|| format!("listing {}", args.dir.display()))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir() && p.join("report.json").exists())
        .collect();
    entries.sort();
    for path in entries {
        let report = load_report(&path)?;
        runs.push((path.display().to_string(), report));
    }
    anyhow::ensure!(!runs.is_empty(), "no evaluated runs under {}", args.dir.display());

    // Attacks are only comparable at one optimization budget.
    let budget = runs[0].1.budget;
    for (name, report) in &runs[1..] {
        anyhow::ensure!(
            report.budget == budget,
            "refusing to merge runs with different budgets: {} has (ε={}, nb_iter={}, ε_iter={}), {} has (ε={}, nb_iter={}, ε_iter={})",
            runs[0].0,
            budget.epsilon,
            budget.nb_iter,
            budget.eps_iter,
            name,
            report.budget.epsilon,
            report.budget.nb_iter,
            report.budget.eps_iter,
        );
    }

    let out = args.out.unwrap_or_else(|| args.dir.join("comparison"));
    std::fs::create_dir_all(&out)?;

    let mut table = CsvWriter::new(
        "comparison",
        &["method", "fooling_rate", "n_fooled", "mean_olnr", "mean_nlor"],
    );
    let fmt_opt = |v: Option<f64>| v.map(super::fmt_f64).unwrap_or_default();
    for (_, report) in &runs {
        table.row(&[
            report.method.clone(),
            super::fmt_f64(report.metrics.fooling_rate),
            report.metrics.n_fooled.to_string(),
            fmt_opt(report.metrics.mean_olnr),
            fmt_opt(report.metrics.mean_nlor),
        ]);
    }
    table.write_to(&out.join("comparison.csv"))?;

    // One gnuplot-ready curve file per method.
    for (_, report) in &runs {
        let mut curve = String::from("# k fooling_rate_at_k\n");
        for &(k, fr) in &report.fr_at_k {
            curve.push_str(&format!("{k} {fr}\n"));
        }
        std::fs::write(out.join(format!("fr_at_k_{}.dat", report.method)), curve)?;
    }

    println!(
        "merged {} runs at budget (ε={}, nb_iter={}, ε_iter={}) into {}",
        runs.len(),
        budget.epsilon,
        budget.nb_iter,
        budget.eps_iter,
        out.display()
    );
    Ok(())
}
