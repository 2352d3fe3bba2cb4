use clap::{Parser, Subcommand};
use fda_cli::commands::{attack, datagen, eval, report, train};

/// Feature-disruptive and PGD adversarial attacks on small CNNs: training,
/// attack generation, and robustness metrics.
#[derive(Parser)]
#[command(name = "fda", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a reference classifier and write a checkpoint.
    Train(train::TrainArgs),
    /// Attack a checkpoint over a seed-pinned test subset.
    Attack(attack::AttackArgs),
    /// Compute metrics (and transfer metrics) for an attack run.
    Eval(eval::EvalArgs),
    /// Merge evaluated runs with one budget into a comparison table.
    Report(report::ReportArgs),
    /// Generate a synthetic digit dataset in IDX or CIFAR-10 binary form.
    Datagen(datagen::DatagenArgs),
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Train(args) => train::run(args),
        Command::Attack(args) => attack::run(args),
        Command::Eval(args) => eval::run(args),
        Command::Report(args) => report::run(args),
        Command::Datagen(args) => datagen::run(args),
    }
}
