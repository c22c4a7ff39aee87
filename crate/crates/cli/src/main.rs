mod classifier_cmd;
mod eval_cmd;
mod gwin_cmd;
mod infer_cmd;
mod plots;

use clap::{Parser, Subcommand};
use gwin_core::classifier::ArchitectureSpec;
use gwin_core::evaluation::{aggregate_rows, render_table, run_metrics};
use gwin_core::gwin::GeneratorSpec;
use gwin_core::pipeline::{classifier_flops, generator_flops};
use gwin_core::rejection::DEFAULT_TAUS;
use gwin_core::synthetic::{BlobExperiment, BlobExperimentConfig};

#[derive(Parser)]
#[command(name = "gwin", version, about = "Certainty-gated classification with a transforming generator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a Bayesian classifier; checkpoints after every epoch and resumes from --out.
    TrainClassifier(classifier_cmd::TrainArgs),
    /// Build the confident training subset for a trained classifier.
    BuildSubset(classifier_cmd::SubsetArgs),
    /// Train the generator and critic against a frozen classifier.
    TrainGwin(gwin_cmd::TrainGwinArgs),
    /// Classify an IDX image file, transforming rejected images; writes JSON lines.
    Infer(infer_cmd::InferArgs),
    /// Threshold sweep over several runs with tables and plots.
    Evaluate(eval_cmd::EvaluateArgs),
    /// Per-layer forward-pass FLOP counts.
    Flops,
    /// Train and evaluate the two-blob toy task.
    Synthetic {
        #[arg(long, default_value_t = 2000)]
        iterations: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        runs: u64,
    },
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::TrainClassifier(a) => classifier_cmd::train(a),
        Command::BuildSubset(a) => classifier_cmd::build_subset(a),
        Command::TrainGwin(a) => gwin_cmd::train(a),
        Command::Infer(a) => infer_cmd::run(a),
        Command::Evaluate(a) => eval_cmd::run(a),
        Command::Flops => {
            let reports = [
                generator_flops(&GeneratorSpec::standard()),
                classifier_flops(&ArchitectureSpec::lenet5_bnn())?,
                classifier_flops(&ArchitectureSpec::improved_bnn())?,
            ];
            for r in &reports {
                for l in &r.layers {
                    println!("{:<14} {:<44} {:>12}", r.model, l.layer, l.flops);
                }
                println!("{:<14} {:<44} {:>12}\n", r.model, "total", r.total);
            }
            Ok(())
        }
        Command::Synthetic { iterations, seed, runs } => {
            let mut cfg = BlobExperimentConfig { seed, ..Default::default() };
            cfg.gwin.iterations = iterations;
            let mut exp = BlobExperiment::new(cfg)?;
            log::info!("confident subset {} of {}", exp.confident.len(), exp.train.set.len());
            exp.train_steps(iterations)?;
            let mut all = Vec::new();
            for r in 0..runs {
                all.extend(run_metrics(
                    &exp.classifier,
                    &exp.trainer.generator,
                    &exp.test.set,
                    &DEFAULT_TAUS,
                    exp.cfg.mc_samples,
                    seed + r,
                    r as usize,
                )?);
            }
            print!("{}", render_table(&aggregate_rows(&DEFAULT_TAUS, &all)));
            Ok(())
        }
    }
}
