//! Trains the two-blob toy GWIN and prints the rejected-subset accuracy
//! as training progresses.
//!
//! cargo run --release -p gwin-core --example blobs -- [iterations] [seed] [mass_lo mass_hi]

use gwin_core::evaluation::run_metrics;
use gwin_core::synthetic::{BlobExperiment, BlobExperimentConfig};
use std::time::Instant;

fn main() -> gwin_core::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let iterations: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let seed: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0);
    let start = Instant::now();
    let mut cfg = BlobExperimentConfig { seed, ..Default::default() };
    if let (Some(lo), Some(hi)) = (args.get(3), args.get(4)) {
        cfg.params.distractor_mass = (lo.parse().unwrap(), hi.parse().unwrap());
    }
    let mut exp = BlobExperiment::new(cfg)?;
    println!(
        "setup {:.1}s, confident subset {} of {}",
        start.elapsed().as_secs_f64(),
        exp.confident.len(),
        exp.train.set.len()
    );
    let taus = [0.5, 0.8, 0.95];
    let report = |exp: &BlobExperiment| -> gwin_core::Result<()> {
        let rows =
            run_metrics(&exp.classifier, &exp.trainer.generator, &exp.test.set, &taus, exp.cfg.mc_samples, 1, 0)?;
        for r in rows {
            println!(
                "  iter {:5} tau {:.2} reject {:5.1}% base {:?} gwin {:?} overall {:.2} -> {:.2}",
                exp.trainer.iteration,
                r.tau,
                r.pct_reject,
                r.bnn_acc_rejected.map(|v| v.round()),
                r.bnn_gwin_acc_rejected.map(|v| v.round()),
                r.overall_acc_baseline,
                r.overall_acc_gwin
            );
        }
        Ok(())
    };
    report(&exp)?;
    let chunk = 250.min(iterations).max(1);
    while exp.trainer.iteration < iterations {
        exp.train_steps(chunk)?;
        println!("[{:.0}s]", start.elapsed().as_secs_f64());
        report(&exp)?;
    }
    Ok(())
}
