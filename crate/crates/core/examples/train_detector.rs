//! Trains the detector on the synthetic benchmark and reports test recall.

use ebim_gnn::pointgnn::{run_benchmark, BenchmarkConfig};

fn main() -> ebim_gnn::Result<()> {
    ebim_gnn::heap::retain_freed_memory();
    let mut config = BenchmarkConfig::default();
    if let Some(e) = std::env::args().nth(1) {
        config.detector.epochs = e.parse().expect("epoch count");
    }
    let report = run_benchmark(&config, |e| {
        let l = e.loss;
        println!(
            "epoch {:>3}  total {:.4}  cls {:.4}  loc {:.4}  pro {:.4}",
            e.epoch, l.total, l.classification, l.localization, l.prototype
        );
    })?;
    let ev = report.evaluation;
    println!(
        "recall {:.3} ({}/{})  false positives per scene {:.2}  train {:.0}s  total {:.0}s",
        ev.recall(),
        ev.matched,
        ev.ground_truth,
        ev.false_positives_per_scene(),
        report.train_seconds,
        report.total_seconds
    );
    Ok(())
}
