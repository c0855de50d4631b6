//! Cross-validates one backbone/encoding pair on the synthetic edge-count
//! task and prints the per-fold accuracies.
//!
//! `cargo run --release -p leap-core --example synthetic -- gcn leap 4000`

use std::time::Instant;

use leap::data::{generate_synthetic, SyntheticSpec};
use leap::{train_eval, Backbone, LeapConfig, ModelConfig, PeSpec, ProjectionKind, TrainConfig};

fn main() -> leap::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let backbone: Backbone = args.first().map_or("gcn", String::as_str).parse()?;
    let pe = match args.get(1).map_or("leap", String::as_str) {
        "none" => PeSpec::None,
        "rwpe" => PeSpec::Rwpe { dim: 10 },
        "lape" => PeSpec::Lape { dim: 10 },
        "leap-f" => PeSpec::Leap(LeapConfig { learn_directions: false, ..LeapConfig::default() }),
        proj => PeSpec::Leap(LeapConfig {
            projection: proj.strip_prefix("leap-").unwrap_or("linear").parse().unwrap_or(ProjectionKind::Linear),
            ..LeapConfig::default()
        }),
    };
    let count = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(4000);
    let ds = generate_synthetic(SyntheticSpec { count, seed: 7 })?;
    let config = ModelConfig::standard(backbone, 2, ds.task, pe);
    let start = Instant::now();
    let out = train_eval(&config, &ds, &TrainConfig::default())?;
    for f in &out.report.folds {
        println!(
            "fold {}: accuracy {:.4} (best epoch {} of {})",
            f.fold,
            f.accuracy.unwrap_or(f64::NAN),
            f.best_epoch,
            f.epochs_run
        );
    }
    let acc = out.report.accuracy.expect("classification");
    println!(
        "{backbone} + {}: accuracy {:.4} ± {:.4} in {:.1}s",
        out.report.pe,
        acc.mean,
        acc.std,
        start.elapsed().as_secs_f64()
    );
    Ok(())
}
