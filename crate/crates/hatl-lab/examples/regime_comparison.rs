//! Compares the three fine-tuning regimes on one seed of the committed
//! benchmark: classical (backbone frozen), full (everything trains from
//! epoch 1), and staged release. The pretrained backbone is shared so
//! the regimes differ only in what the optimizer may touch.
//!
//! The acceptance suite runs this protocol over 5 seeds and both tasks;
//! one seed takes roughly a minute in release mode.
//!
//!     cargo run --release --example regime_comparison

use std::path::Path;

use hatl_lab::config::{Regime, RunConfig, Task};
use hatl_lab::data::generate_dataset;
use hatl_lab::data::DatasetSpec;
use hatl_lab::error::Result;
use hatl_lab::harness::{run_training, write_data_dir, LoadedData, RunOptions};

fn main() -> Result<()> {
    let assets = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../assets");
    let mut spec = DatasetSpec::from_path(&assets.join("benchmark-data.cfg"))?;
    spec.seed = 1;
    let cfg = RunConfig {
        seed: 1,
        ..RunConfig::from_path(&assets.join("benchmark-run.cfg"))?
    };

    // Round-trip through the on-disk format so the numbers match the CLI.
    let tmp = std::env::temp_dir().join("hatl-lab-regime-comparison");
    let data_dir = tmp.join("data");
    write_data_dir(&data_dir, &generate_dataset(&spec)?, &spec)?;
    let data = LoadedData::from_dir(&data_dir)?;

    let task = Task::S2g2t;
    println!("task {}, training seed {}\n", task.as_str(), cfg.seed);
    println!(
        "{:<10} {:>6} {:>10} {:>11} {:>8}",
        "regime", "epochs", "dev BLEU-4", "test BLEU-4", "releases"
    );
    for regime in [Regime::Classical, Regime::Full, Regime::Hatl] {
        let out = tmp.join(regime.as_str());
        let report = run_training(
            &cfg,
            &data,
            &RunOptions {
                regime,
                task,
                pretrained: None,
                out_dir: &out,
            },
        )?;
        let releases = report
            .events
            .iter()
            .filter(|e| e.contains("release_applied"))
            .count();
        println!(
            "{:<10} {:>6} {:>10.4} {:>11.4} {:>8}",
            report.regime,
            report.epochs.len(),
            report.best_dev_bleu4,
            report.final_test.bleu4,
            releases
        );
    }
    println!("\nartifacts in {}", tmp.display());
    Ok(())
}
