//! Runs the full staged fine-tuning pipeline once at desk scale using the
//! committed benchmark configuration, with a reduced epoch budget so it
//! finishes in a few seconds: source-domain backbone pretraining, staged
//! fine-tuning under the release controller, per-epoch metrics, and the
//! controller's event timeline.
//!
//!     cargo run --release --example train_tiny

use std::path::Path;

use hatl_lab::config::{Regime, RunConfig, Task};
use hatl_lab::data::{generate_dataset, DatasetSpec};
use hatl_lab::error::Result;
use hatl_lab::harness::{run_training, LoadedData, RunOptions};

fn main() -> Result<()> {
    let assets = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../assets");
    let spec = DatasetSpec {
        seed: 1,
        ..DatasetSpec::from_path(&assets.join("benchmark-data.cfg"))?
    };
    let cfg = RunConfig {
        seed: 1,
        max_epochs: 60,
        ..RunConfig::from_path(&assets.join("benchmark-run.cfg"))?
    };
    let data = LoadedData::from_dataset(&generate_dataset(&spec)?);

    let out = std::env::temp_dir().join("hatl-lab-train-tiny");
    let report = run_training(
        &cfg,
        &data,
        &RunOptions {
            regime: Regime::Hatl,
            task: Task::S2g2t,
            pretrained: None,
            out_dir: &out,
        },
    )?;

    println!("epoch  train_loss   dev_ctc  dev_bleu4  unfrozen");
    for e in &report.epochs {
        println!(
            "{:>5}  {:>10.4}  {:>8.4}  {:>9.4}  {:>8}",
            e.epoch,
            e.loss_total,
            e.dev_ctc.unwrap_or(f64::NAN),
            e.dev_bleu4,
            e.unfrozen_layers
        );
    }

    println!("\ncontroller events:");
    for line in &report.events {
        println!("  {line}");
    }

    println!(
        "\nbest dev BLEU-4 {:.4} at epoch {}; final test BLEU-4 {:.4}, ROUGE-L {:.4}",
        report.best_dev_bleu4, report.best_epoch, report.final_test.bleu4, report.final_test.rouge_l
    );
    println!(
        "({} epochs in {:.1}s; artifacts in {})",
        report.epochs.len(),
        report.total_wall_clock_s,
        out.display()
    );
    Ok(())
}
