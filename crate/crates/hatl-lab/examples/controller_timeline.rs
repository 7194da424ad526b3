//! Replays a scripted dev-metric trace through the release controller and
//! prints the full decision timeline: warmup, plateau ticks, scheduled and
//! applied releases, cooldowns, threshold decay, and the final stop.
//!
//!     cargo run --example controller_timeline

use std::collections::BTreeMap;

use hatl_lab::controller::{Controller, ControllerConfig, EpochDecision};
use hatl_lab::error::Result;

fn main() -> Result<()> {
    // Joint monitoring of dev CTC (minimize) and dev BLEU-4 (maximize)
    // with two backbone layers available for release.
    let cfg = ControllerConfig::s2g2t(2);
    println!(
        "warmup {} | window {} | patience {} | cooldown {} | tau {} | stop after {}\n",
        cfg.warmup_epochs, cfg.window, cfg.patience, cfg.cooldown, cfg.tau, cfg.early_stop_patience
    );
    let mut ctrl = Controller::new(cfg)?;

    // BLEU improves early, saturates, gets a small second wind after each
    // release, then goes flat for good; CTC mirrors that in reverse.
    let bleu = [
        0.10, 0.16, 0.21, 0.245, 0.2455, 0.246, 0.2462, 0.30, 0.31, 0.3105, 0.3108, 0.311, 0.3111,
        0.3112, 0.36, 0.362, 0.3622, 0.3623, 0.3623, 0.3624, 0.3624, 0.3624, 0.3624, 0.3624,
        0.3624, 0.3624, 0.3624, 0.3624, 0.3624,
    ];
    let ctc = [
        4.0, 3.0, 2.2, 1.9, 1.899, 1.898, 1.8975, 1.5, 1.4, 1.399, 1.3985, 1.398, 1.3978, 1.3977,
        1.1, 1.09, 1.089, 1.0889, 1.0888, 1.0888, 1.0888, 1.0888, 1.0888, 1.0888, 1.0888, 1.0888,
        1.0888, 1.0888, 1.0888,
    ];

    for (b, c) in bleu.iter().zip(&ctc) {
        let metrics = BTreeMap::from([
            ("dev_bleu4".to_string(), *b),
            ("dev_ctc".to_string(), *c),
        ]);
        match ctrl.observe_epoch(&metrics)? {
            EpochDecision::Continue => {}
            EpochDecision::ScheduleRelease(layer) => {
                // A real run rebuilds the optimizer here; the trace replay
                // only acknowledges the release.
                ctrl.mark_release_applied()?;
                println!(
                    "epoch {:>2}: scheduled release of L{layer} (top-down), applied at epoch {}",
                    ctrl.epoch(),
                    ctrl.epoch() + 1
                );
            }
            EpochDecision::Stop => {
                println!("epoch {:>2}: stopped (no primary improvement)", ctrl.epoch());
                break;
            }
        }
    }

    println!("\nevent timeline:");
    for e in ctrl.events() {
        println!("  {}", e.tsv_line());
    }

    println!(
        "\nbest dev BLEU-4 {:.4}; release band for dev_ctc decayed to {:.6}",
        ctrl.best_primary().unwrap(),
        ctrl.current_delta("dev_ctc").unwrap()
    );
    Ok(())
}
