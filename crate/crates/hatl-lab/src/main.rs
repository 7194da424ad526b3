//! Thin command-line front end over the library: dataset generation,
//! training, evaluation, decoding, and controller simulation.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hatl_lab::config::{Regime, RunConfig, Task};
use hatl_lab::data::{generate_dataset, DatasetSpec};
use hatl_lab::error::{Error, Result};
use hatl_lab::harness::{
    evaluate_checkpoint, events_tsv, run_training, simulate_controller, write_data_dir,
    LoadedData, RunOptions,
};

#[derive(Parser)]
#[command(
    name = "hatl-lab",
    about = "Adaptive layer-unfreezing transfer-learning lab on synthetic sign-language data",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Shared {
    /// `key = value` configuration file; defaults apply for absent keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config file's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for run artifacts.
    #[arg(long)]
    out: PathBuf,
}

impl Shared {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_path(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Generates the four dataset splits plus a `spec.echo` provenance file.
    GenData {
        /// Dataset spec file (`key = value`); defaults apply for absent keys.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Overrides the spec file's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fine-tunes a model under one regime and writes the run artifacts.
    Train {
        #[command(flatten)]
        shared: Shared,
        #[arg(long)]
        regime: Regime,
        #[arg(long)]
        task: Task,
        /// Backbone checkpoint; omitted = pretrain first (saved alongside).
        #[arg(long)]
        pretrained: Option<PathBuf>,
        /// Directory holding pretrain/train/dev/test TSVs (overrides the
        /// config's `data_dir`).
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Scores one split with the beam+LM decoder and prints the metrics.
    Eval {
        #[command(flatten)]
        shared: Shared,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Debug identity: score the references against themselves.
        #[arg(long)]
        refs_as_hyps: bool,
    },
    /// Decodes one split, writing `hyp.txt`/`ref.txt` without scoring.
    Decode {
        #[command(flatten)]
        shared: Shared,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Replays a metric-trace CSV through the release controller and
    /// writes `events.tsv` without any training.
    SimulateController {
        #[command(flatten)]
        shared: Shared,
        /// CSV whose header names the monitored metrics (e.g.
        /// `epoch,dev_ctc,dev_bleu4`), one row per epoch.
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, default_value = "s2g2t")]
        task: Task,
    },
}

fn load_data(cli_dir: Option<&Path>, cfg: &RunConfig) -> Result<LoadedData> {
    let dir = cli_dir
        .map(Path::to_path_buf)
        .or_else(|| cfg.data_dir.clone())
        .ok_or_else(|| {
            Error::Config("no dataset directory (pass --data or set data_dir)".into())
        })?;
    LoadedData::from_dir(&dir)
}

fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::GenData { spec, seed, out } => {
            let mut ds_spec = match &spec {
                Some(path) => DatasetSpec::from_path(path)?,
                None => DatasetSpec::default(),
            };
            if let Some(seed) = seed {
                ds_spec.seed = seed;
            }
            let ds = generate_dataset(&ds_spec)?;
            write_data_dir(&out, &ds, &ds_spec)?;
            println!(
                "wrote {} (pretrain {} / train {} / dev {} / test {})",
                out.display(),
                ds.pretrain.len(),
                ds.train.len(),
                ds.dev.len(),
                ds.test.len()
            );
            Ok(())
        }
        Cmd::Train {
            shared,
            regime,
            task,
            pretrained,
            data,
        } => {
            let cfg = shared.load()?;
            let data = load_data(data.as_deref(), &cfg)?;
            let report = run_training(
                &cfg,
                &data,
                &RunOptions {
                    regime,
                    task,
                    pretrained: pretrained.as_deref(),
                    out_dir: &shared.out,
                },
            )?;
            println!(
                "{} {} seed {}: best dev BLEU-4 {:.4} at epoch {} ({} epochs, {:.1}s)",
                report.regime,
                report.task,
                report.seed,
                report.best_dev_bleu4,
                report.best_epoch,
                report.epochs.len(),
                report.total_wall_clock_s
            );
            println!(
                "test BLEU-4 {:.4} ROUGE-L {:.4}; artifacts in {}",
                report.final_test.bleu4,
                report.final_test.rouge_l,
                shared.out.display()
            );
            Ok(())
        }
        Cmd::Eval {
            shared,
            checkpoint,
            split,
            data,
            refs_as_hyps,
        } => {
            let cfg = shared.load()?;
            let data = load_data(data.as_deref(), &cfg)?;
            let summary = evaluate_checkpoint(
                &checkpoint,
                &data,
                &split,
                &cfg,
                refs_as_hyps,
                Some(&shared.out),
            )?;
            for line in summary.lines() {
                println!("{line}");
            }
            Ok(())
        }
        Cmd::Decode {
            shared,
            checkpoint,
            split,
            data,
        } => {
            let cfg = shared.load()?;
            let data = load_data(data.as_deref(), &cfg)?;
            evaluate_checkpoint(&checkpoint, &data, &split, &cfg, false, Some(&shared.out))?;
            println!(
                "decoded {split} into {}/hyp.txt (+ ref.txt)",
                shared.out.display()
            );
            Ok(())
        }
        Cmd::SimulateController {
            shared,
            trace,
            task,
        } => {
            let cfg = shared.load()?;
            let text = std::fs::read_to_string(&trace)
                .map_err(|e| Error::io(format!("reading trace {}", trace.display()), e))?;
            let events = simulate_controller(&cfg, task, &text)?;
            std::fs::create_dir_all(&shared.out)
                .map_err(|e| Error::io(format!("creating {}", shared.out.display()), e))?;
            let rendered = events_tsv(&events);
            std::fs::write(shared.out.join("events.tsv"), &rendered).map_err(|e| {
                Error::io(format!("writing {}/events.tsv", shared.out.display()), e)
            })?;
            print!("{rendered}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
