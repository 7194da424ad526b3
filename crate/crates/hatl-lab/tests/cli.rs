//! End-to-end checks of the `hatl-lab` binary: every subcommand, the
//! artifact layout, and the documented exit codes (0 ok, 2 bad input,
//! 3 numeric breakdown).

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hatl-lab"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawning hatl-lab")
}

fn assert_ok(out: &Output, what: &str) {
    assert!(
        out.status.success(),
        "{what} failed: status {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn write(path: &Path, content: &str) {
    std::fs::write(path, content).unwrap();
}

const TINY_SPEC: &str = "\
pretrain_samples = 12\n\
train_samples = 10\n\
dev_samples = 4\n\
test_samples = 4\n\
seed = 7\n";

const TINY_CFG: &str = "\
d_model = 8\n\
n_backbone = 2\n\
n_encoder = 1\n\
n_decoder = 1\n\
max_epochs = 2\n\
pretrain_epochs = 2\n\
early_stop = 50\n";

#[test]
fn full_pipeline_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("data.cfg");
    write(&spec, TINY_SPEC);
    let cfg = dir.path().join("run.cfg");
    write(&cfg, TINY_CFG);
    let data = dir.path().join("data");
    let run_out = dir.path().join("run");
    let s = |p: &Path| p.to_str().unwrap().to_string();

    // gen-data: four splits plus the echoed spec.
    let out = run(&[
        "gen-data",
        "--spec",
        &s(&spec),
        "--out",
        &s(&data),
    ]);
    assert_ok(&out, "gen-data");
    for f in ["pretrain.tsv", "train.tsv", "dev.tsv", "test.tsv", "spec.echo"] {
        assert!(data.join(f).exists(), "gen-data did not write {f}");
    }
    let echo = std::fs::read_to_string(data.join("spec.echo")).unwrap();
    assert!(echo.contains("v_gloss"), "spec.echo misses keys: {echo}");

    // train: a two-epoch classical run with inline pretraining.
    let out = run(&[
        "train",
        "--config",
        &s(&cfg),
        "--regime",
        "classical",
        "--task",
        "s2g2t",
        "--data",
        &s(&data),
        "--out",
        &s(&run_out),
    ]);
    assert_ok(&out, "train");
    for f in [
        "best.ckpt",
        "pretrain.ckpt",
        "metrics.csv",
        "events.tsv",
        "report.json",
        "hyp.txt",
        "ref.txt",
    ] {
        assert!(run_out.join(f).exists(), "train did not write {f}");
    }

    // eval: scoring the references against themselves must be perfect.
    let ckpt = run_out.join("best.ckpt");
    let eval_out = dir.path().join("eval");
    let out = run(&[
        "eval",
        "--config",
        &s(&cfg),
        "--checkpoint",
        &s(&ckpt),
        "--split",
        "dev",
        "--data",
        &s(&data),
        "--out",
        &s(&eval_out),
        "--refs-as-hyps",
    ]);
    assert_ok(&out, "eval --refs-as-hyps");
    let stdout = String::from_utf8_lossy(&out.stdout).to_string();
    assert!(
        stdout.contains("BLEU-4\t1.0000") && stdout.contains("ROUGE-L\t1.0000"),
        "identity eval not perfect:\n{stdout}"
    );

    // eval for real: five metric lines on stdout.
    let out = run(&[
        "eval",
        "--config",
        &s(&cfg),
        "--checkpoint",
        &s(&ckpt),
        "--data",
        &s(&data),
        "--out",
        &s(&eval_out),
    ]);
    assert_ok(&out, "eval");
    let stdout = String::from_utf8_lossy(&out.stdout).to_string();
    for label in ["BLEU-1", "BLEU-2", "BLEU-3", "BLEU-4", "ROUGE-L"] {
        assert!(stdout.contains(label), "eval output misses {label}:\n{stdout}");
    }

    // decode: hypothesis/reference files, one line per test sample.
    let dec_out = dir.path().join("dec");
    let out = run(&[
        "decode",
        "--config",
        &s(&cfg),
        "--checkpoint",
        &s(&ckpt),
        "--data",
        &s(&data),
        "--out",
        &s(&dec_out),
    ]);
    assert_ok(&out, "decode");
    let hyp = std::fs::read_to_string(dec_out.join("hyp.txt")).unwrap();
    let reference = std::fs::read_to_string(dec_out.join("ref.txt")).unwrap();
    assert_eq!(hyp.lines().count(), 4, "expected one hypothesis per test sample");
    assert_eq!(reference.lines().count(), 4);
}

#[test]
fn simulate_controller_replays_a_trace() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    let mut csv = String::from("epoch,dev_ctc,dev_bleu4\n");
    for e in 1..=9 {
        csv.push_str(&format!("{e},1.0,0.3\n"));
    }
    write(&trace, &csv);
    let out_dir = dir.path().join("sim");
    let out = run(&[
        "simulate-controller",
        "--trace",
        trace.to_str().unwrap(),
        "--task",
        "s2g2t",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_ok(&out, "simulate-controller");
    let tsv = std::fs::read_to_string(out_dir.join("events.tsv")).unwrap();
    assert!(
        tsv.lines().any(|l| l.starts_with("7\trelease_applied")),
        "expected a release at epoch 7:\n{tsv}"
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("release_applied"), "stdout misses events");
}

#[test]
fn bad_input_exits_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let s = |p: &Path| p.to_str().unwrap().to_string();

    // No dataset directory anywhere.
    let out = run(&[
        "train",
        "--regime",
        "full",
        "--task",
        "s2t",
        "--out",
        &s(&dir.path().join("x")),
    ]);
    assert_eq!(out.status.code(), Some(2), "missing --data should exit 2");

    // Unknown key in a config file.
    let bad = dir.path().join("bad.cfg");
    write(&bad, "no_such_knob = 1\n");
    let out = run(&[
        "train",
        "--config",
        &s(&bad),
        "--regime",
        "full",
        "--task",
        "s2t",
        "--out",
        &s(&dir.path().join("y")),
    ]);
    assert_eq!(out.status.code(), Some(2), "unknown config key should exit 2");

    // Trace missing a monitored metric column.
    let trace = dir.path().join("trace.csv");
    write(&trace, "dev_bleu4\n0.3\n0.3\n");
    let out = run(&[
        "simulate-controller",
        "--trace",
        &s(&trace),
        "--task",
        "s2g2t",
        "--out",
        &s(&dir.path().join("z")),
    ]);
    assert_eq!(out.status.code(), Some(2), "missing metric column should exit 2");

    // Unknown subcommands are usage errors too.
    let out = run(&["no-such-command"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn non_finite_metrics_exit_with_code_3() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    write(&trace, "dev_bleu4\n0.3\nnan\n");
    let out = run(&[
        "simulate-controller",
        "--trace",
        trace.to_str().unwrap(),
        "--task",
        "s2t",
        "--out",
        dir.path().join("sim").to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(3),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}
