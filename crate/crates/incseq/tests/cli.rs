//! End-to-end tests for the `incseq` binary: file outputs, determinism,
//! and exit codes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use incseq::metrics::StepReport;
use incseq::trainer::RunReport;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_incseq"))
}

fn run_ok(args: &[&str], cwd: &Path) -> Output {
    let out = bin().args(args).current_dir(cwd).output().expect("spawn");
    assert!(
        out.status.success(),
        "command {args:?} failed:\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn exit_code(args: &[&str], cwd: &Path) -> i32 {
    let out = bin().args(args).current_dir(cwd).output().expect("spawn");
    out.status.code().expect("exit code")
}

fn write_tiny_config(dir: &Path) -> PathBuf {
    let path = dir.join("tiny.toml");
    std::fs::write(
        &path,
        r#"
method = "ft"
fg = 1
pg = 1
epochs_per_task = 2
embed_dim = 6
hidden_dim = 10
window = 1

[synth]
num_entity_classes = 2
tokens_per_class = 60
vocab_per_class = 4
o_token_fraction = 0.4
sequence_length = 8
seed = 31
class_overlap = 0.0
"#,
    )
    .unwrap();
    path
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
}

#[test]
fn gen_is_deterministic_and_parses_back() {
    let tmp = tempfile::tempdir().unwrap();
    run_ok(&["gen", "--out", "a", "--seed", "7"], tmp.path());
    run_ok(&["gen", "--out", "b", "--seed", "7"], tmp.path());
    for name in ["train.conll", "test.conll"] {
        assert_eq!(
            read(&tmp.path().join("a").join(name)),
            read(&tmp.path().join("b").join(name)),
            "{name} differs between identical gen invocations"
        );
    }
    let (train, labels) =
        incseq::conll::read_corpus_file(&tmp.path().join("a/train.conll"), false).unwrap();
    assert!(!train.is_empty());
    assert!(labels.entity_count() >= 1);
    // A different seed must change the corpus.
    run_ok(&["gen", "--out", "c", "--seed", "8"], tmp.path());
    assert_ne!(
        read(&tmp.path().join("a/train.conll")),
        read(&tmp.path().join("c/train.conll"))
    );
}

#[test]
fn run_writes_all_outputs_and_identical_reruns_match_byte_for_byte() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_tiny_config(tmp.path());
    let cfg = cfg.to_str().unwrap();
    run_ok(&["run", "--config", cfg, "--out", "a"], tmp.path());
    run_ok(&["run", "--config", cfg, "--out", "b"], tmp.path());
    for name in [
        "report_ft_seed1.json",
        "aggregate_ft.json",
        "curve_ft.csv",
        "shifts_ft.csv",
        "confusion_ft_seed1_step1.csv",
        "confusion_ft_seed1_step2.csv",
        "checkpoint_ft_seed1.json",
    ] {
        let a = read(&tmp.path().join("a").join(name));
        assert_eq!(
            a,
            read(&tmp.path().join("b").join(name)),
            "{name} differs between identical runs"
        );
        assert!(!a.is_empty());
    }
    let report: RunReport =
        serde_json::from_slice(&read(&tmp.path().join("a/report_ft_seed1.json"))).unwrap();
    assert_eq!(report.method, "ft");
    assert_eq!(report.steps.len(), 2);
    assert_eq!(report.a_t, report.steps[1].macro_f1);
}

#[test]
fn multi_seed_runs_once_per_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_tiny_config(tmp.path());
    run_ok(
        &[
            "run",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            "runs",
            "--multi_seed",
            "1,2",
        ],
        tmp.path(),
    );
    let runs = tmp.path().join("runs");
    assert!(runs.join("report_ft_seed1.json").exists());
    assert!(runs.join("report_ft_seed2.json").exists());
    let aggregate: serde_json::Value =
        serde_json::from_slice(&read(&runs.join("aggregate_ft.json"))).unwrap();
    assert_eq!(aggregate["seeds"], serde_json::json!([1, 2]));
    assert_eq!(aggregate["a_t_values"].as_array().unwrap().len(), 2);
}

#[test]
fn eval_reproduces_the_final_step_of_a_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_tiny_config(tmp.path());
    let cfg = cfg.to_str().unwrap();
    run_ok(&["run", "--config", cfg, "--out", "runs"], tmp.path());
    run_ok(
        &[
            "eval",
            "--checkpoint",
            "runs/checkpoint_ft_seed1.json",
            "--config",
            cfg,
            "--out",
            "evalout",
        ],
        tmp.path(),
    );
    let evaluated: StepReport =
        serde_json::from_slice(&read(&tmp.path().join("evalout/eval_step2.json"))).unwrap();
    let report: RunReport =
        serde_json::from_slice(&read(&tmp.path().join("runs/report_ft_seed1.json"))).unwrap();
    assert_eq!(evaluated.macro_f1, report.steps[1].macro_f1);
    assert_eq!(evaluated.e2o_count, report.steps[1].e2o_count);
}

#[test]
fn report_rebuilds_summary_csvs_from_report_files() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_tiny_config(tmp.path());
    run_ok(
        &["run", "--config", cfg.to_str().unwrap(), "--out", "runs"],
        tmp.path(),
    );
    let curve = tmp.path().join("runs/curve_ft.csv");
    let before = read(&curve);
    std::fs::remove_file(&curve).unwrap();
    run_ok(&["report", "runs"], tmp.path());
    assert_eq!(before, read(&curve), "rebuilt curve CSV differs");
    // A single report file still yields data rows.
    let text = String::from_utf8(before).unwrap();
    assert!(text.lines().count() >= 2);
}

#[test]
fn report_on_directory_without_reports_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(exit_code(&["report", "."], tmp.path()), 2);
    std::fs::write(tmp.path().join("report_bad.json"), "{not json").unwrap();
    assert_eq!(exit_code(&["report", "."], tmp.path()), 2);
}

#[test]
fn usage_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(exit_code(&["run", "--no-such-flag"], tmp.path()), 1);
    assert_eq!(
        exit_code(&["run", "--method", "bogus", "--out", "x"], tmp.path()),
        1
    );
    assert_eq!(exit_code(&["run"], tmp.path()), 1, "run without --out");
    std::fs::write(tmp.path().join("bad.toml"), "no_such_key = 1\n").unwrap();
    assert_eq!(
        exit_code(
            &["run", "--config", "bad.toml", "--out", "x"],
            tmp.path()
        ),
        1,
        "unknown config key"
    );
}

#[test]
fn missing_inputs_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(
        exit_code(
            &["run", "--corpus", "nowhere", "--out", "x"],
            tmp.path()
        ),
        2
    );
    assert_eq!(
        exit_code(
            &["eval", "--checkpoint", "nowhere.json", "--out", "x"],
            tmp.path()
        ),
        2
    );
}

#[test]
fn help_and_version_exit_zero() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(exit_code(&["--help"], tmp.path()), 0);
    assert_eq!(exit_code(&["run", "--help"], tmp.path()), 0);
    assert_eq!(exit_code(&["--version"], tmp.path()), 0);
}

#[test]
fn run_on_a_generated_corpus_directory_matches_in_memory_synth() {
    // Generating to disk and reading it back must give the same result as
    // the in-memory path, since the CoNLL round-trip is lossless.
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_tiny_config(tmp.path());
    let cfg = cfg.to_str().unwrap();
    run_ok(&["gen", "--config", cfg, "--out", "corpus"], tmp.path());
    run_ok(&["run", "--config", cfg, "--out", "mem"], tmp.path());
    run_ok(
        &[
            "run",
            "--config",
            cfg,
            "--corpus",
            "corpus",
            "--out",
            "disk",
        ],
        tmp.path(),
    );
    assert_eq!(
        read(&tmp.path().join("mem/report_ft_seed1.json")),
        read(&tmp.path().join("disk/report_ft_seed1.json")),
        "in-memory and on-disk corpora lead to different reports"
    );
}
