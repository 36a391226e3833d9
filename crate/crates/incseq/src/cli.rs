//! Config-driven command-line front end.
//!
//! Four subcommands: `run` trains an experiment and writes reports, `gen`
//! materializes a synthetic corpus, `eval` re-scores a saved checkpoint, and
//! `report` rebuilds summary CSVs from report files. Settings resolve in
//! three layers: built-in defaults, then the TOML config file, then flags.
//!
//! Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numerical
//! failure. Log verbosity comes from the `RUST_LOG` environment variable.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::conll::{build_label_set, corpus_to_conll, index_corpus, parse_conll};
use crate::error::{Error, Result};
use crate::losses::ClassPartition;
use crate::metrics::step_report;
use crate::schema::{build_schedule, LabelSet, TaskSchedule, TokenSequence};
use crate::synthgen::{generate, SynthSpec};
use crate::trainer::{
    evaluate, mean_std, run_experiment, Method, OptimizerKind, RunReport, RunState, TrainConfig,
};

#[derive(Parser)]
#[command(
    name = "incseq",
    version,
    about = "Incremental sequence-tagging experiments on CPU-sized models"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train on an incremental task stream and write reports.
    Run(RunCmd),
    /// Generate a synthetic corpus as train.conll / test.conll.
    Gen(GenCmd),
    /// Re-score a saved run checkpoint on a test corpus.
    Eval(EvalCmd),
    /// Rebuild per-method curve and shift CSVs from report files.
    Report(ReportCmd),
}

/// Flags shared by the data-processing subcommands. Every config-file key
/// has a flag of the same name; flags win over the file.
#[derive(Args, Clone, Default)]
struct Overrides {
    /// TOML config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Corpus directory holding train.conll and test.conll.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Output directory (created if absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Training method: is3, ft, kd_only, no_debias, no_proto.
    #[arg(long)]
    method: Option<String>,
    /// Entity classes in the first task.
    #[arg(long)]
    fg: Option<usize>,
    /// Entity classes added by each later task.
    #[arg(long)]
    pg: Option<usize>,
    /// Old-entity logit scale in the debiased cross-entropy.
    #[arg(long)]
    delta: Option<f64>,
    /// Weight of the prototype loss.
    #[arg(long)]
    alpha: Option<f64>,
    /// Weight of the distillation loss.
    #[arg(long)]
    beta: Option<f64>,
    /// Base seed for the run.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated seeds; runs one experiment per seed.
    #[arg(long = "multi_seed", value_delimiter = ',')]
    multi_seed: Option<Vec<u64>>,
    #[arg(long = "kd_temperature")]
    kd_temperature: Option<f64>,
    #[arg(long = "epochs_per_task")]
    epochs_per_task: Option<usize>,
    #[arg(long = "batch_size")]
    batch_size: Option<usize>,
    #[arg(long = "lr_backbone")]
    lr_backbone: Option<f64>,
    #[arg(long = "lr_classifier")]
    lr_classifier: Option<f64>,
    #[arg(long = "weight_decay")]
    weight_decay: Option<f64>,
    /// Optimizer: sgd or adamw.
    #[arg(long)]
    optimizer: Option<String>,
    #[arg(long = "embed_dim")]
    embed_dim: Option<usize>,
    #[arg(long = "hidden_dim")]
    hidden_dim: Option<usize>,
    /// Context window radius of the encoder.
    #[arg(long)]
    window: Option<usize>,
    /// Leave new-entity tokens out of the distillation term (true/false).
    #[arg(long = "kd_skip_new_entity_tokens")]
    kd_skip_new_entity_tokens: Option<bool>,
    /// Keep training sequences without current-task entities (true/false).
    #[arg(long = "keep_empty_sequences")]
    keep_empty_sequences: Option<bool>,
    /// Collapse B-/I- label prefixes when reading corpora (true/false).
    #[arg(long = "strip_bio")]
    strip_bio: Option<bool>,
    /// Allow a final task smaller than pg (true/false).
    #[arg(long = "allow_ragged_tail")]
    allow_ragged_tail: Option<bool>,
}

#[derive(Args)]
struct RunCmd {
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct GenCmd {
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct EvalCmd {
    /// Run checkpoint written by `run`.
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct ReportCmd {
    /// Directory containing report_*.json files.
    dir: PathBuf,
}

/// The config file: every key optional, unknown keys rejected.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    method: Option<String>,
    seed: Option<u64>,
    multi_seed: Option<Vec<u64>>,
    fg: Option<usize>,
    pg: Option<usize>,
    delta: Option<f64>,
    alpha: Option<f64>,
    beta: Option<f64>,
    kd_temperature: Option<f64>,
    epochs_per_task: Option<usize>,
    batch_size: Option<usize>,
    lr_backbone: Option<f64>,
    lr_classifier: Option<f64>,
    weight_decay: Option<f64>,
    optimizer: Option<String>,
    embed_dim: Option<usize>,
    hidden_dim: Option<usize>,
    window: Option<usize>,
    kd_skip_new_entity_tokens: Option<bool>,
    keep_empty_sequences: Option<bool>,
    strip_bio: Option<bool>,
    allow_ragged_tail: Option<bool>,
    corpus: Option<PathBuf>,
    out: Option<PathBuf>,
    synth: Option<SynthSpec>,
}

/// Fully resolved settings after merging defaults, file, and flags.
struct Settings {
    cfg: TrainConfig,
    fg: usize,
    pg: usize,
    seeds: Vec<u64>,
    corpus: Option<PathBuf>,
    out: Option<PathBuf>,
    strip_bio: bool,
    allow_ragged_tail: bool,
    synth: Option<SynthSpec>,
}

fn load_file_config(path: Option<&Path>) -> Result<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Data(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text)
        .map_err(|e| Error::Config(format!("invalid config {}: {e}", path.display())))
}

fn resolve(o: &Overrides) -> Result<Settings> {
    let file = load_file_config(o.config.as_deref())?;
    let mut cfg = TrainConfig::desk_default();

    macro_rules! overlay {
        ($target:expr, $($src:expr),+) => {
            $(if let Some(v) = $src.clone() { $target = v; })+
        };
    }
    overlay!(cfg.hp.delta, file.delta, o.delta);
    overlay!(cfg.hp.alpha, file.alpha, o.alpha);
    overlay!(cfg.hp.beta, file.beta, o.beta);
    overlay!(cfg.hp.kd_temperature, file.kd_temperature, o.kd_temperature);
    overlay!(cfg.epochs_per_task, file.epochs_per_task, o.epochs_per_task);
    overlay!(cfg.batch_size, file.batch_size, o.batch_size);
    overlay!(cfg.lr_backbone, file.lr_backbone, o.lr_backbone);
    overlay!(cfg.lr_classifier, file.lr_classifier, o.lr_classifier);
    overlay!(cfg.weight_decay, file.weight_decay, o.weight_decay);
    overlay!(cfg.seed, file.seed, o.seed);
    overlay!(cfg.model.embed_dim, file.embed_dim, o.embed_dim);
    overlay!(cfg.model.hidden_dim, file.hidden_dim, o.hidden_dim);
    overlay!(cfg.model.window, file.window, o.window);
    overlay!(
        cfg.kd_skip_new_entity_tokens,
        file.kd_skip_new_entity_tokens,
        o.kd_skip_new_entity_tokens
    );
    overlay!(
        cfg.keep_empty_sequences,
        file.keep_empty_sequences,
        o.keep_empty_sequences
    );
    if let Some(m) = o.method.as_deref().or(file.method.as_deref()) {
        cfg.method = m.parse::<Method>()?;
    }
    if let Some(opt) = o.optimizer.as_deref().or(file.optimizer.as_deref()) {
        cfg.optimizer = opt.parse::<OptimizerKind>()?;
    }

    let mut fg = 2;
    let mut pg = 2;
    let mut strip_bio = false;
    let mut allow_ragged_tail = false;
    overlay!(fg, file.fg, o.fg);
    overlay!(pg, file.pg, o.pg);
    overlay!(strip_bio, file.strip_bio, o.strip_bio);
    overlay!(allow_ragged_tail, file.allow_ragged_tail, o.allow_ragged_tail);

    let seeds = o
        .multi_seed
        .clone()
        .or(file.multi_seed.clone())
        .unwrap_or_else(|| vec![cfg.seed]);
    if seeds.is_empty() {
        return Err(Error::Config("multi_seed must name at least one seed".into()));
    }

    Ok(Settings {
        cfg,
        fg,
        pg,
        seeds,
        corpus: o.corpus.clone().or(file.corpus),
        out: o.out.clone().or(file.out),
        strip_bio,
        allow_ragged_tail,
        synth: file.synth,
    })
}

fn require_out(settings: &Settings) -> Result<PathBuf> {
    let out = settings
        .out
        .clone()
        .ok_or_else(|| Error::Config("an output directory is required (--out)".into()))?;
    std::fs::create_dir_all(&out)
        .map_err(|e| Error::Data(format!("cannot create {}: {e}", out.display())))?;
    Ok(out)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text)
        .map_err(|e| Error::Data(format!("cannot write {}: {e}", path.display())))
}

/// Loads the experiment corpus: from CoNLL files when a corpus directory is
/// configured, otherwise generated in memory from the `[synth]` section (or
/// the bundled spec as a last resort).
fn load_corpus(settings: &Settings) -> Result<(Vec<TokenSequence>, Vec<TokenSequence>, LabelSet)> {
    if let Some(dir) = &settings.corpus {
        let train_path = dir.join("train.conll");
        let test_path = dir.join("test.conll");
        let read = |p: &Path| {
            std::fs::read_to_string(p)
                .map_err(|e| Error::Data(format!("cannot read corpus {}: {e}", p.display())))
        };
        let train_raw = parse_conll(&read(&train_path)?, settings.strip_bio)?;
        let test_raw = parse_conll(&read(&test_path)?, settings.strip_bio)?;
        let labels = build_label_set(&[&train_raw, &test_raw])?;
        let train = index_corpus(&train_raw, &labels)?;
        let test = index_corpus(&test_raw, &labels)?;
        log::info!(
            "corpus: {} train / {} test sequences from {}",
            train.len(),
            test.len(),
            dir.display()
        );
        Ok((train, test, labels))
    } else {
        let spec = settings.synth.clone().unwrap_or_else(SynthSpec::bundled);
        log::info!("corpus: generated in memory (seed {})", spec.seed);
        generate(&spec)
    }
}

fn schedule_for(settings: &Settings, labels: &LabelSet) -> Result<TaskSchedule> {
    build_schedule(labels, settings.fg, settings.pg, settings.allow_ragged_tail)
}

/// Aggregate over seeds for one method, serialized as
/// `aggregate_<method>.json`.
#[derive(Debug, Serialize, Deserialize)]
pub struct Aggregate {
    pub method: String,
    pub seeds: Vec<u64>,
    pub a_t_mean: f64,
    pub a_t_std: f64,
    pub a_bar_mean: f64,
    pub a_bar_std: f64,
    pub a_t_values: Vec<f64>,
    pub a_bar_values: Vec<f64>,
}

fn confusion_csv(report: &crate::metrics::StepReport, labels: &LabelSet) -> String {
    let visible = report.confusion.num_classes();
    let mut out = String::from("truth");
    for c in 0..visible {
        out.push(',');
        out.push_str(labels.name(c));
    }
    out.push('\n');
    for (t, row) in report.confusion.rows().enumerate() {
        out.push_str(labels.name(t));
        for &n in row {
            out.push_str(&format!(",{n}"));
        }
        out.push('\n');
    }
    out
}

fn curve_csv(reports: &[RunReport]) -> String {
    let mut out = String::from("seed,step,macro_f1\n");
    for r in reports {
        for s in &r.steps {
            out.push_str(&format!("{},{},{}\n", r.seed, s.task_id, s.macro_f1));
        }
    }
    out
}

fn shifts_csv(reports: &[RunReport]) -> String {
    let mut out = String::from("seed,step,e2o,o2e\n");
    for r in reports {
        for s in &r.steps {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.seed, s.task_id, s.e2o_count, s.o2e_count
            ));
        }
    }
    out
}

fn write_method_summaries(out: &Path, method: &str, reports: &[RunReport]) -> Result<Aggregate> {
    let a_t_values: Vec<f64> = reports.iter().map(|r| r.a_t).collect();
    let a_bar_values: Vec<f64> = reports.iter().map(|r| r.a_bar).collect();
    let (a_t_mean, a_t_std) = mean_std(&a_t_values);
    let (a_bar_mean, a_bar_std) = mean_std(&a_bar_values);
    let aggregate = Aggregate {
        method: method.to_string(),
        seeds: reports.iter().map(|r| r.seed).collect(),
        a_t_mean,
        a_t_std,
        a_bar_mean,
        a_bar_std,
        a_t_values,
        a_bar_values,
    };
    write_text(
        &out.join(format!("aggregate_{method}.json")),
        &(serde_json::to_string_pretty(&aggregate)? + "\n"),
    )?;
    write_text(&out.join(format!("curve_{method}.csv")), &curve_csv(reports))?;
    write_text(&out.join(format!("shifts_{method}.csv")), &shifts_csv(reports))?;
    Ok(aggregate)
}

fn cmd_run(args: &RunCmd) -> Result<()> {
    let settings = resolve(&args.overrides)?;
    let out = require_out(&settings)?;
    let (train, test, labels) = load_corpus(&settings)?;
    let schedule = schedule_for(&settings, &labels)?;
    let method = settings.cfg.method;
    let mut reports = Vec::new();
    for &seed in &settings.seeds {
        let cfg = TrainConfig {
            seed,
            ..settings.cfg.clone()
        };
        let result = run_experiment(&train, &test, &labels, &schedule, &cfg)?;
        let report = result.to_report(method, seed);
        println!(
            "{} seed {seed}: final macro F1 {:.4}, mean over steps {:.4}",
            method, report.a_t, report.a_bar
        );
        write_text(
            &out.join(format!("report_{method}_seed{seed}.json")),
            &(serde_json::to_string_pretty(&report)? + "\n"),
        )?;
        for step in &report.steps {
            write_text(
                &out.join(format!(
                    "confusion_{method}_seed{seed}_step{}.csv",
                    step.task_id
                )),
                &confusion_csv(step, &labels),
            )?;
        }
        result
            .state
            .save(&out.join(format!("checkpoint_{method}_seed{seed}.json")))?;
        reports.push(report);
    }
    let aggregate = write_method_summaries(&out, method.name(), &reports)?;
    println!(
        "{} over {} seed(s): final macro F1 {:.4} ± {:.4}, mean over steps {:.4} ± {:.4}",
        method,
        settings.seeds.len(),
        aggregate.a_t_mean,
        aggregate.a_t_std,
        aggregate.a_bar_mean,
        aggregate.a_bar_std
    );
    Ok(())
}

fn cmd_gen(args: &GenCmd) -> Result<()> {
    let settings = resolve(&args.overrides)?;
    let out = require_out(&settings)?;
    let mut spec = settings.synth.clone().unwrap_or_else(SynthSpec::bundled);
    if let Some(seed) = args.overrides.seed {
        spec.seed = seed;
    }
    let (train, test, labels) = generate(&spec)?;
    write_text(&out.join("train.conll"), &corpus_to_conll(&train, &labels))?;
    write_text(&out.join("test.conll"), &corpus_to_conll(&test, &labels))?;
    println!(
        "wrote {} train and {} test sequences over {} entity classes to {}",
        train.len(),
        test.len(),
        labels.entity_count(),
        out.display()
    );
    Ok(())
}

fn cmd_eval(args: &EvalCmd) -> Result<()> {
    let settings = resolve(&args.overrides)?;
    let state = RunState::load(&args.checkpoint)?;
    if state.completed_tasks == 0 {
        return Err(Error::Data(
            "checkpoint has no completed tasks to evaluate".into(),
        ));
    }
    let (_, test, labels) = load_corpus(&settings)?;
    let schedule = schedule_for(&settings, &labels)?;
    let t = state.completed_tasks;
    let pairs = evaluate(&state.model, &test, &schedule, t)?;
    let partition = ClassPartition::for_task(&schedule, t)?;
    let report = step_report(t, &pairs, &partition)?;
    println!(
        "checkpoint after task {t}: macro F1 {:.4} over {} tokens (e2o {}, o2e {})",
        report.macro_f1, report.token_total, report.e2o_count, report.o2e_count
    );
    if let Some(out) = &settings.out {
        std::fs::create_dir_all(out)
            .map_err(|e| Error::Data(format!("cannot create {}: {e}", out.display())))?;
        write_text(
            &out.join(format!("eval_step{t}.json")),
            &(serde_json::to_string_pretty(&report)? + "\n"),
        )?;
    }
    Ok(())
}

fn cmd_report(args: &ReportCmd) -> Result<()> {
    let entries = std::fs::read_dir(&args.dir)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", args.dir.display())))?;
    let mut by_method: BTreeMap<String, Vec<RunReport>> = BTreeMap::new();
    for entry in entries {
        let path = entry.map_err(Error::Io)?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if !(name.starts_with("report_") && name.ends_with(".json")) {
            continue;
        }
        let text = std::fs::read_to_string(&path)
            .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
        let report: RunReport = serde_json::from_str(&text)
            .map_err(|e| Error::Data(format!("malformed report {}: {e}", path.display())))?;
        by_method.entry(report.method.clone()).or_default().push(report);
    }
    if by_method.is_empty() {
        return Err(Error::Data(format!(
            "no report_*.json files in {}",
            args.dir.display()
        )));
    }
    for (method, mut reports) in by_method {
        reports.sort_by_key(|r| r.seed);
        let aggregate = write_method_summaries(&args.dir, &method, &reports)?;
        println!(
            "{method}: {} seed(s), final macro F1 {:.4} ± {:.4}",
            reports.len(),
            aggregate.a_t_mean,
            aggregate.a_t_std
        );
    }
    Ok(())
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 1,
        Error::Data(_) | Error::Shape(_) | Error::Io(_) | Error::Serde(_) => 2,
        Error::Numerical(_) => 3,
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Cmd::Run(args) => cmd_run(&args),
        Cmd::Gen(args) => cmd_gen(&args),
        Cmd::Eval(args) => cmd_eval(&args),
        Cmd::Report(args) => cmd_report(&args),
    }
}

/// Entry point used by the binary; returns the process exit code.
pub fn run() -> i32 {
    let _ = env_logger::try_init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::TrainConfig;

    #[test]
    fn shipped_configs_resolve_to_the_bundled_preset() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
        for method in ["is3", "ft", "kd_only", "no_debias", "no_proto"] {
            let overrides = Overrides {
                config: Some(dir.join(format!("{method}.toml"))),
                ..Overrides::default()
            };
            let settings = resolve(&overrides).unwrap_or_else(|e| panic!("{method}.toml: {e}"));
            let want = TrainConfig {
                method: method.parse().unwrap(),
                ..TrainConfig::bundled()
            };
            assert_eq!(settings.cfg, want, "{method}.toml drifted from the preset");
            assert_eq!(settings.seeds, vec![1, 2, 3]);
            assert_eq!(settings.fg, 2);
            assert_eq!(settings.pg, 2);
            assert_eq!(settings.synth, Some(SynthSpec::bundled()));
        }
    }

    #[test]
    fn flags_override_file_values() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
        let overrides = Overrides {
            config: Some(dir.join("is3.toml")),
            delta: Some(0.25),
            multi_seed: Some(vec![9]),
            ..Overrides::default()
        };
        let settings = resolve(&overrides).unwrap();
        assert_eq!(settings.cfg.hp.delta, 0.25);
        assert_eq!(settings.seeds, vec![9]);
        // Untouched keys keep the file's values.
        assert_eq!(settings.cfg.hp.alpha, TrainConfig::bundled().hp.alpha);
    }
}
