//! The `turntaking` command line.
//!
//! ```text
//! turntaking generate   --out DIR [--config F] [--seed N] [--proclivity exp|sigmoid] [--turns T] [--trial K]
//! turntaking fit        --data DIR --variant pro|exp --out DIR [--config F] [--seed N]
//! turntaking eval       --data DIR [--checkpoint DIR]... [--variants LIST] --out DIR
//! turntaking experiment --out DIR [--config F] [--seed N] [--proclivity P] [--trials K] [--turns T] [--parallel-trials J]
//! turntaking curve      (--checkpoint DIR | --variant nm|hm|true) --out DIR [--proclivity P]
//! ```
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 I/O or malformed
//! data, 4 numerical failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config;
use crate::error::{Error, Result};
use crate::eval::{
    evaluate, init_slot, run_experiment, true_model, Cell, ExperimentConfig, ExperimentReport,
    Method, Metric, TrialResult,
};
use crate::io::{read_dataset, write_dataset};
use crate::manifest::RunManifest;
use crate::proclivity::{rescaled_curve, ScoreModel};
use crate::synthgen::{derived_seed, generate_dataset, TrueProclivity, TrueScoreMap};
use crate::training::{fit, FitConfig, ModelBundle, Variant};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "turntaking", version, about = "Turn-taking models for group conversations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
struct Shared {
    /// Master seed; overrides `seed` in the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a synthetic dataset with ground truth.
    Generate {
        #[command(flatten)]
        shared: Shared,
        #[arg(long)]
        proclivity: Option<String>,
        #[arg(long)]
        turns: Option<usize>,
        /// Trial index selecting the random substreams.
        #[arg(long, default_value_t = 0)]
        trial: u64,
    },
    /// Fit a learnable variant on a dataset's train and val splits.
    Fit {
        #[command(flatten)]
        shared: Shared,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        variant: String,
    },
    /// Evaluate variants on a dataset's test split.
    Eval {
        #[command(flatten)]
        shared: Shared,
        #[arg(long)]
        data: PathBuf,
        /// Checkpoint directory written by `fit`; repeatable.
        #[arg(long)]
        checkpoint: Vec<PathBuf>,
        /// Comma-separated methods; defaults to the checkpoints plus nm, hm
        /// and true (when ground truth is present).
        #[arg(long, value_delimiter = ',')]
        variants: Vec<String>,
    },
    /// Run the full multi-trial comparison.
    Experiment {
        #[command(flatten)]
        shared: Shared,
        #[arg(long)]
        proclivity: Option<String>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        turns: Option<usize>,
        #[arg(long = "parallel-trials")]
        parallel_trials: Option<usize>,
    },
    /// Export a rescaled proclivity curve.
    Curve {
        #[command(flatten)]
        shared: Shared,
        #[arg(long, conflicts_with = "variant", required_unless_present = "variant")]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        variant: Option<String>,
        #[arg(long)]
        proclivity: Option<String>,
    },
}

/// Maps an error to its exit code.
pub fn exit_code(error: &Error) -> i32 {
    match error {
        e if e.is_numeric() => EXIT_NUMERIC,
        Error::Io { .. } | Error::Csv { .. } | Error::Format { .. } => EXIT_IO,
        _ => EXIT_USAGE,
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the exit code. Messages go to stdout, errors to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(message) => {
            print!("{message}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(command: Command) -> Result<String> {
    match command {
        Command::Generate {
            shared,
            proclivity,
            turns,
            trial,
        } => {
            let mut config = resolve(&shared)?;
            override_synth(&mut config, proclivity.as_deref(), turns, None)?;
            cmd_generate(&config, trial, &shared.out)
        }
        Command::Fit {
            shared,
            data,
            variant,
        } => {
            let config = resolve(&shared)?;
            cmd_fit(&config, &data, variant.parse()?, &shared.out)
        }
        Command::Eval {
            shared,
            data,
            checkpoint,
            variants,
        } => {
            let config = resolve(&shared)?;
            let methods = variants
                .iter()
                .map(|s| s.trim().parse())
                .collect::<Result<Vec<Method>>>()?;
            cmd_eval(&config, &data, &checkpoint, &methods, &shared.out)
        }
        Command::Experiment {
            shared,
            proclivity,
            trials,
            turns,
            parallel_trials,
        } => {
            let mut config = resolve(&shared)?;
            override_synth(&mut config, proclivity.as_deref(), turns, trials)?;
            if let Some(j) = parallel_trials {
                config.parallel_trials = j;
            }
            config.validate()?;
            cmd_experiment(&config, &shared.out)
        }
        Command::Curve {
            shared,
            checkpoint,
            variant,
            proclivity,
        } => {
            let mut config = resolve(&shared)?;
            override_synth(&mut config, proclivity.as_deref(), None, None)?;
            let source = match (checkpoint, variant) {
                (Some(dir), _) => CurveSource::Checkpoint(dir),
                (None, Some(v)) => CurveSource::Method(v.parse()?),
                (None, None) => unreachable!("clap requires one of the two"),
            };
            cmd_curve(&config, &source, &shared.out)
        }
    }
}

fn resolve(shared: &Shared) -> Result<ExperimentConfig> {
    let mut config = match &shared.config {
        Some(path) => config::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = shared.seed {
        config.synth.seed = seed;
    }
    Ok(config)
}

fn override_synth(
    config: &mut ExperimentConfig,
    proclivity: Option<&str>,
    turns: Option<usize>,
    trials: Option<usize>,
) -> Result<()> {
    if let Some(p) = proclivity {
        config.synth.proclivity = TrueProclivity::parse(p).ok_or_else(|| {
            Error::InvalidConfig(format!("unknown proclivity {p:?} (expected exp or sigmoid)"))
        })?;
    }
    if let Some(t) = turns {
        config.synth.turns = t;
    }
    if let Some(k) = trials {
        config.synth.trials = k;
    }
    config.synth.validate()
}

fn finish(mut manifest: RunManifest, out: &Path) -> Result<()> {
    manifest.collect_artifacts(out)?;
    manifest.append(out)
}

fn begin(command: &str, config: &ExperimentConfig, out: &Path) -> Result<RunManifest> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    Ok(RunManifest::begin(command, config.synth.seed, &config::to_text(config)))
}

/// Writes one trial's dataset under `out`.
pub fn cmd_generate(config: &ExperimentConfig, trial: u64, out: &Path) -> Result<String> {
    let manifest = begin("generate", config, out)?;
    let dataset = generate_dataset(&config.synth, trial)?;
    write_dataset(out, &dataset)?;
    finish(manifest, out)?;
    Ok(format!(
        "wrote {} train, {} val and {} test groups ({} proclivity) to {}\n",
        dataset.train.len(),
        dataset.validation.len(),
        dataset.test.len(),
        config.synth.proclivity.name(),
        out.display()
    ))
}

/// Fit configuration with the network seed derived from the master seed,
/// matching trial 0 of an experiment.
pub fn fit_config_for(config: &ExperimentConfig, variant: Variant) -> FitConfig {
    FitConfig {
        seed: derived_seed(config.synth.seed, 0, init_slot(variant)),
        ..config.fit.clone()
    }
}

/// Fits `variant` and writes its checkpoint plus `history.csv` under `out`.
pub fn cmd_fit(config: &ExperimentConfig, data: &Path, variant: Variant, out: &Path) -> Result<String> {
    if !variant.is_learnable() {
        return Err(Error::NothingToFit(variant.name().into()));
    }
    let dataset = read_dataset(data)?;
    let training = dataset.training_set();
    let fit_config = fit_config_for(config, variant);
    let manifest = begin("fit", config, out)?;
    let initial = ModelBundle::new(variant, &fit_config)?;
    let outcome = fit(&initial, &training, &fit_config)?;
    outcome.bundle.save_checkpoint(out)?;
    let history = out.join("history.csv");
    std::fs::write(&history, outcome.history_csv()).map_err(|e| Error::io(&history, e))?;
    finish(manifest, out)?;
    Ok(format!(
        "{variant}: best validation loss {:.6} at outer iteration {} of {}\n",
        outcome.best_val_loss(),
        outcome.best_iteration,
        outcome.history.len() - 1
    ))
}

/// Evaluates methods on the test split; writes `report.csv` and `summary.csv`.
pub fn cmd_eval(
    config: &ExperimentConfig,
    data: &Path,
    checkpoints: &[PathBuf],
    methods: &[Method],
    out: &Path,
) -> Result<String> {
    let dataset = read_dataset(data)?;
    if dataset.test.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "{} has no test split",
            data.display()
        )));
    }
    let mut bundles = Vec::new();
    for dir in checkpoints {
        let bundle = ModelBundle::load_checkpoint(dir)?;
        if bundles.iter().any(|b: &ModelBundle| b.variant() == bundle.variant()) {
            return Err(Error::InvalidConfig(format!(
                "two checkpoints for variant {}",
                bundle.variant()
            )));
        }
        bundles.push(bundle);
    }
    let methods: Vec<Method> = if methods.is_empty() {
        let has_truth = dataset.test.iter().all(|g| g.truth.is_some());
        let mut m: Vec<Method> = has_truth.then_some(Method::True).into_iter().collect();
        m.extend(bundles.iter().map(|b| Method::Model(b.variant())));
        m.extend([Method::Model(Variant::Nm), Method::Model(Variant::Hm)]);
        m
    } else {
        methods.to_vec()
    };

    let manifest = begin("eval", config, out)?;
    let mut cells = Vec::new();
    for &method in &methods {
        let evaluation = match method {
            Method::True => evaluate(&true_model(config.synth.proclivity.proclivity()), &dataset.test)?,
            Method::Model(Variant::Nm) => evaluate(&ModelBundle::no_memory(), &dataset.test)?,
            Method::Model(Variant::Hm) => evaluate(&ModelBundle::high_memory(), &dataset.test)?,
            Method::Model(v) => {
                let bundle = bundles.iter().find(|b| b.variant() == v).ok_or_else(|| {
                    Error::InvalidConfig(format!("variant {v} needs a --checkpoint"))
                })?;
                evaluate(bundle, &dataset.test)?
            }
        };
        cells.push(Cell {
            method,
            outcome: Ok(evaluation),
        });
    }
    let report = ExperimentReport {
        config: ExperimentConfig {
            methods: methods.clone(),
            ..config.clone()
        },
        trials: vec![TrialResult {
            trial: 0,
            cells,
            curves: Vec::new(),
            fits: Vec::new(),
        }],
    };
    for (name, text) in [("report.csv", report.report_csv()), ("summary.csv", report.summary_csv())] {
        let path = out.join(name);
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    finish(manifest, out)?;
    Ok(loss_table(&report))
}

fn loss_table(report: &ExperimentReport) -> String {
    let mut out = format!("{:<8}{:>12}{:>12}\n", "method", "loss", "loss_turn");
    for &m in &report.config.methods {
        let (Some(a), Some(b)) = (report.median(m, Metric::Loss), report.median(m, Metric::TurnLoss))
        else {
            let _ = writeln!(out, "{:<8}{:>12}{:>12}", m.name(), "failed", "failed");
            continue;
        };
        let _ = writeln!(out, "{:<8}{a:>12.6}{b:>12.6}", m.name());
    }
    out
}

/// Runs every trial and writes the report tree under `out`. Fails with a
/// numerical error only if every trial failed.
pub fn cmd_experiment(config: &ExperimentConfig, out: &Path) -> Result<String> {
    let manifest = begin("experiment", config, out)?;
    let report = run_experiment(config)?;
    report.write(out)?;
    finish(manifest, out)?;
    if report.all_failed() {
        return Err(Error::Divergence {
            iteration: 0,
            detail: format!("all {} trials failed", report.trials.len()),
        });
    }
    let failures = report.failures();
    let mut text = format!(
        "{} trials ({} proclivity), medians over trials:\n",
        report.trials.len(),
        config.synth.proclivity.name()
    );
    text.push_str(&loss_table(&report));
    if !failures.is_empty() {
        let _ = writeln!(text, "{} failed cells, see failures.txt", failures.len());
    }
    Ok(text)
}

/// What `curve` rescales.
#[derive(Debug, Clone, PartialEq)]
pub enum CurveSource {
    Checkpoint(PathBuf),
    Method(Method),
}

/// Writes `curve_<method>.csv` under `out`.
pub fn cmd_curve(config: &ExperimentConfig, source: &CurveSource, out: &Path) -> Result<String> {
    let truth = TrueScoreMap {
        proclivity: config.synth.proclivity.proclivity(),
    };
    let (name, model): (String, Box<dyn ScoreModel>) = match source {
        CurveSource::Checkpoint(dir) => {
            let bundle = ModelBundle::load_checkpoint(dir)?;
            (bundle.variant().name().to_string(), Box::new(bundle))
        }
        CurveSource::Method(Method::True) => ("true".to_string(), Box::new(truth)),
        CurveSource::Method(Method::Model(Variant::Nm)) => {
            ("nm".to_string(), Box::new(ModelBundle::no_memory()))
        }
        CurveSource::Method(Method::Model(Variant::Hm)) => {
            ("hm".to_string(), Box::new(ModelBundle::high_memory()))
        }
        CurveSource::Method(Method::Model(v)) => {
            return Err(Error::InvalidConfig(format!(
                "variant {v} is learned; pass --checkpoint"
            )))
        }
    };
    let manifest = begin("curve", config, out)?;
    let curve = rescaled_curve(model.as_ref(), &config.curve_traits, &config.curve_gaps)?;
    let path = out.join(format!("curve_{name}.csv"));
    std::fs::write(&path, curve.to_csv()).map_err(|e| Error::io(&path, e))?;
    finish(manifest, out)?;
    Ok(format!("wrote {}\n", path.display()))
}
