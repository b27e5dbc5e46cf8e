//! Test-time evaluation and multi-trial experiments.

use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{likelihood_sequence, turn_log_losses, class_weights, ScoreParams};
use crate::proclivity::{
    default_gap_grid, default_trait_grid, rescaled_curve, Proclivity, ProclivityCurve,
};
use crate::synthgen::{derived_seed, generate_dataset, SynthConfig, SynthGroup, TrueScoreMap};
use crate::training::{fit, FitConfig, FitOutcome, Group, ModelBundle, Variant};

/// Anything that can produce speaking scores for a test group.
pub trait Scorer {
    fn group_scores(&self, group: &EvalGroup) -> Result<ScoreParams>;
    fn proclivity(&self) -> &Proclivity;
}

/// A test group, with ground truth when it is known.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalGroup {
    pub group: Group,
    pub truth: Option<ScoreParams>,
}

impl From<&SynthGroup> for EvalGroup {
    fn from(g: &SynthGroup) -> Self {
        Self {
            group: g.group.clone(),
            truth: Some(g.truth.clone()),
        }
    }
}

impl From<Group> for EvalGroup {
    fn from(group: Group) -> Self {
        Self { group, truth: None }
    }
}

impl Scorer for ModelBundle {
    fn group_scores(&self, group: &EvalGroup) -> Result<ScoreParams> {
        self.predict_scores(&group.group.roster)
    }

    fn proclivity(&self) -> &Proclivity {
        crate::proclivity::ScoreModel::proclivity(self)
    }
}

/// Evaluator that uses each group's ground-truth scores directly.
#[derive(Debug, Clone, PartialEq)]
pub struct TrueModel {
    proclivity: Proclivity,
}

pub fn true_model(proclivity: Proclivity) -> TrueModel {
    TrueModel { proclivity }
}

impl Scorer for TrueModel {
    fn group_scores(&self, group: &EvalGroup) -> Result<ScoreParams> {
        group
            .truth
            .clone()
            .ok_or(Error::MissingGroundTruth(group.group.id))
    }

    fn proclivity(&self) -> &Proclivity {
        &self.proclivity
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    /// Mean per-turn negative log-likelihood.
    Loss,
    /// Mean per-turn class-weighted negative log-likelihood.
    TurnLoss,
}

impl Metric {
    pub const ALL: [Metric; 2] = [Metric::Loss, Metric::TurnLoss];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Loss => "loss",
            Metric::TurnLoss => "loss_turn",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupLoss {
    pub group_id: u64,
    pub turns: usize,
    pub loss: f64,
    pub turn_loss: f64,
}

impl GroupLoss {
    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Loss => self.loss,
            Metric::TurnLoss => self.turn_loss,
        }
    }
}

/// Per-group losses of one model on one test set.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub groups: Vec<GroupLoss>,
}

impl Evaluation {
    /// Turn-weighted mean across groups.
    pub fn aggregate(&self, metric: Metric) -> f64 {
        let turns: usize = self.groups.iter().map(|g| g.turns).sum();
        if turns == 0 {
            return 0.0;
        }
        self.groups
            .iter()
            .map(|g| g.get(metric) * g.turns as f64)
            .sum::<f64>()
            / turns as f64
    }

    /// Plain sum of per-group values.
    pub fn sum(&self, metric: Metric) -> f64 {
        self.groups.iter().map(|g| g.get(metric)).sum()
    }
}

/// Scores every test group and returns both losses per group.
pub fn evaluate(scorer: &dyn Scorer, groups: &[EvalGroup]) -> Result<Evaluation> {
    let groups = groups
        .iter()
        .map(|g| {
            let conversation = &g.group.conversation;
            let scores = scorer.group_scores(g)?;
            let u = likelihood_sequence(&scores, scorer.proclivity(), conversation)?;
            let losses = turn_log_losses(&u, conversation)?;
            let weights = class_weights(conversation);
            let turns = losses.len();
            let denom = turns.max(1) as f64;
            let loss = losses.iter().sum::<f64>() / denom;
            let turn_loss = losses
                .iter()
                .zip(weights.weights())
                .map(|(l, w)| l * w)
                .sum::<f64>()
                / denom;
            Ok(GroupLoss {
                group_id: g.group.id,
                turns,
                loss,
                turn_loss,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Evaluation { groups })
}

/// A row of the comparison: the ground truth or one model variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    True,
    Model(Variant),
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::True,
        Method::Model(Variant::Pro),
        Method::Model(Variant::Exp),
        Method::Model(Variant::Nm),
        Method::Model(Variant::Hm),
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::True => "true",
            Method::Model(v) => v.name(),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("true") {
            Ok(Method::True)
        } else {
            s.parse().map(Method::Model)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub synth: SynthConfig,
    pub fit: FitConfig,
    pub methods: Vec<Method>,
    pub curve_gaps: Vec<i64>,
    pub curve_traits: Vec<f64>,
    /// Upper bound on trials run concurrently.
    pub parallel_trials: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            synth: SynthConfig::default(),
            fit: FitConfig::default(),
            methods: Method::ALL.to_vec(),
            curve_gaps: default_gap_grid(),
            curve_traits: default_trait_grid(),
            parallel_trials: 1,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.fit.validate()?;
        if self.methods.is_empty() {
            return Err(Error::InvalidConfig("at least one variant is required".into()));
        }
        if self.curve_gaps.is_empty() || self.curve_gaps.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig(
                "curve gaps must be a nonempty increasing grid".into(),
            ));
        }
        if self.curve_traits.is_empty() {
            return Err(Error::InvalidConfig("empty curve trait grid".into()));
        }
        if self.parallel_trials == 0 {
            return Err(Error::InvalidConfig("parallel_trials must be at least 1".into()));
        }
        Ok(())
    }
}

/// Evaluation of one method in one trial, or why it failed.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub method: Method,
    pub outcome: std::result::Result<Evaluation, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub trial: u64,
    pub cells: Vec<Cell>,
    pub curves: Vec<(Method, ProclivityCurve)>,
    pub fits: Vec<(Variant, FitOutcome)>,
}

impl TrialResult {
    pub fn cell(&self, method: Method) -> Option<&Cell> {
        self.cells.iter().find(|c| c.method == method)
    }

    pub fn value(&self, method: Method, metric: Metric) -> Option<f64> {
        self.cell(method)?
            .outcome
            .as_ref()
            .ok()
            .map(|e| e.aggregate(metric))
    }

    pub fn curve(&self, method: Method) -> Option<&ProclivityCurve> {
        self.curves.iter().find(|(m, _)| *m == method).map(|(_, c)| c)
    }

    pub fn is_failed(&self) -> bool {
        self.cells.iter().all(|c| c.outcome.is_err())
    }
}

/// Seed slot of a variant's network initialization inside a trial.
pub fn init_slot(variant: Variant) -> u64 {
    match variant {
        Variant::Pro => 1,
        Variant::Exp => 2,
        Variant::Nm => 3,
        Variant::Hm => 4,
    }
}

/// Runs one trial: generate, fit the learnable variants, evaluate and
/// compute rescaled curves.
pub fn run_trial(config: &ExperimentConfig, trial: u64) -> TrialResult {
    let mut result = TrialResult {
        trial,
        cells: Vec::new(),
        curves: Vec::new(),
        fits: Vec::new(),
    };
    let dataset = match generate_dataset(&config.synth, trial) {
        Ok(d) => d,
        Err(e) => {
            result.cells = config
                .methods
                .iter()
                .map(|&method| Cell {
                    method,
                    outcome: Err(format!("data generation failed: {e}")),
                })
                .collect();
            return result;
        }
    };
    let test: Vec<EvalGroup> = dataset.test.iter().map(EvalGroup::from).collect();
    let training = dataset.training_set();
    let true_proclivity = config.synth.proclivity.proclivity();

    for &method in &config.methods {
        let curve_and_eval: Result<(Evaluation, ProclivityCurve)> = match method {
            Method::True => {
                let scorer = true_model(true_proclivity.clone());
                let map = TrueScoreMap {
                    proclivity: true_proclivity.clone(),
                };
                evaluate(&scorer, &test).and_then(|e| {
                    rescaled_curve(&map, &config.curve_traits, &config.curve_gaps)
                        .map(|c| (e, c))
                })
            }
            Method::Model(variant) => {
                let fitted = if variant.is_learnable() {
                    let fit_config = FitConfig {
                        seed: derived_seed(config.synth.seed, trial, init_slot(variant)),
                        ..config.fit.clone()
                    };
                    ModelBundle::new(variant, &fit_config)
                        .and_then(|b| fit(&b, &training, &fit_config))
                        .map(|outcome| {
                            let bundle = outcome.bundle.clone();
                            result.fits.push((variant, outcome));
                            bundle
                        })
                } else if variant == Variant::Nm {
                    Ok(ModelBundle::no_memory())
                } else {
                    Ok(ModelBundle::high_memory())
                };
                fitted.and_then(|bundle| {
                    let e = evaluate(&bundle, &test)?;
                    let c = rescaled_curve(&bundle, &config.curve_traits, &config.curve_gaps)?;
                    Ok((e, c))
                })
            }
        };
        match curve_and_eval {
            Ok((evaluation, curve)) => {
                result.cells.push(Cell {
                    method,
                    outcome: Ok(evaluation),
                });
                result.curves.push((method, curve));
            }
            Err(e) => result.cells.push(Cell {
                method,
                outcome: Err(e.to_string()),
            }),
        }
    }
    result
}

/// All trials of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub trials: Vec<TrialResult>,
}

/// Runs every trial, at most `parallel_trials` at a time. Results are
/// ordered by trial regardless of scheduling.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let trials: Vec<u64> = (0..config.synth.trials as u64).collect();
    let results = if config.parallel_trials > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.parallel_trials)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
        pool.install(|| {
            trials
                .par_iter()
                .map(|&t| run_trial(config, t))
                .collect::<Vec<_>>()
        })
    } else {
        trials.iter().map(|&t| run_trial(config, t)).collect()
    };
    Ok(ExperimentReport {
        config: config.clone(),
        trials: results,
    })
}

/// Box-plot statistics with whiskers at 1.5 IQR.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxStats {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub lo_whisker: f64,
    pub hi_whisker: f64,
}

/// Linearly interpolated quantile of sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl BoxStats {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        let mut sorted: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
        if sorted.is_empty() {
            return None;
        }
        sorted.sort_by(f64::total_cmp);
        let q1 = quantile(&sorted, 0.25);
        let q3 = quantile(&sorted, 0.75);
        let iqr = q3 - q1;
        let lo_fence = q1 - 1.5 * iqr;
        let hi_fence = q3 + 1.5 * iqr;
        let lo_whisker = *sorted.iter().find(|&&v| v >= lo_fence).expect("q1 within fence");
        let hi_whisker = *sorted.iter().rev().find(|&&v| v <= hi_fence).expect("q3 within fence");
        Some(Self {
            median: quantile(&sorted, 0.5),
            q1,
            q3,
            lo_whisker,
            hi_whisker,
        })
    }
}

impl ExperimentReport {
    /// Aggregated test values of `method` over successful trials.
    pub fn values(&self, method: Method, metric: Metric) -> Vec<f64> {
        self.trials
            .iter()
            .filter_map(|t| t.value(method, metric))
            .collect()
    }

    pub fn stats(&self, method: Method, metric: Metric) -> Option<BoxStats> {
        BoxStats::from_values(&self.values(method, metric))
    }

    pub fn median(&self, method: Method, metric: Metric) -> Option<f64> {
        self.stats(method, metric).map(|s| s.median)
    }

    /// Pointwise mean of a method's curves over trials.
    pub fn mean_curve(&self, method: Method) -> Option<ProclivityCurve> {
        let curves: Vec<ProclivityCurve> = self
            .trials
            .iter()
            .filter_map(|t| t.curve(method).cloned())
            .collect();
        ProclivityCurve::mean(&curves)
    }

    pub fn all_failed(&self) -> bool {
        self.trials.iter().all(TrialResult::is_failed)
    }

    /// `trial,variant,metric,group_id,value`. Besides one row per test
    /// group, `group_id = all` holds the turn-weighted mean and
    /// `group_id = sum` the plain sum; failed cells have value `failed`.
    pub fn report_csv(&self) -> String {
        let mut out = String::from("trial,variant,metric,group_id,value\n");
        for trial in &self.trials {
            for cell in &trial.cells {
                for metric in Metric::ALL {
                    let prefix = format!("{},{},{}", trial.trial, cell.method, metric.name());
                    match &cell.outcome {
                        Ok(e) => {
                            for g in &e.groups {
                                let _ = writeln!(out, "{prefix},{},{}", g.group_id, g.get(metric));
                            }
                            let _ = writeln!(out, "{prefix},all,{}", e.aggregate(metric));
                            let _ = writeln!(out, "{prefix},sum,{}", e.sum(metric));
                        }
                        Err(_) => {
                            let _ = writeln!(out, "{prefix},all,failed");
                        }
                    }
                }
            }
        }
        out
    }

    /// `variant,metric,median,q1,q3,lo_whisker,hi_whisker` over trials.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("variant,metric,median,q1,q3,lo_whisker,hi_whisker\n");
        for &method in &self.config.methods {
            for metric in Metric::ALL {
                match self.stats(method, metric) {
                    Some(s) => {
                        let _ = writeln!(
                            out,
                            "{method},{},{},{},{},{},{}",
                            metric.name(),
                            s.median,
                            s.q1,
                            s.q3,
                            s.lo_whisker,
                            s.hi_whisker
                        );
                    }
                    None => {
                        let _ = writeln!(out, "{method},{},,,,,", metric.name());
                    }
                }
            }
        }
        out
    }

    /// Human-readable failure log, one line per failed cell.
    pub fn failures(&self) -> Vec<String> {
        self.trials
            .iter()
            .flat_map(|t| {
                t.cells.iter().filter_map(move |c| {
                    c.outcome
                        .as_ref()
                        .err()
                        .map(|e| format!("trial {} {}: {e}", t.trial, c.method))
                })
            })
            .collect()
    }

    /// Writes `report.csv`, `summary.csv`, per-trial and mean curves under
    /// `curves/`, and fit histories under `histories/`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let write = |path: &Path, text: &str| -> Result<()> {
            std::fs::write(path, text).map_err(|e| Error::io(path, e))
        };
        let curves_dir = dir.join("curves");
        let histories_dir = dir.join("histories");
        for d in [dir, &curves_dir, &histories_dir] {
            std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
        }
        write(&dir.join("report.csv"), &self.report_csv())?;
        write(&dir.join("summary.csv"), &self.summary_csv())?;
        for trial in &self.trials {
            for (method, curve) in &trial.curves {
                let path = curves_dir.join(format!("trial{:02}_{method}.csv", trial.trial));
                write(&path, &curve.to_csv())?;
            }
            for (variant, outcome) in &trial.fits {
                let path = histories_dir.join(format!("trial{:02}_{variant}.csv", trial.trial));
                write(&path, &outcome.history_csv())?;
            }
        }
        for &method in &self.config.methods {
            if let Some(curve) = self.mean_curve(method) {
                write(&curves_dir.join(format!("mean_{method}.csv")), &curve.to_csv())?;
            }
        }
        let failures = self.failures();
        if !failures.is_empty() {
            write(&dir.join("failures.txt"), &(failures.join("\n") + "\n"))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Conversation, Roster};

    fn uniform_group(id: u64, turns: usize, n: usize) -> EvalGroup {
        // cycle through members so no one repeats
        let speakers = (0..turns).map(|t| t % n).collect();
        let conversation = Conversation::new(speakers, n).unwrap();
        let roster = Roster::new(vec![0.5; n]).unwrap();
        EvalGroup::from(Group::new(id, roster, conversation).unwrap())
    }

    #[test]
    fn no_memory_loss_is_analytic() {
        let groups = vec![uniform_group(1, 800, 5), uniform_group(2, 800, 5)];
        let e = evaluate(&ModelBundle::no_memory(), &groups).unwrap();
        let expected = 4f64.ln() + (5f64.ln() - 4f64.ln()) / 800.0;
        for g in &e.groups {
            assert!((g.loss - expected).abs() < 1e-12);
        }
        assert!((e.aggregate(Metric::Loss) - expected).abs() < 1e-12);
        assert!((e.sum(Metric::Loss) - 2.0 * expected).abs() < 1e-12);
    }

    #[test]
    fn aggregate_is_turn_weighted() {
        let e = Evaluation {
            groups: vec![
                GroupLoss {
                    group_id: 1,
                    turns: 100,
                    loss: 1.0,
                    turn_loss: 2.0,
                },
                GroupLoss {
                    group_id: 2,
                    turns: 300,
                    loss: 2.0,
                    turn_loss: 1.0,
                },
            ],
        };
        assert!((e.aggregate(Metric::Loss) - 1.75).abs() < 1e-15);
        assert!((e.aggregate(Metric::TurnLoss) - 1.25).abs() < 1e-15);
        assert_eq!(e.sum(Metric::Loss), 3.0);
    }

    #[test]
    fn true_model_needs_ground_truth() {
        let groups = vec![uniform_group(7, 10, 3)];
        let err = evaluate(&true_model(Proclivity::ExpDecay), &groups).unwrap_err();
        assert!(matches!(err, Error::MissingGroundTruth(7)));
    }

    #[test]
    fn box_stats() {
        let s = BoxStats::from_values(&[1.0, 2.0, 3.0, 4.0, 100.0]).unwrap();
        assert_eq!(s.median, 3.0);
        assert_eq!(s.q1, 2.0);
        assert_eq!(s.q3, 4.0);
        assert_eq!(s.lo_whisker, 1.0);
        assert_eq!(s.hi_whisker, 4.0);
        assert!(BoxStats::from_values(&[]).is_none());
        assert_eq!(BoxStats::from_values(&[2.0, 1.0]).unwrap().median, 1.5);
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
    }

    fn tiny_config() -> ExperimentConfig {
        ExperimentConfig {
            synth: SynthConfig {
                train_groups: 2,
                val_groups: 1,
                test_groups: 2,
                turns: 60,
                trials: 2,
                seed: 5,
                ..SynthConfig::default()
            },
            fit: FitConfig {
                max_outer: 3,
                hidden_layers: vec![4],
                ..FitConfig::default()
            },
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn experiment_is_deterministic_and_order_free() {
        let config = tiny_config();
        let a = run_experiment(&config).unwrap();
        let parallel = ExperimentConfig {
            parallel_trials: 2,
            ..config.clone()
        };
        let b = run_experiment(&parallel).unwrap();
        assert_eq!(a.report_csv(), b.report_csv());
        assert_eq!(a.summary_csv(), b.summary_csv());

        let mut reordered = config.clone();
        reordered.methods.reverse();
        let c = run_experiment(&reordered).unwrap();
        for m in Method::ALL {
            for metric in Metric::ALL {
                assert_eq!(a.values(m, metric), c.values(m, metric));
            }
        }
        assert_eq!(a.trials.len(), 2);
        assert!(!a.all_failed());
        assert!(a.trials.iter().all(|t| t.fits.len() == 2));
    }

    #[test]
    fn report_contains_every_cell() {
        let report = run_experiment(&tiny_config()).unwrap();
        let csv = report.report_csv();
        for t in 0..2 {
            for m in Method::ALL {
                for metric in Metric::ALL {
                    let key = format!("{t},{m},{},all,", metric.name());
                    assert!(csv.contains(&key), "missing {key}");
                }
            }
        }
        let dir = tempfile::tempdir().unwrap();
        report.write(dir.path()).unwrap();
        assert!(dir.path().join("curves/trial00_pro.csv").exists());
        assert!(dir.path().join("curves/mean_true.csv").exists());
        assert!(dir.path().join("histories/trial01_exp.csv").exists());
    }
}
