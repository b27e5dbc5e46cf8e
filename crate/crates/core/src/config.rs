//! Flat `key = value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Every key is
//! optional; missing keys keep their defaults. Unknown or repeated keys and
//! unparsable values are reported with their line number.
//!
//! ```text
//! # data
//! seed = 7
//! trials = 10
//! train_groups = 10
//! val_groups = 5
//! test_groups = 5
//! members = 5
//! turns = 800
//! trait_min = 0.1
//! trait_max = 1
//! proclivity = exp          # exp | sigmoid
//!
//! # fitting
//! step = 0.05
//! max_outer = 200
//! score_epochs = 5
//! proclivity_epochs = 5
//! patience = 20
//! floor = 1e-8
//! clip_norm = 10
//! hidden_layers = 16,16
//! activation = tanh         # tanh | sigmoid
//!
//! # experiment
//! methods = true,pro,exp,nm,hm
//! curve_gaps = 2..40        # inclusive range or comma list
//! curve_trait_points = 50
//! parallel_trials = 1
//! ```

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::eval::{ExperimentConfig, Method};
use crate::neural::Activation;
use crate::proclivity::trait_grid;
use crate::synthgen::{TrueProclivity, TRAIT_MAX, TRAIT_MIN};

/// Every recognized key, in the order [`to_text`] writes them.
pub const KEYS: [&str; 23] = [
    "seed",
    "trials",
    "train_groups",
    "val_groups",
    "test_groups",
    "members",
    "turns",
    "trait_min",
    "trait_max",
    "proclivity",
    "step",
    "max_outer",
    "score_epochs",
    "proclivity_epochs",
    "patience",
    "floor",
    "clip_norm",
    "hidden_layers",
    "activation",
    "methods",
    "curve_gaps",
    "curve_trait_points",
    "parallel_trials",
];

fn number<T: FromStr>(value: &str) -> std::result::Result<T, String> {
    value
        .parse()
        .map_err(|_| format!("cannot parse {value:?} as a number"))
}

fn list<T: FromStr>(value: &str) -> std::result::Result<Vec<T>, String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(number)
        .collect()
}

fn gap_grid(value: &str) -> std::result::Result<Vec<i64>, String> {
    match value.split_once("..") {
        Some((lo, hi)) => {
            let lo: i64 = number(lo.trim())?;
            let hi: i64 = number(hi.trim())?;
            if lo > hi {
                return Err(format!("empty gap range {lo}..{hi}"));
            }
            Ok((lo..=hi).collect())
        }
        None => list(value),
    }
}

/// Applies one `key = value` setting.
pub fn apply(config: &mut ExperimentConfig, key: &str, value: &str) -> std::result::Result<(), String> {
    let synth = &mut config.synth;
    let fit = &mut config.fit;
    match key {
        "seed" => synth.seed = number(value)?,
        "trials" => synth.trials = number(value)?,
        "train_groups" => synth.train_groups = number(value)?,
        "val_groups" => synth.val_groups = number(value)?,
        "test_groups" => synth.test_groups = number(value)?,
        "members" => synth.members = number(value)?,
        "turns" => synth.turns = number(value)?,
        "trait_min" => synth.trait_min = number(value)?,
        "trait_max" => synth.trait_max = number(value)?,
        "proclivity" => {
            synth.proclivity = TrueProclivity::parse(value)
                .ok_or_else(|| format!("unknown proclivity {value:?} (expected exp or sigmoid)"))?
        }
        "step" => fit.step = number(value)?,
        "max_outer" => fit.max_outer = number(value)?,
        "score_epochs" => fit.score_epochs = number(value)?,
        "proclivity_epochs" => fit.proclivity_epochs = number(value)?,
        "patience" => fit.patience = number(value)?,
        "floor" => fit.floor = number(value)?,
        "clip_norm" => fit.clip_norm = number(value)?,
        "hidden_layers" => fit.hidden_layers = list(value)?,
        "activation" => {
            fit.activation = Activation::parse(value)
                .ok_or_else(|| format!("unknown activation {value:?} (expected tanh or sigmoid)"))?
        }
        "methods" => {
            config.methods = value
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<Method>().map_err(|e| e.to_string()))
                .collect::<std::result::Result<_, _>>()?
        }
        "curve_gaps" => config.curve_gaps = gap_grid(value)?,
        "curve_trait_points" => {
            config.curve_traits = trait_grid(TRAIT_MIN, TRAIT_MAX, number(value)?)
        }
        "parallel_trials" => config.parallel_trials = number(value)?,
        _ => return Err(format!("unknown key {key:?}")),
    }
    Ok(())
}

/// Parses config text on top of the defaults. `path` only labels errors.
pub fn parse(text: &str, path: &Path) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::default();
    let mut seen = HashSet::new();
    let fail = |line: usize, message: String| Error::ConfigLine {
        path: path.to_path_buf(),
        line,
        message,
    };
    for (index, raw) in text.lines().enumerate() {
        let line_no = index + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| fail(line_no, format!("expected `key = value`, found {line:?}")))?;
        let (key, value) = (key.trim(), value.trim());
        if !seen.insert(key.to_string()) {
            return Err(fail(line_no, format!("duplicate key {key:?}")));
        }
        apply(&mut config, key, value).map_err(|m| fail(line_no, m))?;
    }
    config.validate().map_err(|e| fail(0, e.to_string()))?;
    Ok(config)
}

/// Reads and parses a config file.
pub fn load(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::ConfigLine {
        path: path.to_path_buf(),
        line: 0,
        message: format!("cannot read config: {e}"),
    })?;
    parse(&text, path)
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

/// Writes every key. Parsing the result reproduces `config` when its trait
/// grid is the default-range grid produced by `curve_trait_points`.
pub fn to_text(config: &ExperimentConfig) -> String {
    let s = &config.synth;
    let f = &config.fit;
    let gaps = match (config.curve_gaps.first(), config.curve_gaps.last()) {
        (Some(lo), Some(hi)) if config.curve_gaps.windows(2).all(|w| w[1] == w[0] + 1) => {
            format!("{lo}..{hi}")
        }
        _ => join(&config.curve_gaps),
    };
    let methods: Vec<&str> = config.methods.iter().map(|m| m.name()).collect();
    let values = [
        s.seed.to_string(),
        s.trials.to_string(),
        s.train_groups.to_string(),
        s.val_groups.to_string(),
        s.test_groups.to_string(),
        s.members.to_string(),
        s.turns.to_string(),
        s.trait_min.to_string(),
        s.trait_max.to_string(),
        s.proclivity.name().to_string(),
        f.step.to_string(),
        f.max_outer.to_string(),
        f.score_epochs.to_string(),
        f.proclivity_epochs.to_string(),
        f.patience.to_string(),
        f.floor.to_string(),
        f.clip_norm.to_string(),
        join(&f.hidden_layers),
        f.activation.name().to_string(),
        methods.join(","),
        gaps,
        config.curve_traits.len().to_string(),
        config.parallel_trials.to_string(),
    ];
    let mut out = String::new();
    for (key, value) in KEYS.iter().zip(values) {
        let _ = writeln!(out, "{key} = {value}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::training::Variant;

    fn p(text: &str) -> Result<ExperimentConfig> {
        parse(text, Path::new("test.cfg"))
    }

    #[test]
    fn empty_text_is_default() {
        assert_eq!(p("").unwrap(), ExperimentConfig::default());
        assert_eq!(p("# only a comment\n\n").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn values_and_comments() {
        let c = p("turns = 100  # short\nproclivity=sigmoid\nmethods = nm, hm\ncurve_gaps = 2..5\nhidden_layers = 8\n")
            .unwrap();
        assert_eq!(c.synth.turns, 100);
        assert_eq!(c.synth.proclivity, TrueProclivity::Sigmoid);
        assert_eq!(
            c.methods,
            vec![Method::Model(Variant::Nm), Method::Model(Variant::Hm)]
        );
        assert_eq!(c.curve_gaps, vec![2, 3, 4, 5]);
        assert_eq!(c.fit.hidden_layers, vec![8]);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let line_of = |text: &str| match p(text) {
            Err(Error::ConfigLine { line, .. }) => line,
            other => panic!("expected a line error, got {other:?}"),
        };
        assert_eq!(line_of("turns = 10\nbogus = 1\n"), 2);
        assert_eq!(line_of("\n\nturns = ten\n"), 3);
        assert_eq!(line_of("turns = 10\nturns = 20\n"), 2);
        assert_eq!(line_of("just words\n"), 1);
        assert_eq!(line_of("proclivity = linear\n"), 1);
        assert_eq!(line_of("members = 1\n"), 0);
    }

    #[test]
    fn text_round_trip() {
        let mut c = ExperimentConfig::default();
        c.synth.seed = 99;
        c.synth.proclivity = TrueProclivity::Sigmoid;
        c.fit.step = 0.025;
        c.fit.hidden_layers = vec![4, 3];
        c.methods = vec![Method::True, Method::Model(Variant::Pro)];
        assert_eq!(p(&to_text(&c)).unwrap(), c);
        c.curve_gaps = vec![2, 4, 8];
        assert_eq!(p(&to_text(&c)).unwrap(), c);
    }

    #[test]
    fn missing_file_is_a_config_error() {
        let err = load(Path::new("/definitely/not/here.cfg")).unwrap_err();
        assert!(matches!(err, Error::ConfigLine { line: 0, .. }));
    }
}
