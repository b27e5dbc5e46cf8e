//! Synthetic groups and conversations with known ground truth.
//!
//! Traits are uniform on `[0.1, 1]`. Inherent scores are `sqrt(x)` and
//! memory scores follow a shifted, rescaled exponential that spans
//! `[2.5e, 10e]` over the trait range.
//!
//! Every random draw comes from its own ChaCha stream keyed by
//! `(trial, group, purpose)`, so changing e.g. the proclivity used for
//! conversations leaves the sampled traits untouched.

use std::f64::consts::E;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{sample_conversation, Roster, ScoreParams};
use crate::proclivity::{Proclivity, ScoreModel};
use crate::training::{Group, TrainingSet};

pub const TRAIT_MIN: f64 = 0.1;
pub const TRAIT_MAX: f64 = 1.0;

/// What a random stream is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Traits = 1,
    Conversation = 2,
    NetworkInit = 3,
}

/// Independent random stream for one `(trial, group, purpose)`.
pub fn seed_stream(master_seed: u64, trial: u64, group: u64, purpose: Purpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream((trial << 40) | ((purpose as u64) << 32) | (group & 0xffff_ffff));
    rng
}

/// Derived 64-bit seed for one `(trial, slot)`, used to initialize networks.
pub fn derived_seed(master_seed: u64, trial: u64, slot: u64) -> u64 {
    seed_stream(master_seed, trial, slot, Purpose::NetworkInit).random()
}

/// Which ground-truth proclivity drives the simulated conversations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TrueProclivity {
    #[default]
    Exp,
    Sigmoid,
}

impl TrueProclivity {
    pub fn proclivity(self) -> Proclivity {
        match self {
            TrueProclivity::Exp => Proclivity::ExpDecay,
            TrueProclivity::Sigmoid => Proclivity::Sigmoid,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TrueProclivity::Exp => "exp",
            TrueProclivity::Sigmoid => "sigmoid",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "exp" => Some(TrueProclivity::Exp),
            "sigmoid" | "sig" => Some(TrueProclivity::Sigmoid),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub train_groups: usize,
    pub val_groups: usize,
    pub test_groups: usize,
    pub members: usize,
    pub turns: usize,
    pub trait_min: f64,
    pub trait_max: f64,
    pub proclivity: TrueProclivity,
    pub trials: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            train_groups: 10,
            val_groups: 5,
            test_groups: 5,
            members: 5,
            turns: 800,
            trait_min: TRAIT_MIN,
            trait_max: TRAIT_MAX,
            proclivity: TrueProclivity::Exp,
            trials: 10,
            seed: 0,
        }
    }
}

impl SynthConfig {
    /// Training plus validation groups.
    pub fn groups_total(&self) -> usize {
        self.train_groups + self.val_groups
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("train_groups", self.train_groups),
            ("val_groups", self.val_groups),
            ("test_groups", self.test_groups),
            ("turns", self.turns),
            ("trials", self.trials),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be at least 1")));
            }
        }
        if self.members < 2 {
            return Err(Error::InvalidConfig(format!(
                "members must be at least 2, got {}",
                self.members
            )));
        }
        if !(TRAIT_MIN..=TRAIT_MAX).contains(&self.trait_min)
            || !(TRAIT_MIN..=TRAIT_MAX).contains(&self.trait_max)
            || self.trait_min > self.trait_max
        {
            return Err(Error::InvalidConfig(format!(
                "trait range [{}, {}] must lie within [{TRAIT_MIN}, {TRAIT_MAX}]",
                self.trait_min, self.trait_max
            )));
        }
        Ok(())
    }
}

/// Uniform traits for one group.
pub fn sample_traits<R: Rng + ?Sized>(config: &SynthConfig, rng: &mut R) -> Result<Roster> {
    let traits = (0..config.members)
        .map(|_| {
            if config.trait_min == config.trait_max {
                config.trait_min
            } else {
                rng.random_range(config.trait_min..=config.trait_max)
            }
        })
        .collect();
    Roster::new(traits)
}

/// Ground-truth inherent score `sqrt(x)`.
pub fn true_inherent(x: f64) -> f64 {
    x.sqrt()
}

/// Ground-truth memory score, `2.5e` at `x = 0.1` rising to `10e` at `x = 1`.
pub fn true_memory(x: f64) -> f64 {
    let low = (-2.0f64).exp();
    let shape = ((-2.0 * (1.1 - x)).exp() - low) / ((-0.2f64).exp() - low);
    7.5 * E * (shape + 1.0 / 3.0)
}

/// Ground-truth scores of every member.
pub fn traits_to_scores(roster: &Roster) -> Result<ScoreParams> {
    if let Some(&bad) = roster
        .traits()
        .iter()
        .find(|x| !(TRAIT_MIN..=TRAIT_MAX).contains(*x))
    {
        return Err(Error::TraitOutOfDomain(bad));
    }
    ScoreParams::new(
        roster.traits().iter().map(|&x| true_inherent(x)).collect(),
        roster.traits().iter().map(|&x| true_memory(x)).collect(),
    )
}

/// The ground-truth trait maps with a chosen proclivity.
#[derive(Debug, Clone, PartialEq)]
pub struct TrueScoreMap {
    pub proclivity: Proclivity,
}

impl ScoreModel for TrueScoreMap {
    fn inherent_score(&self, x: f64) -> f64 {
        true_inherent(x)
    }

    fn memory_score(&self, x: f64) -> f64 {
        true_memory(x)
    }

    fn proclivity(&self) -> &Proclivity {
        &self.proclivity
    }
}

/// One synthetic group with its ground-truth scores.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthGroup {
    pub group: Group,
    pub truth: ScoreParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub trial: u64,
    pub train: Vec<SynthGroup>,
    pub validation: Vec<SynthGroup>,
    pub test: Vec<SynthGroup>,
}

impl SynthDataset {
    pub fn training_set(&self) -> TrainingSet {
        TrainingSet {
            train: self.train.iter().map(|g| g.group.clone()).collect(),
            validation: self.validation.iter().map(|g| g.group.clone()).collect(),
        }
    }

    pub fn all_groups(&self) -> impl Iterator<Item = &SynthGroup> {
        self.train.iter().chain(&self.validation).chain(&self.test)
    }
}

/// Simulates one trial. Groups are numbered from 1: training first, then
/// validation, then test.
pub fn generate_dataset(config: &SynthConfig, trial: u64) -> Result<SynthDataset> {
    config.validate()?;
    let proclivity = config.proclivity.proclivity();
    let make = |index: usize| -> Result<SynthGroup> {
        let id = index as u64 + 1;
        let mut trait_rng = seed_stream(config.seed, trial, id, Purpose::Traits);
        let roster = sample_traits(config, &mut trait_rng)?;
        let truth = traits_to_scores(&roster)?;
        let mut conv_rng = seed_stream(config.seed, trial, id, Purpose::Conversation);
        let conversation = sample_conversation(&truth, &proclivity, config.turns, &mut conv_rng)?;
        Ok(SynthGroup {
            group: Group::new(id, roster, conversation)?,
            truth,
        })
    };
    let n_train = config.train_groups;
    let n_val = config.val_groups;
    let total = config.groups_total() + config.test_groups;
    let mut groups = (0..total).map(make).collect::<Result<Vec<_>>>()?;
    let test = groups.split_off(n_train + n_val);
    let validation = groups.split_off(n_train);
    Ok(SynthDataset {
        trial,
        train: groups,
        validation,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// The memory map written out term by term, independent of
    /// `true_memory`.
    fn memory_oracle(x: f64) -> f64 {
        let e = std::f64::consts::E;
        let numerator = e.powf(-2.0 * (1.1 - x)) - e.powf(-2.0);
        let denominator = e.powf(-0.2) - e.powf(-2.0);
        15.0 * e / 2.0 * (numerator / denominator + 1.0 / 3.0)
    }

    #[test]
    fn score_map_endpoints() {
        let lo = traits_to_scores(&Roster::new(vec![0.1, 1.0]).unwrap()).unwrap();
        assert!((lo.inherent()[0] - 0.1f64.sqrt()).abs() < 1e-15);
        assert!((lo.inherent()[0] - 0.31623).abs() < 1e-5);
        assert!((lo.memory()[0] - 2.5 * E).abs() < 1e-12);
        assert!((lo.memory()[0] - 6.7957).abs() < 1e-4);
        assert_eq!(lo.inherent()[1], 1.0);
        assert!((lo.memory()[1] - 10.0 * E).abs() < 1e-12);
        assert!((lo.memory()[1] - 27.1828).abs() < 1e-4);
    }

    #[test]
    fn score_map_midpoint_matches_oracle() {
        for x in [0.1, 0.25, 0.5, 0.77, 1.0] {
            assert!((true_memory(x) - memory_oracle(x)).abs() < 1e-12);
        }
        assert!((true_inherent(0.5) - 0.70711).abs() < 1e-5);
        // x = 0.5: (e^-1.2 - e^-2)/(e^-0.2 - e^-2) = 0.242698..., plus 1/3, times 7.5e
        assert!((true_memory(0.5) - 11.743622707163258).abs() < 1e-12);
    }

    #[test]
    fn score_map_rejects_out_of_domain() {
        let r = Roster::new(vec![0.05, 0.5]).unwrap();
        assert!(matches!(traits_to_scores(&r), Err(Error::TraitOutOfDomain(_))));
    }

    #[test]
    fn traits_in_range_and_reproducible() {
        let config = SynthConfig::default();
        let mut a = seed_stream(1, 0, 3, Purpose::Traits);
        let mut b = seed_stream(1, 0, 3, Purpose::Traits);
        let ra = sample_traits(&config, &mut a).unwrap();
        assert_eq!(ra, sample_traits(&config, &mut b).unwrap());
        assert!(ra.traits().iter().all(|x| (0.1..=1.0).contains(x)));
    }

    #[test]
    fn trait_mean_is_midpoint() {
        let config = SynthConfig {
            members: 10_000,
            ..SynthConfig::default()
        };
        let mut rng = seed_stream(42, 0, 1, Purpose::Traits);
        let r = sample_traits(&config, &mut rng).unwrap();
        let mean = r.traits().iter().sum::<f64>() / r.len() as f64;
        assert!((mean - 0.55).abs() < 0.01, "{mean}");
    }

    #[test]
    fn default_dataset_shape() {
        let config = SynthConfig::default();
        let d = generate_dataset(&config, 0).unwrap();
        assert_eq!(d.train.len(), 10);
        assert_eq!(d.validation.len(), 5);
        assert_eq!(d.test.len(), 5);
        for g in d.all_groups() {
            assert_eq!(g.group.roster.len(), 5);
            assert_eq!(g.group.conversation.len(), 800);
            assert!(g.group.conversation.speakers().windows(2).all(|w| w[0] != w[1]));
            for (p, m) in g.truth.inherent().iter().zip(g.truth.memory()) {
                assert!((0.1f64.sqrt() - 1e-12..=1.0 + 1e-12).contains(p));
                assert!((2.5 * E - 1e-12..=10.0 * E + 1e-12).contains(m));
            }
        }
        let ids: Vec<u64> = d.all_groups().map(|g| g.group.id).collect();
        assert_eq!(ids, (1..=20).collect::<Vec<_>>());
    }

    #[test]
    fn proclivity_changes_only_conversations() {
        let exp = SynthConfig {
            turns: 100,
            ..SynthConfig::default()
        };
        let sig = SynthConfig {
            proclivity: TrueProclivity::Sigmoid,
            ..exp.clone()
        };
        let a = generate_dataset(&exp, 2).unwrap();
        let b = generate_dataset(&sig, 2).unwrap();
        assert_eq!(a, generate_dataset(&exp, 2).unwrap());
        for (x, y) in a.all_groups().zip(b.all_groups()) {
            assert_eq!(x.group.roster, y.group.roster);
            assert_eq!(x.truth, y.truth);
        }
        assert!(a
            .all_groups()
            .zip(b.all_groups())
            .any(|(x, y)| x.group.conversation != y.group.conversation));
        let c = generate_dataset(&exp, 3).unwrap();
        assert_ne!(a.train[0].group.roster, c.train[0].group.roster);
    }

    #[test]
    fn invalid_configs() {
        let bad = [
            SynthConfig {
                members: 1,
                ..SynthConfig::default()
            },
            SynthConfig {
                trait_min: 0.0,
                ..SynthConfig::default()
            },
            SynthConfig {
                turns: 0,
                ..SynthConfig::default()
            },
        ];
        for c in bad {
            assert!(generate_dataset(&c, 0).is_err());
        }
    }
}
