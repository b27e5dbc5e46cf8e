//! Speaking proclivity: how a member's inclination to speak varies with the
//! number of turns since they last spoke.

use std::fmt;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::model::Gap;
use crate::neural::DenseNet;

/// Gaps are fed to a learned proclivity as `delta / NU_GAP_SCALE`.
pub const NU_GAP_SCALE: f64 = 20.0;

/// `exp(-delta / 2)` for `delta >= 1`, zero otherwise.
pub fn w_exp(delta: i64) -> f64 {
    if delta <= 0 {
        0.0
    } else {
        (-(delta as f64) / 2.0).exp()
    }
}

/// `0.95 * sig(10 - delta / 2)` for `delta >= 1`, zero otherwise.
pub fn w_sig(delta: i64) -> f64 {
    if delta <= 0 {
        0.0
    } else {
        0.95 * crate::neural::sigmoid(10.0 - delta as f64 / 2.0)
    }
}

/// Learned proclivity `nu(delta)`; zero for `delta <= 0`.
pub fn learned_nu(net: &DenseNet, delta: i64) -> f64 {
    if delta <= 0 {
        0.0
    } else {
        net.eval(delta as f64 / NU_GAP_SCALE)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Proclivity {
    Zero,
    ExpDecay,
    Sigmoid,
    Learned(DenseNet),
}

impl Proclivity {
    /// Value at an integer gap.
    pub fn at(&self, delta: i64) -> f64 {
        match self {
            Proclivity::Zero => 0.0,
            Proclivity::ExpDecay => w_exp(delta),
            Proclivity::Sigmoid => w_sig(delta),
            Proclivity::Learned(net) => learned_nu(net, delta),
        }
    }

    /// Value at a tracked gap; members who never spoke get zero.
    pub fn value(&self, gap: Gap) -> f64 {
        match gap {
            Gap::Never => 0.0,
            Gap::Turns(d) => self.at(d as i64),
        }
    }

    pub fn network(&self) -> Option<&DenseNet> {
        match self {
            Proclivity::Learned(net) => Some(net),
            _ => None,
        }
    }

    pub fn network_mut(&mut self) -> Option<&mut DenseNet> {
        match self {
            Proclivity::Learned(net) => Some(net),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Proclivity::Zero => "zero",
            Proclivity::ExpDecay => "exp",
            Proclivity::Sigmoid => "sigmoid",
            Proclivity::Learned(_) => "learned",
        }
    }

    /// Parses one of the fixed kinds (`zero`, `exp`, `sigmoid`).
    pub fn parse_fixed(s: &str) -> Option<Self> {
        match s {
            "zero" => Some(Proclivity::Zero),
            "exp" => Some(Proclivity::ExpDecay),
            "sigmoid" | "sig" => Some(Proclivity::Sigmoid),
            _ => None,
        }
    }
}

impl fmt::Display for Proclivity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Something that maps a trait to inherent and memory scores and carries a
/// proclivity. Used for curve rescaling.
pub trait ScoreModel {
    fn inherent_score(&self, trait_value: f64) -> f64;
    fn memory_score(&self, trait_value: f64) -> f64;
    fn proclivity(&self) -> &Proclivity;
}

/// A proclivity multiplied by the ratio of mean memory to mean inherent score.
#[derive(Debug, Clone, PartialEq)]
pub struct ProclivityCurve {
    gaps: Vec<i64>,
    values: Vec<f64>,
}

impl ProclivityCurve {
    pub fn new(gaps: Vec<i64>, values: Vec<f64>) -> Result<Self> {
        if gaps.len() != values.len() {
            return Err(Error::InvalidConfig(format!(
                "{} gaps but {} curve values",
                gaps.len(),
                values.len()
            )));
        }
        if gaps.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig("curve gaps must increase".into()));
        }
        Ok(Self { gaps, values })
    }

    pub fn gaps(&self) -> &[i64] {
        &self.gaps
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `delta,value` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("delta,value\n");
        for (d, v) in self.gaps.iter().zip(&self.values) {
            let _ = writeln!(out, "{d},{v}");
        }
        out
    }

    /// Pointwise mean of curves sharing one gap grid.
    pub fn mean(curves: &[ProclivityCurve]) -> Option<ProclivityCurve> {
        let first = curves.first()?;
        if curves.iter().any(|c| c.gaps != first.gaps) {
            return None;
        }
        let n = curves.len() as f64;
        let values = (0..first.gaps.len())
            .map(|k| curves.iter().map(|c| c.values[k]).sum::<f64>() / n)
            .collect();
        Some(ProclivityCurve {
            gaps: first.gaps.clone(),
            values,
        })
    }

    /// Euclidean distance to another curve on the same grid.
    pub fn l2_distance(&self, other: &ProclivityCurve) -> Option<f64> {
        (self.gaps == other.gaps).then(|| {
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt()
        })
    }

    /// Centered moving average of width 3, shrinking to 2 at the ends.
    pub fn smoothed(&self) -> ProclivityCurve {
        let v = &self.values;
        let n = v.len();
        let values = (0..n)
            .map(|k| {
                let lo = k.saturating_sub(1);
                let hi = (k + 1).min(n - 1);
                v[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
            })
            .collect();
        ProclivityCurve {
            gaps: self.gaps.clone(),
            values,
        }
    }
}

/// 50 equally spaced traits on `[0.1, 1]`.
pub fn default_trait_grid() -> Vec<f64> {
    trait_grid(0.1, 1.0, 50)
}

pub fn trait_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..points)
            .map(|k| lo + (hi - lo) * k as f64 / (points - 1) as f64)
            .collect(),
    }
}

/// Gaps 2 through 40.
pub fn default_gap_grid() -> Vec<i64> {
    (2..=40).collect()
}

/// Proclivity rescaled by `mean(d(x)) / mean(pi(x))` over `traits`.
pub fn rescaled_curve(
    model: &dyn ScoreModel,
    traits: &[f64],
    gaps: &[i64],
) -> Result<ProclivityCurve> {
    if traits.is_empty() {
        return Err(Error::InvalidConfig("empty trait grid".into()));
    }
    let n = traits.len() as f64;
    let mean_inherent = traits.iter().map(|&x| model.inherent_score(x)).sum::<f64>() / n;
    let mean_memory = traits.iter().map(|&x| model.memory_score(x)).sum::<f64>() / n;
    if mean_inherent == 0.0 || !mean_inherent.is_finite() {
        return Err(Error::DegenerateRatio);
    }
    let ratio = mean_memory / mean_inherent;
    let proclivity = model.proclivity();
    let values = gaps.iter().map(|&d| ratio * proclivity.at(d)).collect();
    ProclivityCurve::new(gaps.to_vec(), values)
}
