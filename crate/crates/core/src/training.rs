//! Model variants and maximum-likelihood fitting by block coordinate descent.
//!
//! A learnable bundle predicts each member's inherent score with a network
//! `f(x)`, their memory score with `g(x)`, and (for [`Variant::Pro`]) learns
//! the proclivity `nu(delta)` as a third network. Fitting alternates a few
//! epochs of full-batch gradient descent on `(f, g)` with a few epochs on
//! `nu`, keeping the other block frozen, and keeps the parameters with the
//! best validation loss.

use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::{Conversation, GapTracker, Gap, Roster, ScoreParams, LIKELIHOOD_FLOOR};
use crate::neural::{Activation, DenseNet, GradientSet};
use crate::proclivity::{Proclivity, ScoreModel, NU_GAP_SCALE};

/// Inherent score used by the high-memory baseline.
pub const HIGH_MEMORY_INHERENT: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    /// Learned scores and learned proclivity.
    Pro,
    /// Learned scores with the fixed `exp(-delta/2)` proclivity.
    Exp,
    /// Uniform over eligible members.
    Nm,
    /// Constant scores `pi = 0.01, d = 1` with `exp(-delta/2)`.
    Hm,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Pro, Variant::Exp, Variant::Nm, Variant::Hm];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Pro => "pro",
            Variant::Exp => "exp",
            Variant::Nm => "nm",
            Variant::Hm => "hm",
        }
    }

    pub fn is_learnable(self) -> bool {
        matches!(self, Variant::Pro | Variant::Exp)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pro" => Ok(Variant::Pro),
            "exp" => Ok(Variant::Exp),
            "nm" => Ok(Variant::Nm),
            "hm" => Ok(Variant::Hm),
            other => Err(Error::InvalidConfig(format!(
                "unknown variant {other:?} (expected pro, exp, nm or hm)"
            ))),
        }
    }
}

/// Score predictors plus proclivity for one model variant.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    variant: Variant,
    inherent_net: Option<DenseNet>,
    memory_net: Option<DenseNet>,
    proclivity: Proclivity,
}

impl ModelBundle {
    /// A fresh bundle; learnable parts are initialized from `config`.
    pub fn new(variant: Variant, config: &FitConfig) -> Result<Self> {
        let sizes = config.layer_sizes();
        let net = |offset: u64| {
            DenseNet::new(
                &sizes,
                config.activation,
                config.seed.wrapping_mul(3).wrapping_add(offset),
            )
        };
        Ok(match variant {
            Variant::Pro => Self {
                variant,
                inherent_net: Some(net(1)?),
                memory_net: Some(net(2)?),
                proclivity: Proclivity::Learned(net(3)?),
            },
            Variant::Exp => Self {
                variant,
                inherent_net: Some(net(1)?),
                memory_net: Some(net(2)?),
                proclivity: Proclivity::ExpDecay,
            },
            Variant::Nm => Self::no_memory(),
            Variant::Hm => Self::high_memory(),
        })
    }

    pub fn no_memory() -> Self {
        Self {
            variant: Variant::Nm,
            inherent_net: None,
            memory_net: None,
            proclivity: Proclivity::Zero,
        }
    }

    pub fn high_memory() -> Self {
        Self {
            variant: Variant::Hm,
            inherent_net: None,
            memory_net: None,
            proclivity: Proclivity::ExpDecay,
        }
    }

    /// Reassembles a learnable bundle from trained networks.
    pub fn from_networks(
        variant: Variant,
        inherent_net: DenseNet,
        memory_net: DenseNet,
        proclivity_net: Option<DenseNet>,
    ) -> Result<Self> {
        let proclivity = match (variant, proclivity_net) {
            (Variant::Pro, Some(net)) => Proclivity::Learned(net),
            (Variant::Exp, None) => Proclivity::ExpDecay,
            (Variant::Pro, None) => {
                return Err(Error::InvalidConfig("pro bundle needs a proclivity network".into()))
            }
            (Variant::Exp, Some(_)) => {
                return Err(Error::InvalidConfig(
                    "exp bundle has a fixed proclivity".into(),
                ))
            }
            (v, _) => return Err(Error::NothingToFit(v.name().into())),
        };
        Ok(Self {
            variant,
            inherent_net: Some(inherent_net),
            memory_net: Some(memory_net),
            proclivity,
        })
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn inherent_net(&self) -> Option<&DenseNet> {
        self.inherent_net.as_ref()
    }

    pub fn memory_net(&self) -> Option<&DenseNet> {
        self.memory_net.as_ref()
    }

    pub fn proclivity_net(&self) -> Option<&DenseNet> {
        self.proclivity.network()
    }

    pub fn inherent(&self, trait_value: f64) -> f64 {
        match (&self.inherent_net, self.variant) {
            (Some(net), _) => net.eval(trait_value),
            (None, Variant::Hm) => HIGH_MEMORY_INHERENT,
            (None, _) => 1.0,
        }
    }

    pub fn memory(&self, trait_value: f64) -> f64 {
        match (&self.memory_net, self.variant) {
            (Some(net), _) => net.eval(trait_value),
            (None, Variant::Hm) => 1.0,
            (None, _) => 0.0,
        }
    }

    /// Per-member scores predicted from traits.
    pub fn predict_scores(&self, roster: &Roster) -> Result<ScoreParams> {
        let inherent = roster.traits().iter().map(|&x| self.inherent(x)).collect();
        let memory = roster.traits().iter().map(|&x| self.memory(x)).collect();
        ScoreParams::new(inherent, memory)
    }

    /// Writes `f.csv`, `g.csv`, `nu.csv` (pro only) and `checkpoint.txt`.
    pub fn save_checkpoint(&self, dir: &Path) -> Result<()> {
        let (Some(f), Some(g)) = (&self.inherent_net, &self.memory_net) else {
            return Err(Error::NothingToFit(self.variant.name().into()));
        };
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        f.write_snapshot(&dir.join("f.csv"))?;
        g.write_snapshot(&dir.join("g.csv"))?;
        if let Some(nu) = self.proclivity_net() {
            nu.write_snapshot(&dir.join("nu.csv"))?;
        }
        let mut meta = String::new();
        let _ = writeln!(meta, "variant={}", self.variant);
        let _ = writeln!(meta, "activation={}", f.hidden_activation().name());
        let _ = writeln!(meta, "nu_gap_scale={NU_GAP_SCALE}");
        let path = dir.join("checkpoint.txt");
        std::fs::write(&path, meta).map_err(|e| Error::io(path, e))
    }

    pub fn load_checkpoint(dir: &Path) -> Result<Self> {
        let path = dir.join("checkpoint.txt");
        let meta = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut variant = None;
        let mut activation = Activation::Tanh;
        for line in meta.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let format_err = |message: String| Error::Format {
                path: path.clone(),
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format_err(format!("expected key=value, got {line:?}")))?;
            match key.trim() {
                "variant" => variant = Some(value.trim().parse::<Variant>()?),
                "activation" => {
                    activation = Activation::parse(value.trim())
                        .ok_or_else(|| format_err(format!("unknown activation {value}")))?
                }
                _ => {}
            }
        }
        let variant = variant.ok_or_else(|| Error::Format {
            path: path.clone(),
            message: "missing variant".into(),
        })?;
        let f = DenseNet::read_snapshot(&dir.join("f.csv"), activation)?;
        let g = DenseNet::read_snapshot(&dir.join("g.csv"), activation)?;
        let nu = match variant {
            Variant::Pro => Some(DenseNet::read_snapshot(&dir.join("nu.csv"), activation)?),
            _ => None,
        };
        Self::from_networks(variant, f, g, nu)
    }
}

impl ScoreModel for ModelBundle {
    fn inherent_score(&self, trait_value: f64) -> f64 {
        self.inherent(trait_value)
    }

    fn memory_score(&self, trait_value: f64) -> f64 {
        self.memory(trait_value)
    }

    fn proclivity(&self) -> &Proclivity {
        &self.proclivity
    }
}

/// Hyperparameters of [`fit`].
#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub step: f64,
    pub max_outer: usize,
    /// Epochs on the score networks per outer iteration.
    pub score_epochs: usize,
    /// Epochs on the proclivity network per outer iteration.
    pub proclivity_epochs: usize,
    pub patience: usize,
    pub floor: f64,
    /// Gradient-norm clip applied per block.
    pub clip_norm: f64,
    pub hidden_layers: Vec<usize>,
    pub activation: Activation,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            step: 0.05,
            max_outer: 200,
            score_epochs: 5,
            proclivity_epochs: 5,
            patience: 20,
            floor: LIKELIHOOD_FLOOR,
            clip_norm: 10.0,
            hidden_layers: vec![16, 16],
            activation: Activation::Tanh,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![1];
        sizes.extend(&self.hidden_layers);
        sizes.push(1);
        sizes
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("step", self.step),
            ("floor", self.floor),
            ("clip_norm", self.clip_norm),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        let counts = [
            ("max_outer", self.max_outer),
            ("score_epochs", self.score_epochs),
            ("proclivity_epochs", self.proclivity_epochs),
            ("patience", self.patience),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be at least 1")));
            }
        }
        if self.hidden_layers.contains(&0) {
            return Err(Error::InvalidConfig("hidden layer of width 0".into()));
        }
        Ok(())
    }
}

/// A roster with its observed conversation.
#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    pub id: u64,
    pub roster: Roster,
    pub conversation: Conversation,
}

impl Group {
    pub fn new(id: u64, roster: Roster, conversation: Conversation) -> Result<Self> {
        if roster.len() != conversation.group_size() {
            return Err(Error::InvalidConversation(format!(
                "group {id}: roster of {} members but conversation over {}",
                roster.len(),
                conversation.group_size()
            )));
        }
        Ok(Self {
            id,
            roster,
            conversation,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingSet {
    pub train: Vec<Group>,
    pub validation: Vec<Group>,
}

/// Which parameters a gradient step touches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    /// The inherent and memory score networks.
    Scores,
    /// The proclivity network.
    Proclivity,
}

/// Gradients for the networks of one block; absent networks are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockGradients {
    pub inherent: Option<GradientSet>,
    pub memory: Option<GradientSet>,
    pub proclivity: Option<GradientSet>,
}

impl BlockGradients {
    pub fn is_empty(&self) -> bool {
        self.inherent.is_none() && self.memory.is_none() && self.proclivity.is_none()
    }

    fn sets(&self) -> impl Iterator<Item = &GradientSet> {
        [&self.inherent, &self.memory, &self.proclivity]
            .into_iter()
            .flatten()
    }

    fn sets_mut(&mut self) -> impl Iterator<Item = &mut GradientSet> {
        [&mut self.inherent, &mut self.memory, &mut self.proclivity]
            .into_iter()
            .flatten()
    }

    pub fn norm(&self) -> f64 {
        self.sets().map(GradientSet::squared_norm).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.sets().all(GradientSet::is_finite)
    }

    /// Rescales so that the joint norm is at most `max_norm`.
    pub fn clip(&mut self, max_norm: f64) {
        let norm = self.norm();
        if norm > max_norm {
            let c = max_norm / norm;
            for set in self.sets_mut() {
                set.scale(c);
            }
        }
    }
}

/// Loss sums and derivatives for one group under fixed scores and
/// proclivity values.
struct GroupPass {
    loss_sum: f64,
    d_inherent: Vec<f64>,
    d_memory: Vec<f64>,
    /// Indexed by gap.
    d_proclivity: Vec<f64>,
}

/// Proclivity values at gaps `0..=max_gap`.
fn proclivity_table(proclivity: &Proclivity, max_gap: usize) -> Vec<f64> {
    (0..=max_gap).map(|d| proclivity.at(d as i64)).collect()
}

/// Walks a conversation once, accumulating the summed negative
/// log-likelihood and its derivatives with respect to every member's
/// inherent and memory score and every proclivity value.
fn group_pass(
    inherent: &[f64],
    memory: &[f64],
    table: &[f64],
    conversation: &Conversation,
    floor: f64,
    with_derivatives: bool,
) -> Result<GroupPass> {
    let n = conversation.group_size();
    let mut pass = GroupPass {
        loss_sum: 0.0,
        d_inherent: vec![0.0; n],
        d_memory: vec![0.0; n],
        d_proclivity: vec![0.0; if with_derivatives { table.len() } else { 0 }],
    };
    let mut tracker = GapTracker::new(n);
    let mut gaps = vec![Gap::Never; n];
    let mut values = vec![0.0; n];
    let mut passes_floor = vec![false; n];
    for (t, &observed) in conversation.speakers().iter().enumerate() {
        let mut total = 0.0;
        for i in 0..n {
            let gap = tracker.gap(i);
            gaps[i] = gap;
            let (v, live) = match gap {
                Gap::Turns(1) => (0.0, false),
                Gap::Never => (inherent[i].max(floor), inherent[i] >= floor),
                Gap::Turns(d) => {
                    let u = inherent[i] + memory[i] * table[d];
                    (u.max(floor), u >= floor)
                }
            };
            values[i] = v;
            passes_floor[i] = live;
            total += v;
        }
        let observed_value = values[observed];
        if !(observed_value > 0.0 && total.is_finite()) {
            return Err(Error::InfiniteLoss {
                turn: t,
                speaker: observed,
            });
        }
        pass.loss_sum -= (observed_value / total).ln();
        if with_derivatives {
            let inv_total = 1.0 / total;
            for i in 0..n {
                if !passes_floor[i] {
                    continue;
                }
                let mut du = inv_total;
                if i == observed {
                    du -= 1.0 / observed_value;
                }
                pass.d_inherent[i] += du;
                if let Gap::Turns(d) = gaps[i] {
                    pass.d_memory[i] += du * table[d];
                    pass.d_proclivity[d] += du * memory[i];
                }
            }
        }
        tracker.advance(observed);
    }
    Ok(pass)
}

fn max_gap(groups: &[&Group]) -> usize {
    groups.iter().map(|g| g.conversation.len()).max().unwrap_or(0)
}

/// Mean per-turn negative log-likelihood over `groups`, turn-weighted.
pub fn mean_nll(bundle: &ModelBundle, groups: &[Group], floor: f64) -> Result<f64> {
    let refs: Vec<&Group> = groups.iter().collect();
    let table = proclivity_table(&bundle.proclivity, max_gap(&refs));
    let mut loss = 0.0;
    let mut turns = 0usize;
    for group in groups {
        let scores = bundle.predict_scores(&group.roster)?;
        let pass = group_pass(
            scores.inherent(),
            scores.memory(),
            &table,
            &group.conversation,
            floor,
            false,
        )?;
        loss += pass.loss_sum;
        turns += group.conversation.len();
    }
    Ok(if turns == 0 { 0.0 } else { loss / turns as f64 })
}

/// Mean per-turn loss over `groups` and its gradient with respect to the
/// networks in `block`. The other block is held fixed.
pub fn objective_gradients(
    bundle: &ModelBundle,
    groups: &[Group],
    block: Block,
    floor: f64,
) -> Result<(f64, BlockGradients)> {
    let refs: Vec<&Group> = groups.iter().collect();
    let max_gap = max_gap(&refs);
    let table = proclivity_table(&bundle.proclivity, max_gap);
    let mut grads = BlockGradients {
        inherent: None,
        memory: None,
        proclivity: None,
    };
    match block {
        Block::Scores => {
            grads.inherent = bundle.inherent_net.as_ref().map(DenseNet::zero_gradients);
            grads.memory = bundle.memory_net.as_ref().map(DenseNet::zero_gradients);
        }
        Block::Proclivity => {
            grads.proclivity = bundle.proclivity_net().map(DenseNet::zero_gradients);
        }
    }
    let total_turns: usize = groups.iter().map(|g| g.conversation.len()).sum();
    if total_turns == 0 {
        return Ok((0.0, grads));
    }
    let scale = 1.0 / total_turns as f64;
    let mut loss = 0.0;
    let mut d_proclivity = vec![0.0; max_gap + 1];
    for group in groups {
        let scores = bundle.predict_scores(&group.roster)?;
        let pass = group_pass(
            scores.inherent(),
            scores.memory(),
            &table,
            &group.conversation,
            floor,
            !grads.is_empty(),
        )?;
        loss += pass.loss_sum;
        if let (Some(net), Some(set)) = (&bundle.inherent_net, grads.inherent.as_mut()) {
            for (&x, &d) in group.roster.traits().iter().zip(&pass.d_inherent) {
                net.accumulate_backward(x, d * scale, set)?;
            }
        }
        if let (Some(net), Some(set)) = (&bundle.memory_net, grads.memory.as_mut()) {
            for (&x, &d) in group.roster.traits().iter().zip(&pass.d_memory) {
                net.accumulate_backward(x, d * scale, set)?;
            }
        }
        if grads.proclivity.is_some() {
            for (acc, d) in d_proclivity.iter_mut().zip(&pass.d_proclivity) {
                *acc += d;
            }
        }
    }
    if let (Some(net), Some(set)) = (bundle.proclivity_net(), grads.proclivity.as_mut()) {
        // gaps <= 0 never occur in the table's live entries; d_proclivity[0] stays 0
        for (d, &g) in d_proclivity.iter().enumerate().skip(1) {
            net.accumulate_backward(d as f64 / NU_GAP_SCALE, g * scale, set)?;
        }
    }
    Ok((loss * scale, grads))
}

/// Gradient of one conversation's mean per-turn loss for `block`.
pub fn conversation_nll_gradients(
    bundle: &ModelBundle,
    roster: &Roster,
    conversation: &Conversation,
    block: Block,
) -> Result<BlockGradients> {
    let group = Group::new(0, roster.clone(), conversation.clone())?;
    objective_gradients(bundle, std::slice::from_ref(&group), block, LIKELIHOOD_FLOOR)
        .map(|(_, g)| g)
}

impl ModelBundle {
    fn apply_block(&mut self, grads: &BlockGradients, step: f64) -> Result<()> {
        if let (Some(net), Some(g)) = (self.inherent_net.as_mut(), grads.inherent.as_ref()) {
            net.apply_update(g, step)?;
        }
        if let (Some(net), Some(g)) = (self.memory_net.as_mut(), grads.memory.as_ref()) {
            net.apply_update(g, step)?;
        }
        if let (Some(net), Some(g)) = (self.proclivity.network_mut(), grads.proclivity.as_ref()) {
            net.apply_update(g, step)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub outer_iter: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    pub bundle: ModelBundle,
    /// Row 0 holds the losses before any update.
    pub history: Vec<LossRecord>,
    pub best_iteration: usize,
}

impl FitOutcome {
    pub fn best_val_loss(&self) -> f64 {
        self.history[self.best_iteration].val_loss
    }

    /// `outer_iter,train_loss,val_loss` rows with a header.
    pub fn history_csv(&self) -> String {
        let mut out = String::from("outer_iter,train_loss,val_loss\n");
        for r in &self.history {
            let _ = writeln!(out, "{},{},{}", r.outer_iter, r.train_loss, r.val_loss);
        }
        out
    }
}

/// Fits a learnable bundle. Fixed variants come back unchanged with an
/// empty history.
pub fn fit(bundle: &ModelBundle, data: &TrainingSet, config: &FitConfig) -> Result<FitOutcome> {
    config.validate()?;
    if data.train.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    if !bundle.variant.is_learnable() {
        return Ok(FitOutcome {
            bundle: bundle.clone(),
            history: Vec::new(),
            best_iteration: 0,
        });
    }
    let validation = if data.validation.is_empty() {
        &data.train
    } else {
        &data.validation
    };
    let floor = config.floor;
    let losses = |b: &ModelBundle, iteration: usize| -> Result<LossRecord> {
        let train_loss = mean_nll(b, &data.train, floor)?;
        let val_loss = mean_nll(b, validation, floor)?;
        if !(train_loss.is_finite() && val_loss.is_finite()) {
            return Err(Error::Divergence {
                iteration,
                detail: format!("train loss {train_loss}, validation loss {val_loss}"),
            });
        }
        Ok(LossRecord {
            outer_iter: iteration,
            train_loss,
            val_loss,
        })
    };
    let diverged = |iteration: usize, e: Error| match e {
        Error::Divergence { .. } => e,
        e if e.is_numeric() => Error::Divergence {
            iteration,
            detail: e.to_string(),
        },
        e => e,
    };

    let mut current = bundle.clone();
    let mut history = vec![losses(&current, 0)?];
    let mut best = current.clone();
    let mut best_iteration = 0;
    let mut stale = 0;

    let mut blocks = vec![(Block::Scores, config.score_epochs)];
    if current.proclivity_net().is_some() {
        blocks.push((Block::Proclivity, config.proclivity_epochs));
    }

    for iteration in 1..=config.max_outer {
        for &(block, epochs) in &blocks {
            for _ in 0..epochs {
                let (_, mut grads) = objective_gradients(&current, &data.train, block, floor)
                    .map_err(|e| diverged(iteration, e))?;
                if !grads.is_finite() {
                    return Err(Error::Divergence {
                        iteration,
                        detail: format!("non-finite gradient in {block:?} block"),
                    });
                }
                grads.clip(config.clip_norm);
                current.apply_block(&grads, config.step)?;
            }
        }
        let record = losses(&current, iteration).map_err(|e| diverged(iteration, e))?;
        history.push(record);
        if record.val_loss < history[best_iteration].val_loss {
            best = current.clone();
            best_iteration = iteration;
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }
    Ok(FitOutcome {
        bundle: best,
        history,
        best_iteration,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{likelihood_sequence, nll_loss, sample_conversation};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy_group(seed: u64, turns: usize) -> Group {
        let roster = Roster::new(vec![0.2, 0.55, 0.9]).unwrap();
        let truth = ScoreParams::new(vec![0.3, 0.6, 0.9], vec![4.0, 2.0, 8.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let conversation =
            sample_conversation(&truth, &Proclivity::ExpDecay, turns, &mut rng).unwrap();
        Group::new(seed, roster, conversation).unwrap()
    }

    fn small_config() -> FitConfig {
        FitConfig {
            hidden_layers: vec![4, 4],
            ..FitConfig::default()
        }
    }

    /// Gives every parameter of every network a nonzero value so no
    /// gradient is structurally zero.
    fn perturbed(bundle: &ModelBundle, seed: u64) -> ModelBundle {
        use rand::Rng;
        let mut b = bundle.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut nets: Vec<&mut DenseNet> = Vec::new();
        if let Some(n) = b.inherent_net.as_mut() {
            nets.push(n);
        }
        if let Some(n) = b.memory_net.as_mut() {
            nets.push(n);
        }
        if let Some(n) = b.proclivity.network_mut() {
            nets.push(n);
        }
        for net in nets {
            for layer in net.layers_mut() {
                for v in layer.parameters_mut() {
                    *v += rng.random_range(-0.8..0.8);
                }
            }
        }
        b
    }

    #[test]
    fn fixed_variant_scores() {
        let roster = Roster::new(vec![0.1, 0.3, 0.5, 0.7, 0.9]).unwrap();
        let nm = ModelBundle::no_memory().predict_scores(&roster).unwrap();
        assert_eq!(nm.inherent(), &[1.0; 5]);
        assert_eq!(nm.memory(), &[0.0; 5]);
        let hm = ModelBundle::high_memory().predict_scores(&roster).unwrap();
        assert_eq!(hm.inherent(), &[1e-2; 5]);
        assert_eq!(hm.memory(), &[1.0; 5]);
        assert_eq!(ModelBundle::high_memory().proclivity(), &Proclivity::ExpDecay);
    }

    #[test]
    fn fresh_pro_predicts_one_half() {
        let b = ModelBundle::new(Variant::Pro, &FitConfig::default()).unwrap();
        let roster = Roster::new(vec![0.1, 0.42, 1.0]).unwrap();
        let s = b.predict_scores(&roster).unwrap();
        assert_eq!(s.inherent(), &[0.5; 3]);
        assert_eq!(s.memory(), &[0.5; 3]);
        assert_eq!(b.proclivity().at(7), 0.5);
    }

    #[test]
    fn fused_loss_matches_model_core() {
        let group = toy_group(3, 60);
        let b = perturbed(&ModelBundle::new(Variant::Pro, &small_config()).unwrap(), 1);
        let scores = b.predict_scores(&group.roster).unwrap();
        let u = likelihood_sequence(&scores, b.proclivity(), &group.conversation).unwrap();
        let reference = nll_loss(&u, &group.conversation).unwrap();
        let fused = mean_nll(&b, std::slice::from_ref(&group), LIKELIHOOD_FLOOR).unwrap();
        assert!((reference - fused).abs() < 1e-12);
    }

    fn check_block_against_finite_differences(variant: Variant, block: Block, seed: u64) {
        let group = toy_group(seed, 10);
        let b = perturbed(&ModelBundle::new(variant, &small_config()).unwrap(), seed + 100);
        let groups = std::slice::from_ref(&group);
        let (_, grads) = objective_gradients(&b, groups, block, LIKELIHOOD_FLOOR).unwrap();
        let h = 1e-5;
        let nets: Vec<(usize, &GradientSet)> = [&grads.inherent, &grads.memory, &grads.proclivity]
            .iter()
            .enumerate()
            .filter_map(|(k, g)| g.as_ref().map(|g| (k, g)))
            .collect();
        assert!(!nets.is_empty());
        for (which, set) in nets {
            let analytic: Vec<f64> = set.values().collect();
            for (j, a) in analytic.iter().enumerate() {
                let bumped = |delta: f64| {
                    let mut probe = b.clone();
                    let net = match which {
                        0 => probe.inherent_net.as_mut().unwrap(),
                        1 => probe.memory_net.as_mut().unwrap(),
                        _ => probe.proclivity.network_mut().unwrap(),
                    };
                    let mut idx = j;
                    for layer in net.layers_mut() {
                        let wl = layer.weights().len();
                        let bl = layer.bias().len();
                        if idx < wl {
                            layer.weights_mut()[idx] += delta;
                            break;
                        } else if idx < wl + bl {
                            layer.bias_mut()[idx - wl] += delta;
                            break;
                        }
                        idx -= wl + bl;
                    }
                    mean_nll(&probe, groups, LIKELIHOOD_FLOOR).unwrap()
                };
                let numeric = (bumped(h) - bumped(-h)) / (2.0 * h);
                if a.abs() < 1e-6 {
                    assert!((a - numeric).abs() < 1e-7, "{variant} {block:?} {a} vs {numeric}");
                } else {
                    assert!(
                        ((a - numeric) / a).abs() < 1e-4,
                        "{variant} {block:?} {a} vs {numeric}"
                    );
                }
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        check_block_against_finite_differences(Variant::Pro, Block::Scores, 1);
        check_block_against_finite_differences(Variant::Pro, Block::Proclivity, 2);
        check_block_against_finite_differences(Variant::Exp, Block::Scores, 3);
    }

    #[test]
    fn fixed_variants_have_no_gradients() {
        let group = toy_group(0, 10);
        for b in [ModelBundle::no_memory(), ModelBundle::high_memory()] {
            for block in [Block::Scores, Block::Proclivity] {
                let g = conversation_nll_gradients(&b, &group.roster, &group.conversation, block)
                    .unwrap();
                assert!(g.is_empty());
            }
        }
        let exp = ModelBundle::new(Variant::Exp, &small_config()).unwrap();
        let g = conversation_nll_gradients(&exp, &group.roster, &group.conversation, Block::Proclivity)
            .unwrap();
        assert!(g.is_empty());
    }

    #[test]
    fn single_turn_only_moves_inherent_net() {
        let b = perturbed(&ModelBundle::new(Variant::Pro, &small_config()).unwrap(), 5);
        let roster = Roster::new(vec![0.2, 0.8]).unwrap();
        let c = Conversation::new(vec![1], 2).unwrap();
        let g = conversation_nll_gradients(&b, &roster, &c, Block::Scores).unwrap();
        assert!(g.inherent.as_ref().unwrap().values().any(|v| v != 0.0));
        assert!(g.memory.as_ref().unwrap().values().all(|v| v == 0.0));
        let g = conversation_nll_gradients(&b, &roster, &c, Block::Proclivity).unwrap();
        assert!(g.proclivity.as_ref().unwrap().values().all(|v| v == 0.0));
    }

    #[test]
    fn fitting_fixed_variant_is_identity() {
        let data = TrainingSet {
            train: vec![toy_group(0, 30)],
            validation: vec![],
        };
        let out = fit(&ModelBundle::no_memory(), &data, &small_config()).unwrap();
        assert_eq!(out.bundle, ModelBundle::no_memory());
        assert!(out.history.is_empty());
    }

    #[test]
    fn fit_rejects_empty_training_set() {
        let b = ModelBundle::new(Variant::Exp, &small_config()).unwrap();
        assert!(matches!(
            fit(&b, &TrainingSet::default(), &small_config()),
            Err(Error::EmptyTrainingSet)
        ));
    }

    #[test]
    fn small_steps_do_not_increase_training_loss() {
        let data = TrainingSet {
            train: vec![toy_group(11, 200)],
            validation: vec![],
        };
        let config = FitConfig {
            step: 0.01,
            max_outer: 30,
            patience: 1000,
            ..small_config()
        };
        let b = ModelBundle::new(Variant::Pro, &config).unwrap();
        let out = fit(&b, &data, &config).unwrap();
        for w in out.history.windows(2) {
            assert!(w[1].train_loss <= w[0].train_loss + 1e-6, "{w:?}");
        }
        assert!(out.history.last().unwrap().train_loss < out.history[0].train_loss);
    }

    #[test]
    fn fit_is_reproducible_and_returns_best_snapshot() {
        let data = TrainingSet {
            train: vec![toy_group(1, 150), toy_group(2, 150)],
            validation: vec![toy_group(3, 150)],
        };
        let config = FitConfig {
            max_outer: 25,
            patience: 5,
            ..small_config()
        };
        let b = ModelBundle::new(Variant::Pro, &config).unwrap();
        let a = fit(&b, &data, &config).unwrap();
        let again = fit(&b, &data, &config).unwrap();
        assert_eq!(a, again);
        let best = mean_nll(&a.bundle, &data.validation, LIKELIHOOD_FLOOR).unwrap();
        assert_eq!(best, a.best_val_loss());
        assert!(best <= a.history.last().unwrap().val_loss);
    }

    #[test]
    fn blocks_leave_other_networks_untouched() {
        let data = TrainingSet {
            train: vec![toy_group(4, 80)],
            validation: vec![],
        };
        let b = perturbed(&ModelBundle::new(Variant::Pro, &small_config()).unwrap(), 9);
        let (_, g) = objective_gradients(&b, &data.train, Block::Scores, LIKELIHOOD_FLOOR).unwrap();
        let mut after = b.clone();
        after.apply_block(&g, 0.1).unwrap();
        assert_eq!(after.proclivity_net(), b.proclivity_net());
        assert_ne!(after.inherent_net(), b.inherent_net());

        let (_, g) =
            objective_gradients(&b, &data.train, Block::Proclivity, LIKELIHOOD_FLOOR).unwrap();
        let mut after = b.clone();
        after.apply_block(&g, 0.1).unwrap();
        assert_eq!(after.inherent_net(), b.inherent_net());
        assert_eq!(after.memory_net(), b.memory_net());
        assert_ne!(after.proclivity_net(), b.proclivity_net());
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let pro = perturbed(&ModelBundle::new(Variant::Pro, &small_config()).unwrap(), 2);
        pro.save_checkpoint(dir.path()).unwrap();
        assert_eq!(ModelBundle::load_checkpoint(dir.path()).unwrap(), pro);

        let dir = tempfile::tempdir().unwrap();
        let exp = ModelBundle::new(Variant::Exp, &small_config()).unwrap();
        exp.save_checkpoint(dir.path()).unwrap();
        assert!(!dir.path().join("nu.csv").exists());
        assert_eq!(ModelBundle::load_checkpoint(dir.path()).unwrap(), exp);

        assert!(ModelBundle::no_memory().save_checkpoint(dir.path()).is_err());
    }

    #[test]
    fn variant_parsing() {
        assert_eq!("PRO".parse::<Variant>().unwrap(), Variant::Pro);
        assert!("true".parse::<Variant>().is_err());
    }
}
