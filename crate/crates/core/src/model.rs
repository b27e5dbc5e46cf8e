//! Turn-taking probability model.
//!
//! A group of `N` members speaks in turns. Each member `i` carries an
//! inherent score `pi_i` and a memory score `d_i`; given the gap `delta_i`
//! since the member last spoke, their speaking score is
//!
//! ```text
//! u_i = pi_i + d_i * w(delta_i)   if delta_i > 1
//! u_i = pi_i                      if i has never spoken
//! u_i = 0                         if i spoke the previous turn
//! ```
//!
//! and the next speaker is drawn with probability `u_i / sum_j u_j`.
//!
//! Members and turns are 0-based here. File formats and the CLI use 1-based
//! indices and convert at the boundary.

use rand::Rng;

use crate::error::{Error, Result};
use crate::proclivity::Proclivity;

/// Floor applied to eligible speaking scores inside the losses.
pub const LIKELIHOOD_FLOOR: f64 = 1e-8;

/// Number of turn classes.
pub const NUM_TURN_CLASSES: usize = 4;

/// Scalar traits of the members of one group.
#[derive(Debug, Clone, PartialEq)]
pub struct Roster {
    traits: Vec<f64>,
}

impl Roster {
    pub fn new(traits: Vec<f64>) -> Result<Self> {
        if traits.len() < 2 {
            return Err(Error::InvalidRoster(format!(
                "a group needs at least 2 members, got {}",
                traits.len()
            )));
        }
        if let Some(bad) = traits.iter().find(|x| !x.is_finite()) {
            return Err(Error::InvalidRoster(format!("non-finite trait {bad}")));
        }
        Ok(Self { traits })
    }

    pub fn traits(&self) -> &[f64] {
        &self.traits
    }

    pub fn len(&self) -> usize {
        self.traits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traits.is_empty()
    }
}

/// An observed sequence of speakers.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Conversation {
    speakers: Vec<usize>,
    group_size: usize,
}

impl Conversation {
    /// Builds a conversation from 0-based member indices.
    pub fn new(speakers: Vec<usize>, group_size: usize) -> Result<Self> {
        if group_size < 2 {
            return Err(Error::InvalidConversation(format!(
                "group size must be at least 2, got {group_size}"
            )));
        }
        for (t, &s) in speakers.iter().enumerate() {
            if s >= group_size {
                return Err(Error::InvalidConversation(format!(
                    "speaker {} at turn {} outside group of {}",
                    s + 1,
                    t + 1,
                    group_size
                )));
            }
            if t > 0 && speakers[t - 1] == s {
                return Err(Error::InvalidConversation(format!(
                    "member {} speaks twice in a row at turn {}",
                    s + 1,
                    t + 1
                )));
            }
        }
        Ok(Self {
            speakers,
            group_size,
        })
    }

    /// Builds a conversation from 1-based member indices.
    pub fn from_one_based(speakers: &[usize], group_size: usize) -> Result<Self> {
        let zero_based = speakers
            .iter()
            .enumerate()
            .map(|(t, &s)| {
                s.checked_sub(1).ok_or_else(|| {
                    Error::InvalidConversation(format!("speaker 0 at turn {}", t + 1))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(zero_based, group_size)
    }

    pub fn speakers(&self) -> &[usize] {
        &self.speakers
    }

    pub fn group_size(&self) -> usize {
        self.group_size
    }

    pub fn len(&self) -> usize {
        self.speakers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.speakers.is_empty()
    }
}

/// Per-member inherent and memory scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreParams {
    inherent: Vec<f64>,
    memory: Vec<f64>,
}

impl ScoreParams {
    pub fn new(inherent: Vec<f64>, memory: Vec<f64>) -> Result<Self> {
        if inherent.len() != memory.len() {
            return Err(Error::InvalidScores(format!(
                "{} inherent scores but {} memory scores",
                inherent.len(),
                memory.len()
            )));
        }
        if let Some(bad) = inherent
            .iter()
            .chain(memory.iter())
            .find(|v| !v.is_finite() || **v < 0.0)
        {
            return Err(Error::InvalidScores(format!(
                "scores must be finite and nonnegative, got {bad}"
            )));
        }
        Ok(Self { inherent, memory })
    }

    /// The same pair of scores for every member.
    pub fn constant(members: usize, inherent: f64, memory: f64) -> Result<Self> {
        Self::new(vec![inherent; members], vec![memory; members])
    }

    pub fn inherent(&self) -> &[f64] {
        &self.inherent
    }

    pub fn memory(&self) -> &[f64] {
        &self.memory
    }

    pub fn len(&self) -> usize {
        self.inherent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inherent.is_empty()
    }

    /// Multiplies both score vectors by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(
            self.inherent.iter().map(|v| v * c).collect(),
            self.memory.iter().map(|v| v * c).collect(),
        )
    }
}

/// Turns elapsed since a member last spoke.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Gap {
    Never,
    Turns(usize),
}

impl Gap {
    /// The gap as a signed integer; `None` for [`Gap::Never`].
    pub fn turns(self) -> Option<usize> {
        match self {
            Gap::Never => None,
            Gap::Turns(d) => Some(d),
        }
    }

    /// Whether a member with this gap may take the next turn.
    pub fn is_eligible(self) -> bool {
        self != Gap::Turns(1)
    }
}

/// Incremental gap bookkeeping while walking a conversation.
#[derive(Debug, Clone)]
pub struct GapTracker {
    last_spoke: Vec<Option<usize>>,
    turn: usize,
}

impl GapTracker {
    pub fn new(group_size: usize) -> Self {
        Self {
            last_spoke: vec![None; group_size],
            turn: 0,
        }
    }

    /// 0-based index of the turn about to be taken.
    pub fn turn(&self) -> usize {
        self.turn
    }

    pub fn gap(&self, member: usize) -> Gap {
        match self.last_spoke[member] {
            Some(j) => Gap::Turns(self.turn - j),
            None => Gap::Never,
        }
    }

    pub fn gaps(&self) -> Vec<Gap> {
        (0..self.last_spoke.len()).map(|i| self.gap(i)).collect()
    }

    /// Member who took the previous turn.
    pub fn previous_speaker(&self) -> Option<usize> {
        self.last_spoke
            .iter()
            .position(|&j| self.turn > 0 && j == Some(self.turn - 1))
    }

    pub fn advance(&mut self, speaker: usize) {
        self.last_spoke[speaker] = Some(self.turn);
        self.turn += 1;
    }
}

/// Gaps of every member just before the 0-based turn `turn` is taken.
///
/// `turn == conversation.len()` is allowed and describes the state for
/// predicting the turn after the conversation ends.
pub fn compute_gaps(conversation: &Conversation, turn: usize) -> Result<Vec<Gap>> {
    if turn > conversation.len() {
        return Err(Error::TurnOutOfRange {
            turn,
            len: conversation.len(),
        });
    }
    let mut tracker = GapTracker::new(conversation.group_size());
    for &s in &conversation.speakers()[..turn] {
        tracker.advance(s);
    }
    Ok(tracker.gaps())
}

/// Speaking score of one member.
#[inline]
pub fn speaking_score(inherent: f64, memory: f64, proclivity_value: f64, gap: Gap) -> f64 {
    match gap {
        Gap::Turns(1) => 0.0,
        Gap::Never => inherent,
        Gap::Turns(_) => inherent + memory * proclivity_value,
    }
}

/// Speaking scores `u` of all members given their gaps.
pub fn speaking_scores(params: &ScoreParams, proclivity: &Proclivity, gaps: &[Gap]) -> Vec<f64> {
    gaps.iter()
        .enumerate()
        .map(|(i, &gap)| {
            speaking_score(
                params.inherent[i],
                params.memory[i],
                proclivity.value(gap),
                gap,
            )
        })
        .collect()
}

/// Normalizes speaking scores into a probability vector.
pub fn speaking_probabilities(scores: &[f64]) -> Result<Vec<f64>> {
    let total = checked_total(scores)?;
    Ok(scores.iter().map(|u| u / total).collect())
}

fn checked_total(scores: &[f64]) -> Result<f64> {
    if let Some(bad) = scores.iter().find(|u| !u.is_finite() || **u < 0.0) {
        return Err(Error::NonFinite(format!("speaking score {bad}")));
    }
    let total: f64 = scores.iter().sum();
    if total <= 0.0 {
        return Err(Error::DegenerateDistribution);
    }
    Ok(total)
}

/// Most likely next speaker; ties go to the lowest index.
pub fn next_speaker(scores: &[f64]) -> Result<usize> {
    checked_total(scores)?;
    let mut best = 0;
    for (i, &u) in scores.iter().enumerate() {
        if u > scores[best] {
            best = i;
        }
    }
    Ok(best)
}

/// Speaking scores at every turn of a conversation.
pub fn likelihood_sequence(
    params: &ScoreParams,
    proclivity: &Proclivity,
    conversation: &Conversation,
) -> Result<Vec<Vec<f64>>> {
    if params.len() != conversation.group_size() {
        return Err(Error::InvalidScores(format!(
            "{} scores for a group of {}",
            params.len(),
            conversation.group_size()
        )));
    }
    let mut tracker = GapTracker::new(conversation.group_size());
    let mut out = Vec::with_capacity(conversation.len());
    for &s in conversation.speakers() {
        out.push(speaking_scores(params, proclivity, &tracker.gaps()));
        tracker.advance(s);
    }
    Ok(out)
}

/// Draws a conversation of `turns` turns from the model.
pub fn sample_conversation<R: Rng + ?Sized>(
    params: &ScoreParams,
    proclivity: &Proclivity,
    turns: usize,
    rng: &mut R,
) -> Result<Conversation> {
    let n = params.len();
    if n < 2 {
        return Err(Error::InvalidScores(format!(
            "cannot sample a conversation for {n} members"
        )));
    }
    let mut tracker = GapTracker::new(n);
    let mut speakers = Vec::with_capacity(turns);
    let mut scores = vec![0.0; n];
    for _ in 0..turns {
        for (i, u) in scores.iter_mut().enumerate() {
            let gap = tracker.gap(i);
            *u = speaking_score(
                params.inherent[i],
                params.memory[i],
                proclivity.value(gap),
                gap,
            );
        }
        let s = sample_index(&scores, rng)?;
        speakers.push(s);
        tracker.advance(s);
    }
    Conversation::new(speakers, n)
}

/// Draws an index with probability proportional to `weights`.
pub fn sample_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Result<usize> {
    let total = checked_total(weights)?;
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last_positive = i;
            if target < acc {
                return Ok(i);
            }
        }
    }
    // rounding can leave target == total
    Ok(last_positive)
}

/// Turn classes by the pattern of recent speakers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TurnClass {
    /// A-B-A: the speaker from two turns ago retakes the turn.
    Floor,
    /// A-B-A-C: a new speaker breaks an A-B exchange.
    BrokenFloor,
    /// A-B-A-C-B: a member of an interrupted exchange takes it back.
    Regain,
    NonFloor,
}

impl TurnClass {
    pub const ALL: [TurnClass; NUM_TURN_CLASSES] = [
        TurnClass::Floor,
        TurnClass::BrokenFloor,
        TurnClass::Regain,
        TurnClass::NonFloor,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            TurnClass::Floor => "floor",
            TurnClass::BrokenFloor => "broken_floor",
            TurnClass::Regain => "regain",
            TurnClass::NonFloor => "nonfloor",
        }
    }
}

/// Class of the 0-based turn `turn`. Conditions that look before the first
/// turn are false.
pub fn classify_turn(conversation: &Conversation, turn: usize) -> Result<TurnClass> {
    let s = conversation.speakers();
    if turn >= s.len() {
        return Err(Error::TurnOutOfRange {
            turn,
            len: s.len(),
        });
    }
    let back = |k: usize| turn.checked_sub(k).map(|j| s[j]);
    let now = Some(s[turn]);
    let eq = |a: Option<usize>, b: Option<usize>| a.is_some() && a == b;

    if eq(now, back(2)) {
        return Ok(TurnClass::Floor);
    }
    if back(2).is_some() && eq(back(1), back(3)) {
        return Ok(TurnClass::BrokenFloor);
    }
    if eq(now, back(3)) && back(3) != back(1) && eq(back(2), back(4)) {
        return Ok(TurnClass::Regain);
    }
    Ok(TurnClass::NonFloor)
}

/// Inverse-frequency turn-class weights for one conversation.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassWeights {
    classes: Vec<TurnClass>,
    counts: [usize; NUM_TURN_CLASSES],
    weights: Vec<f64>,
}

impl ClassWeights {
    pub fn classes(&self) -> &[TurnClass] {
        &self.classes
    }

    pub fn counts(&self) -> [usize; NUM_TURN_CLASSES] {
        self.counts
    }

    pub fn count(&self, class: TurnClass) -> usize {
        self.counts[class.index()]
    }

    /// Weight of each turn.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weight shared by every turn of `class`; `None` if the class is empty.
    pub fn class_weight(&self, class: TurnClass) -> Option<f64> {
        let count = self.count(class);
        (count > 0).then(|| {
            self.classes.len() as f64 / (NUM_TURN_CLASSES as f64 * count as f64)
        })
    }
}

pub fn class_weights(conversation: &Conversation) -> ClassWeights {
    let classes: Vec<TurnClass> = (0..conversation.len())
        .map(|t| classify_turn(conversation, t).expect("turn in range"))
        .collect();
    ClassWeights::from_classes(classes)
}

impl ClassWeights {
    /// Weights for an explicit sequence of turn classes.
    pub fn from_classes(classes: Vec<TurnClass>) -> Self {
    let mut counts = [0usize; NUM_TURN_CLASSES];
    for c in &classes {
        counts[c.index()] += 1;
    }
    let total = classes.len() as f64;
    let weights = classes
        .iter()
        .map(|c| total / (NUM_TURN_CLASSES as f64 * counts[c.index()] as f64))
        .collect();
    ClassWeights {
        classes,
        counts,
        weights,
    }
    }
}

/// `-log p(observed)` at each turn after flooring eligible scores.
pub fn turn_log_losses(likelihoods: &[Vec<f64>], conversation: &Conversation) -> Result<Vec<f64>> {
    if likelihoods.len() != conversation.len() {
        return Err(Error::InvalidConversation(format!(
            "{} likelihood vectors for {} turns",
            likelihoods.len(),
            conversation.len()
        )));
    }
    let speakers = conversation.speakers();
    let mut out = Vec::with_capacity(speakers.len());
    for (t, u) in likelihoods.iter().enumerate() {
        if u.len() != conversation.group_size() {
            return Err(Error::InvalidScores(format!(
                "likelihood vector of length {} at turn {} for a group of {}",
                u.len(),
                t + 1,
                conversation.group_size()
            )));
        }
        let previous = t.checked_sub(1).map(|j| speakers[j]);
        let observed = speakers[t];
        let mut total = 0.0;
        let mut observed_score = 0.0;
        for (i, &raw) in u.iter().enumerate() {
            if !raw.is_finite() || raw < 0.0 {
                return Err(Error::NonFinite(format!(
                    "speaking score {raw} at turn {}",
                    t + 1
                )));
            }
            let v = if Some(i) == previous {
                raw
            } else {
                raw.max(LIKELIHOOD_FLOOR)
            };
            total += v;
            if i == observed {
                observed_score = v;
            }
        }
        if observed_score <= 0.0 || total <= 0.0 {
            return Err(Error::InfiniteLoss {
                turn: t,
                speaker: observed,
            });
        }
        out.push(-(observed_score / total).ln());
    }
    Ok(out)
}

/// Mean per-turn negative log-likelihood.
pub fn nll_loss(likelihoods: &[Vec<f64>], conversation: &Conversation) -> Result<f64> {
    let losses = turn_log_losses(likelihoods, conversation)?;
    Ok(mean(&losses))
}

/// Mean per-turn class-weighted negative log-likelihood.
pub fn weighted_loss(likelihoods: &[Vec<f64>], conversation: &Conversation) -> Result<f64> {
    let losses = turn_log_losses(likelihoods, conversation)?;
    let weights = class_weights(conversation);
    let total: f64 = losses
        .iter()
        .zip(weights.weights())
        .map(|(l, g)| l * g)
        .sum();
    Ok(if losses.is_empty() {
        0.0
    } else {
        total / losses.len() as f64
    })
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}
