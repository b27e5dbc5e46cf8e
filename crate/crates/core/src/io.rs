//! CSV formats for conversations, rosters, ground-truth scores and datasets.
//!
//! All files are UTF-8 with a header row and LF line endings. Turns,
//! speakers and members are 1-based on disk and 0-based in memory.
//!
//! | file                | header                       |
//! |---------------------|------------------------------|
//! | `conversations.csv` | `group_id,turn,speaker`      |
//! | `rosters.csv`       | `group_id,member,trait`      |
//! | `truth.csv`         | `group_id,member,pi,d`       |
//!
//! A dataset directory holds one subdirectory per split (`train`, `val`,
//! `test`), each with the files above.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::EvalGroup;
use crate::model::{Conversation, Roster, ScoreParams};
use crate::synthgen::{SynthDataset, SynthGroup};
use crate::training::{Group, TrainingSet};

pub const CONVERSATIONS_FILE: &str = "conversations.csv";
pub const ROSTERS_FILE: &str = "rosters.csv";
pub const TRUTH_FILE: &str = "truth.csv";
pub const SPLITS: [&str; 3] = ["train", "val", "test"];

#[derive(Debug, Serialize, Deserialize)]
struct TurnRow {
    group_id: u64,
    turn: usize,
    speaker: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct RosterRow {
    group_id: u64,
    member: usize,
    #[serde(rename = "trait")]
    trait_value: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct TruthRow {
    group_id: u64,
    member: usize,
    pi: f64,
    d: f64,
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    r.deserialize()
        .map(|row| row.map_err(|e| Error::csv(path, e)))
        .collect()
}

fn format_error(path: &Path, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Checks that rows of one group are numbered `1, 2, ...` in order.
fn check_sequence(path: &Path, group: u64, what: &str, got: usize, expected: usize) -> Result<()> {
    if got != expected {
        return Err(format_error(
            path,
            format!("group {group}: expected {what} {expected}, found {got}"),
        ));
    }
    Ok(())
}

pub fn write_conversations<'a>(
    path: &Path,
    conversations: impl IntoIterator<Item = (u64, &'a Conversation)>,
) -> Result<()> {
    let rows = conversations.into_iter().flat_map(|(id, c)| {
        c.speakers().iter().enumerate().map(move |(t, &s)| TurnRow {
            group_id: id,
            turn: t + 1,
            speaker: s + 1,
        })
    });
    write_rows(path, rows)
}

/// Reads speaker sequences keyed by group. Group sizes are not stored in
/// this file, so the caller supplies them.
pub fn read_conversations(path: &Path) -> Result<BTreeMap<u64, Vec<usize>>> {
    let mut out: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for row in read_rows::<TurnRow>(path)? {
        let seq = out.entry(row.group_id).or_default();
        check_sequence(path, row.group_id, "turn", row.turn, seq.len() + 1)?;
        if row.speaker == 0 {
            return Err(format_error(path, "speakers are numbered from 1"));
        }
        seq.push(row.speaker - 1);
    }
    Ok(out)
}

pub fn write_rosters<'a>(
    path: &Path,
    rosters: impl IntoIterator<Item = (u64, &'a Roster)>,
) -> Result<()> {
    let rows = rosters.into_iter().flat_map(|(id, r)| {
        r.traits().iter().enumerate().map(move |(m, &x)| RosterRow {
            group_id: id,
            member: m + 1,
            trait_value: x,
        })
    });
    write_rows(path, rows)
}

pub fn read_rosters(path: &Path) -> Result<BTreeMap<u64, Roster>> {
    let mut traits: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for row in read_rows::<RosterRow>(path)? {
        let list = traits.entry(row.group_id).or_default();
        check_sequence(path, row.group_id, "member", row.member, list.len() + 1)?;
        list.push(row.trait_value);
    }
    traits
        .into_iter()
        .map(|(id, t)| {
            Roster::new(t)
                .map(|r| (id, r))
                .map_err(|e| format_error(path, format!("group {id}: {e}")))
        })
        .collect()
}

pub fn write_truth<'a>(
    path: &Path,
    truth: impl IntoIterator<Item = (u64, &'a ScoreParams)>,
) -> Result<()> {
    let rows = truth.into_iter().flat_map(|(id, s)| {
        s.inherent()
            .iter()
            .zip(s.memory())
            .enumerate()
            .map(move |(m, (&pi, &d))| TruthRow {
                group_id: id,
                member: m + 1,
                pi,
                d,
            })
    });
    write_rows(path, rows)
}

pub fn read_truth(path: &Path) -> Result<BTreeMap<u64, ScoreParams>> {
    let mut scores: BTreeMap<u64, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for row in read_rows::<TruthRow>(path)? {
        let (pi, d) = scores.entry(row.group_id).or_default();
        check_sequence(path, row.group_id, "member", row.member, pi.len() + 1)?;
        pi.push(row.pi);
        d.push(row.d);
    }
    scores
        .into_iter()
        .map(|(id, (pi, d))| {
            ScoreParams::new(pi, d)
                .map(|s| (id, s))
                .map_err(|e| format_error(path, format!("group {id}: {e}")))
        })
        .collect()
}

/// Writes one split's groups, plus ground truth when every group has it.
pub fn write_split(dir: &Path, groups: &[EvalGroup]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_conversations(
        &dir.join(CONVERSATIONS_FILE),
        groups.iter().map(|g| (g.group.id, &g.group.conversation)),
    )?;
    write_rosters(
        &dir.join(ROSTERS_FILE),
        groups.iter().map(|g| (g.group.id, &g.group.roster)),
    )?;
    if groups.iter().all(|g| g.truth.is_some()) {
        write_truth(
            &dir.join(TRUTH_FILE),
            groups
                .iter()
                .filter_map(|g| g.truth.as_ref().map(|t| (g.group.id, t))),
        )?;
    }
    Ok(())
}

/// Reads one split. Ground truth is attached when `truth.csv` exists.
pub fn read_split(dir: &Path) -> Result<Vec<EvalGroup>> {
    let conv_path = dir.join(CONVERSATIONS_FILE);
    let rosters = read_rosters(&dir.join(ROSTERS_FILE))?;
    let mut speakers = read_conversations(&conv_path)?;
    let truth_path = dir.join(TRUTH_FILE);
    let mut truth = if truth_path.exists() {
        Some(read_truth(&truth_path)?)
    } else {
        None
    };
    if let Some(extra) = speakers.keys().find(|id| !rosters.contains_key(id)) {
        return Err(format_error(
            &conv_path,
            format!("group {extra} has a conversation but no roster"),
        ));
    }
    rosters
        .into_iter()
        .map(|(id, roster)| {
            let seq = speakers.remove(&id).ok_or_else(|| {
                format_error(&conv_path, format!("group {id} has no conversation"))
            })?;
            let conversation = Conversation::new(seq, roster.len())
                .map_err(|e| format_error(&conv_path, format!("group {id}: {e}")))?;
            let group = Group::new(id, roster, conversation)?;
            let truth = match truth.as_mut() {
                Some(t) => Some(t.remove(&id).ok_or(Error::MissingGroundTruth(id))?),
                None => None,
            };
            Ok(EvalGroup { group, truth })
        })
        .collect()
}

/// A dataset read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedDataset {
    pub train: Vec<EvalGroup>,
    pub validation: Vec<EvalGroup>,
    pub test: Vec<EvalGroup>,
}

impl LoadedDataset {
    pub fn training_set(&self) -> TrainingSet {
        let strip = |groups: &[EvalGroup]| groups.iter().map(|g| g.group.clone()).collect();
        TrainingSet {
            train: strip(&self.train),
            validation: strip(&self.validation),
        }
    }
}

fn eval_groups(groups: &[SynthGroup]) -> Vec<EvalGroup> {
    groups.iter().map(EvalGroup::from).collect()
}

pub fn write_dataset(dir: &Path, dataset: &SynthDataset) -> Result<()> {
    write_split(&dir.join("train"), &eval_groups(&dataset.train))?;
    write_split(&dir.join("val"), &eval_groups(&dataset.validation))?;
    write_split(&dir.join("test"), &eval_groups(&dataset.test))
}

/// Reads `train`, `val` and `test` splits. A missing split directory reads
/// as empty; malformed files are errors.
pub fn read_dataset(dir: &Path) -> Result<LoadedDataset> {
    if !dir.is_dir() {
        return Err(Error::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "dataset directory not found"),
        ));
    }
    let split = |name: &str| {
        let d = dir.join(name);
        if d.is_dir() {
            read_split(&d)
        } else {
            Ok(Vec::new())
        }
    };
    Ok(LoadedDataset {
        train: split("train")?,
        validation: split("val")?,
        test: split("test")?,
    })
}
