use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{TargetShape, TaskHeadSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    /// Recover tokens replaced by the mask id.
    MaskedToken,
    /// Predict each next token; the last position is unscored.
    NextToken,
    /// Was this sequence's order permuted?
    ShuffleDetect,
    /// Labels drawn independently of the inputs.
    Noise,
    /// Does the world's designated bigram occur contiguously?
    BigramPresence,
}

impl TaskKind {
    pub const ALL: [TaskKind; 5] = [
        TaskKind::MaskedToken,
        TaskKind::NextToken,
        TaskKind::ShuffleDetect,
        TaskKind::Noise,
        TaskKind::BigramPresence,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::MaskedToken => "masked_token",
            TaskKind::NextToken => "next_token",
            TaskKind::ShuffleDetect => "shuffle_detect",
            TaskKind::Noise => "noise",
            TaskKind::BigramPresence => "bigram_presence",
        }
    }

    pub fn target_shape(self) -> TargetShape {
        match self {
            TaskKind::MaskedToken | TaskKind::NextToken => TargetShape::PerToken,
            _ => TargetShape::PerSequence,
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TaskKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownTaskKind(s.to_string()))
    }
}

/// A registered task: its data distribution plus the head that predicts it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: String,
    pub kind: TaskKind,
    pub batch_size: usize,
    pub head: TaskHeadSpec,
}

impl TaskSpec {
    /// Token tasks predict over the content vocabulary; sequence tasks are
    /// binary unless `classes` overrides it (noise only).
    pub fn new(
        id: &str,
        kind: TaskKind,
        batch_size: usize,
        vocab_size: usize,
        classes: Option<usize>,
    ) -> Result<Self> {
        validate_task_id(id)?;
        if batch_size == 0 {
            return Err(Error::config(format!("tasks.{id}.batch_size"), "must be at least 1"));
        }
        if kind == TaskKind::ShuffleDetect && batch_size < 2 {
            return Err(Error::config(
                format!("tasks.{id}.batch_size"),
                "shuffle detection needs at least 2 sequences per batch",
            ));
        }
        let output_classes = match (kind, classes) {
            (TaskKind::MaskedToken | TaskKind::NextToken, None) => vocab_size,
            (TaskKind::Noise, Some(c)) => c,
            (_, None) => 2,
            (_, Some(_)) => {
                return Err(Error::config(
                    format!("tasks.{id}.classes"),
                    format!("only noise tasks take a class count, not {kind}"),
                ))
            }
        };
        if output_classes < 2 {
            return Err(Error::config(format!("tasks.{id}.classes"), "must be at least 2"));
        }
        Ok(Self {
            id: id.to_string(),
            kind,
            batch_size,
            head: TaskHeadSpec {
                task_id: id.to_string(),
                output_classes,
                target_shape: kind.target_shape(),
            },
        })
    }
}

/// Ids appear in parameter names and CSV headers, so they are restricted to
/// `[A-Za-z0-9_-]+`.
pub fn validate_task_id(id: &str) -> Result<()> {
    if id.is_empty()
        || !id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
    {
        return Err(Error::config(
            "tasks.id",
            format!("`{id}` must be non-empty and use only [A-Za-z0-9_-]"),
        ));
    }
    Ok(())
}

/// Where a subtask came from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct Provenance {
    pub episode: u64,
    pub draw: u64,
}

/// One batch of examples for one task.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Subtask {
    pub task_id: String,
    pub batch_size: usize,
    pub context_len: usize,
    /// Row-major `batch x context` token ids.
    pub inputs: Vec<usize>,
    /// `batch x context` for token tasks, `batch` for sequence tasks.
    pub labels: Vec<usize>,
    /// Same length as `labels`; only set entries are scored.
    pub mask: Vec<bool>,
    pub provenance: Provenance,
}

impl Subtask {
    pub fn scored(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}
