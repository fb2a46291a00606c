//! Synthetic world and the task families sampled from it.

mod sample;
mod spec;
mod world;

pub use sample::{irreducible_loss, masked_per_sequence, positives_per_batch, sample_subtask, MASK_RATIO};
pub use spec::{validate_task_id, Provenance, Subtask, TaskKind, TaskSpec};
pub use world::{build_world, World};
