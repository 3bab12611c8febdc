use rayon::prelude::*;

use crate::decode::{run_task, DecodeConfig, TaskOutput, TaskSpec};
use crate::error::{Error, Result};
use crate::numcore::Real;
use crate::prompts::{Framer, PromptSet};
use crate::unitlm::UnitLm;
use crate::verbalizer::Verbalizer;

/// One request in a heterogeneous batch: its own task, prompts and
/// verbalizer over the shared backbone.
#[derive(Debug, Clone, Copy)]
pub struct BatchItem<'a, T> {
    pub task: &'a TaskSpec,
    pub prompts: &'a PromptSet<T>,
    pub verbalizer: &'a Verbalizer<T>,
    /// Hash of the backbone the prompts were tuned against.
    pub backbone_hash: u64,
    pub source: &'a [usize],
}

/// Runs every item against `lm`. Items are independent, so the result equals
/// running each one alone.
pub fn in_batch_infer<T: Real>(
    lm: &UnitLm<T>,
    items: &[BatchItem<'_, T>],
    decode: &DecodeConfig,
) -> Result<Vec<TaskOutput>> {
    let expected = lm.backbone_hash();
    if let Some(item) = items.iter().find(|i| i.backbone_hash != expected) {
        return Err(Error::BackboneMismatch {
            expected,
            found: item.backbone_hash,
        });
    }
    items
        .par_iter()
        .map(|item| {
            let framer = Framer::new(lm, item.prompts, item.verbalizer)?;
            run_task(framer, item.task, item.source, decode)
        })
        .collect()
}
