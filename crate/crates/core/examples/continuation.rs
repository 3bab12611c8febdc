//! Speech continuation framing: the first `r` of each utterance is the
//! seed and the prompted LM generates the rest. Runs the r = 0.25, 0.5, 0.75
//! grid and reports BLEU, Auto-BLEU and the target log-likelihood with tuned
//! and untuned prompts.

use anyhow::Result;
use unitprompt::harness::{cache_dir_from_env, prepare_backbone, split_continuation, ExperimentConfig, Prepared};
use unitprompt::unitlm::save_checkpoint;

const CONFIG: &str = include_str!("../configs/continuation.toml");

fn main() -> Result<()> {
    // The ratio does not affect the backbone, so pretrain it once.
    let dir = tempfile::tempdir()?;
    let backbone = dir.path().join("backbone.spul");
    let lm = prepare_backbone(&ExperimentConfig::parse(CONFIG, &[])?, cache_dir_from_env().as_deref())?;
    std::fs::write(&backbone, save_checkpoint(&lm))?;

    for ratio in [0.25, 0.5, 0.75] {
        let overrides = [
            ("task.ratio".to_string(), ratio.to_string()),
            ("backbone.checkpoint".to_string(), backbone.display().to_string()),
        ];
        let prepared = Prepared::new(ExperimentConfig::parse(CONFIG, &overrides)?, None)?;
        let first = &prepared.test.examples[0].units;
        let (seed, target) = split_continuation(first, ratio)?;
        println!("r = {ratio}: {} units -> seed {} + target {}", first.len(), seed.len(), target.len());

        let tuned = prepared.tune(prepared.config.verbalizer_kind())?;
        for (name, value) in prepared.evaluate(&tuned)? {
            println!("  {name:>22} {value:.4}");
        }
    }
    Ok(())
}
