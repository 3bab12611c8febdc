//! Saves and reloads backbone, prompt and verbalizer checkpoints, and shows
//! that prompts refuse to load against a different backbone.

use anyhow::{ensure, Result};
use unitprompt::container::Container;
use unitprompt::prompts::{load_prompts, save_prompts, PromptConfig, PromptSet};
use unitprompt::unitlm::{load_checkpoint, save_checkpoint, LmConfig, UnitLm};
use unitprompt::verbalizer::{load_verbalizer, save_verbalizer, LearnableVerbalizer, Verbalizer};
use unitprompt::Error;

fn main() -> Result<()> {
    let config = LmConfig {
        n_units: 50,
        d_model: 32,
        d_ff: 64,
        n_heads: 4,
        ..LmConfig::default()
    };
    let mut lm = UnitLm::<f32>::new(config.clone(), 1)?;
    lm.freeze();
    let backbone = save_checkpoint(&lm);
    let header = Container::from_bytes(&backbone)?;
    println!(
        "backbone: {} bytes, {} records, payload hash {:016x}",
        backbone.len(),
        header.records.len(),
        header.payload_hash()
    );
    let reloaded: UnitLm<f32> = load_checkpoint(&backbone)?;
    ensure!(reloaded.backbone_hash() == lm.backbone_hash());

    let prompts = PromptSet::<f32>::new(lm.config(), PromptConfig { length: 4, ..PromptConfig::default() }, 2);
    let bytes = save_prompts(&prompts, lm.backbone_hash());
    let back: PromptSet<f32> = load_prompts(&bytes, lm.backbone_hash())?;
    ensure!(back.tensors() == prompts.tensors());
    println!("prompts: {} parameters, {} bytes", prompts.num_params(), bytes.len());

    let other = UnitLm::<f32>::new(config.clone(), 2)?;
    match load_prompts::<f32>(&bytes, other.backbone_hash()) {
        Err(e @ Error::BackboneMismatch { .. }) => println!("loading against another backbone: {e}"),
        other => anyhow::bail!("expected a backbone mismatch, got {:?}", other.map(|p| p.num_params())),
    }

    let labels: Vec<String> = ["yes", "no", "up"].iter().map(|s| s.to_string()).collect();
    let v = Verbalizer::Learnable(LearnableVerbalizer::<f32>::new(3, config.vocab_size(), 0.01)?);
    let bytes = save_verbalizer(&v, &labels)?;
    let (back, back_labels) = load_verbalizer::<f32>(&bytes)?;
    ensure!(back == v && back_labels == labels);
    println!("verbalizer: {} weights, labels {back_labels:?}", v.num_trainable());
    Ok(())
}
