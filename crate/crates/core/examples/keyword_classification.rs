//! Prompt-tunes a frozen decoder-only unit LM on 8-class synthetic commands
//! and compares it with a linear probe on mean-pooled embeddings.
//!
//! Set UNITPROMPT_CACHE to reuse the pretrained backbone across runs. Extra
//! `--section.key value` arguments override `configs/command.toml`.

use std::time::Instant;

use anyhow::{Context, Result};
use unitprompt::harness::{cache_dir_from_env, ExperimentConfig, Prepared};

const CONFIG: &str = include_str!("../configs/command.toml");

fn overrides() -> Result<Vec<(String, String)>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    args.chunks(2)
        .map(|kv| {
            let value = kv.get(1).with_context(|| format!("{} needs a value", kv[0]))?;
            Ok((kv[0].trim_start_matches("--").to_string(), value.clone()))
        })
        .collect()
}

fn main() -> Result<()> {
    let config = ExperimentConfig::parse(CONFIG, &overrides()?)?;
    let cache = cache_dir_from_env();
    let start = Instant::now();
    let prepared = Prepared::new(config, cache.as_deref())?;
    println!(
        "backbone ready in {:.1}s; {} train / {} test examples, labels {:?}",
        start.elapsed().as_secs_f64(),
        prepared.train.len(),
        prepared.test.len(),
        prepared.task.labels
    );

    let start = Instant::now();
    let tuned = prepared.tune(prepared.config.verbalizer_kind())?;
    println!(
        "tuned {} steps (best {:?}) in {:.1}s",
        tuned.report.steps,
        tuned.report.best_step,
        start.elapsed().as_secs_f64()
    );
    let every = prepared.config.train.eval_every;
    for (step, loss) in &tuned.report.valid_losses {
        let recent = &tuned.report.train_losses[step.saturating_sub(every)..*step];
        let train = recent.iter().sum::<f64>() / recent.len().max(1) as f64;
        println!("step {step:>5} train loss {train:.4} valid loss {loss:.4}");
    }
    for (name, value) in prepared.evaluate(&tuned)? {
        println!("{name:>30} {value:.4}");
    }
    Ok(())
}
