//! Few-shot command classification: 10 examples per class against the full
//! training set, with the linear probe for reference.

use anyhow::Result;
use unitprompt::harness::{cache_dir_from_env, ExperimentConfig, Prepared};

const CONFIG: &str = include_str!("../configs/command.toml");

fn main() -> Result<()> {
    let k = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(10usize);
    let cache = cache_dir_from_env();
    let config = ExperimentConfig::parse(CONFIG, &[("task.fewshot".into(), k.to_string())])?;
    let prepared = Prepared::new(config, cache.as_deref())?;
    println!(
        "{k}-shot: {} training examples over {} classes",
        prepared.train.len(),
        prepared.task.labels.len()
    );
    let tuned = prepared.tune(prepared.config.verbalizer_kind())?;
    let metrics = prepared.evaluate(&tuned)?;
    println!("prompt tuning accuracy {:.3}", metrics["accuracy"]);
    if let Some(probe) = metrics.get("probe_accuracy") {
        println!("linear probe accuracy  {probe:.3} ({} parameters)", metrics["probe_params"]);
    }
    Ok(())
}
