//! Many-to-one unit-to-symbol transcription on a frozen denoising
//! encoder-decoder, comparing a learnable verbalizer with a fixed one and
//! exporting the learned unit weights.
//!
//! Writes checkpoints and `verbalizer_weights.csv` to the directory given as
//! the first argument (default `transcription_out`).

use std::path::PathBuf;

use anyhow::Result;
use unitprompt::harness::{cache_dir_from_env, ExperimentConfig, Prepared, VerbalizerKind};
use unitprompt::verbalizer::Verbalizer;

const CONFIG: &str = include_str!("../configs/transcription.toml");

fn main() -> Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "transcription_out".into()));
    let config = ExperimentConfig::parse(CONFIG, &[])?;
    let cache = cache_dir_from_env();
    let prepared = Prepared::new(config, cache.as_deref())?;

    let learnable = prepared.tune(VerbalizerKind::Learnable)?;
    let learnable_metrics = prepared.evaluate(&learnable)?;
    let fixed = prepared.tune(VerbalizerKind::Fixed)?;
    let fixed_metrics = prepared.evaluate(&fixed)?;
    println!("learnable verbalizer: {learnable_metrics:?}");
    println!("fixed verbalizer:     {fixed_metrics:?}");

    let test = prepared.bound(&prepared.test)?;
    let outputs = prepared.predict(&learnable, &test[..5])?;
    for (ex, o) in test.iter().zip(&outputs) {
        let name = |l: &usize| prepared.task.labels[*l].clone();
        let hyp: Vec<String> = o.labels.iter().map(|l| l.as_ref().map_or("?".into(), name)).collect();
        let reference: Vec<String> = ex.labels.iter().map(name).collect();
        println!("units {:?}\n  ref {}\n  hyp {}", ex.source, reference.join(" "), hyp.join(" "));
    }

    prepared.save(&learnable, &out)?;
    if let Verbalizer::Learnable(v) = &learnable.verbalizer {
        println!("{} verbalizer weights; top units written to {}", v.num_params(), out.join("verbalizer_weights.csv").display());
    }
    Ok(())
}
