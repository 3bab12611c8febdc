//! One frozen backbone serving three tasks in a single batch: command
//! classification, transcription and continuation, each with its own tuned
//! prompts and verbalizer.

use anyhow::{ensure, Result};
use unitprompt::decode::run_task;
use unitprompt::harness::{
    cache_dir_from_env, in_batch_infer, prepare_backbone, BatchItem, ExperimentConfig, Prepared, Tuned,
};
use unitprompt::prompts::Framer;
use unitprompt::unitlm::save_checkpoint;

const CONFIG: &str = include_str!("../configs/command.toml");

fn main() -> Result<()> {
    let dir = tempfile::tempdir()?;
    let backbone = dir.path().join("backbone.spul");
    let lm = prepare_backbone(&ExperimentConfig::parse(CONFIG, &[])?, cache_dir_from_env().as_deref())?;
    std::fs::write(&backbone, save_checkpoint(&lm))?;

    let shared = [
        ("backbone.checkpoint", backbone.display().to_string()),
        ("train.steps", "1500".to_string()),
        ("task.probe", "false".to_string()),
    ];
    let tasks: [&[(&str, &str)]; 3] = [
        &[],
        &[
            ("task.corpus", "transcription"),
            ("task.min_words", "1"),
            ("task.max_words", "2"),
            ("decode.max_len", "12"),
        ],
        &[
            ("task.corpus", "continuation"),
            ("task.ratio", "0.5"),
            ("verbalizer.kind", "identity"),
            ("decode.max_len", "16"),
        ],
    ];
    let mut setups: Vec<(Prepared, Tuned)> = Vec::new();
    for extra in tasks {
        let overrides: Vec<(String, String)> = shared
            .iter()
            .map(|(k, v)| (k.to_string(), v.clone()))
            .chain(extra.iter().map(|(k, v)| (k.to_string(), v.to_string())))
            .collect();
        let prepared = Prepared::new(ExperimentConfig::parse(CONFIG, &overrides)?, None)?;
        let tuned = prepared.tune(prepared.config.verbalizer_kind())?;
        println!("{:?}: {:?}", prepared.task.kind, prepared.evaluate(&tuned)?);
        setups.push((prepared, tuned));
    }

    // Interleave test utterances of all three tasks into one batch.
    let hash = setups[0].0.lm.backbone_hash();
    let mut items = Vec::new();
    for i in 0..4 {
        for (prepared, tuned) in &setups {
            items.push(BatchItem {
                task: &prepared.task,
                prompts: &tuned.prompts,
                verbalizer: &tuned.verbalizer,
                backbone_hash: hash,
                source: &prepared.test.examples[i].units,
            });
        }
    }
    let decode = setups[1].0.config.decode;
    let lm = &setups[0].0.lm;
    let outputs = in_batch_infer(lm, &items, &decode)?;
    for (item, out) in items.iter().zip(&outputs) {
        let solo = run_task(Framer::new(lm, item.prompts, item.verbalizer)?, item.task, item.source, &decode)?;
        ensure!(solo == *out, "batched output differs from its solo run");
        let shown: Vec<String> = match item.task.kind {
            unitprompt::harness::TaskKind::Generation => out.ids.iter().map(usize::to_string).collect(),
            _ => out.labels.iter().map(|l| l.map_or("?".into(), |l| item.task.labels[l].clone())).collect(),
        };
        println!("{:<14} {}", item.task.kind.name(), shown.join(" "));
    }
    println!("{} items decoded in one batch, each identical to its solo run", items.len());
    Ok(())
}
