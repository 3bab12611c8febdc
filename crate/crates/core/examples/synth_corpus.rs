//! Samples the three synthetic tasks and writes them as JSONL datasets.

use anyhow::Result;
use unitprompt::harness::{save_dataset, Dataset};
use unitprompt::unitizer::{synth_corpus, CorpusTask, Grammar, GrammarSpec, SynthSpec};

fn main() -> Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "synth_out".into());
    std::fs::create_dir_all(&out)?;
    let grammar_spec = GrammarSpec::default();
    let grammar = Grammar::new(&grammar_spec)?;
    println!("{} lexicon words over {} symbols", grammar.lexicon.len(), grammar_spec.n_symbols);

    let tasks = [
        ("command", CorpusTask::Command { classes: 8, max_filler_words: 2 }),
        ("transcription", CorpusTask::Transcription { min_words: 1, max_words: 3 }),
        ("continuation", CorpusTask::Free { min_words: 3, max_words: 8 }),
    ];
    for (name, task) in tasks {
        let spec = SynthSpec {
            grammar: grammar_spec.clone(),
            task,
            dedup: true,
            features: None,
        };
        let corpus = synth_corpus(&spec, 0, 200)?;
        println!("\n{name}: labels {:?}", spec.label_set(&grammar));
        for u in corpus.iter().take(3) {
            println!("  units {:?}\n  labels {:?}", u.units, u.meta.labels);
        }
        let path = format!("{out}/{name}.jsonl");
        save_dataset(&Dataset::from_synth(&corpus), &path)?;
        println!("  wrote {} examples to {path}", corpus.len());
    }
    Ok(())
}
