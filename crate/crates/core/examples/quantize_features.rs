//! Fits k-means on synthetic frame features, quantizes them into units and
//! checks the recovered units against the generator's own frame labels.

use std::collections::BTreeMap;

use anyhow::Result;
use unitprompt::unitizer::{
    deduplicate, kmeans_fit, quantize, synth_corpus, CorpusTask, FeatureSpec, GrammarSpec, SynthSpec,
};

fn main() -> Result<()> {
    let grammar = GrammarSpec {
        n_symbols: 10,
        n_units: 40,
        stickiness: 0.6,
        max_duration: 4,
        ..GrammarSpec::default()
    };
    let spec = SynthSpec {
        grammar,
        task: CorpusTask::Free { min_words: 2, max_words: 5 },
        dedup: false,
        features: Some(FeatureSpec { dim: 8, spread: 0.15 }),
    };
    let corpus = synth_corpus(&spec, 1, 300)?;
    let features: Vec<_> = corpus.iter().filter_map(|u| u.features.clone()).collect();
    let frames: usize = features.iter().map(|f| f.frames()).sum();

    let fit = kmeans_fit(&features, spec.grammar.n_units, 50, 7)?;
    println!(
        "k-means on {frames} frames: {} iterations, inertia {:.3} -> {:.3}",
        fit.iterations,
        fit.inertia.first().copied().unwrap_or(0.0),
        fit.inertia.last().copied().unwrap_or(0.0)
    );

    // Each cluster should align with one generator unit.
    let mut counts: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let (mut raw_len, mut dedup_len) = (0, 0);
    for (u, f) in corpus.iter().zip(&features) {
        let units = quantize(&fit.model, f)?;
        raw_len += units.len();
        dedup_len += deduplicate(&units).len();
        for (&cluster, &truth) in units.iter().zip(&u.frame_units) {
            *counts.entry((cluster, truth)).or_default() += 1;
        }
    }
    let mut best: BTreeMap<usize, usize> = BTreeMap::new();
    for (&(cluster, _), &n) in &counts {
        let b = best.entry(cluster).or_default();
        *b = (*b).max(n);
    }
    let purity = best.values().sum::<usize>() as f64 / frames as f64;
    println!("cluster purity against generator units: {purity:.3}");
    println!(
        "deduplication shortens sequences from {raw_len} to {dedup_len} units ({:.1}%)",
        100.0 * dedup_len as f64 / raw_len as f64
    );
    Ok(())
}
