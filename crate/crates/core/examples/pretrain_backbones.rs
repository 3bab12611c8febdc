//! Pretrains a small decoder-only LM (next-unit prediction) and a small
//! encoder-decoder (span-masked denoising) on a synthetic unit corpus, then
//! round-trips both through checkpoints.

use std::time::Instant;

use anyhow::{ensure, Result};
use unitprompt::unitizer::{synth_corpus, CorpusTask, GrammarSpec, SynthSpec};
use unitprompt::unitlm::{
    denoise_accuracy, load_checkpoint, next_token_accuracy, pretrain_denoise, pretrain_next_token, save_checkpoint,
    LmConfig, NoiseSpec, PretrainConfig, UnitLm, Variant,
};

fn main() -> Result<()> {
    let grammar = GrammarSpec::default();
    let spec = SynthSpec {
        grammar: grammar.clone(),
        task: CorpusTask::Free { min_words: 2, max_words: 8 },
        dedup: true,
        features: None,
    };
    let corpus: Vec<Vec<usize>> = synth_corpus(&spec, 0, 600)?.into_iter().map(|u| u.units).collect();
    let held_out: Vec<Vec<usize>> = synth_corpus(&spec, 1, 100)?.into_iter().map(|u| u.units).collect();
    let pretrain = PretrainConfig {
        epochs: 8,
        batch_size: 16,
        lr: 2e-3,
        ..PretrainConfig::default()
    };

    for variant in [Variant::DecoderOnly, Variant::EncoderDecoder] {
        let config = LmConfig {
            variant,
            n_units: grammar.n_units,
            n_layers: 2,
            n_heads: 4,
            d_model: 32,
            d_ff: 128,
            max_positions: 64,
            ..LmConfig::default()
        };
        let mut lm = UnitLm::<f32>::new(config, 3)?;
        let noise = NoiseSpec::default();
        let start = Instant::now();
        let report = match variant {
            Variant::DecoderOnly => pretrain_next_token(&mut lm, &corpus, &pretrain)?,
            Variant::EncoderDecoder => pretrain_denoise(&mut lm, &corpus, &noise, &pretrain)?,
        };
        let accuracy = match variant {
            Variant::DecoderOnly => next_token_accuracy(&lm, &held_out)?,
            Variant::EncoderDecoder => denoise_accuracy(&lm, &held_out, &noise, 0)?,
        };
        println!(
            "{variant:?}: {} parameters, {} steps in {:.1}s, epoch losses {:?}, held-out accuracy {accuracy:.3}",
            lm.params().numel(),
            report.steps,
            start.elapsed().as_secs_f64(),
            report.epoch_losses.iter().map(|l| (l * 1000.0).round() / 1000.0).collect::<Vec<_>>()
        );

        lm.freeze();
        let bytes = save_checkpoint(&lm);
        let back: UnitLm<f32> = load_checkpoint(&bytes)?;
        ensure!(back.backbone_hash() == lm.backbone_hash(), "checkpoint changed the weights");
        println!("  checkpoint {} bytes, hash {:016x}", bytes.len(), lm.backbone_hash());
    }
    Ok(())
}
