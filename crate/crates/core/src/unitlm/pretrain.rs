use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Dropout, LmVars, StackPrompts, UnitLm, Variant, Vocabulary};
use crate::error::{Error, Result};
use crate::numcore::{argmax, AdamConfig, AdamState, Graph, Real, Tensor, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainConfig {
    pub epochs: usize,
    /// Sequences per optimizer step.
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            epochs: 10,
            batch_size: 8,
            lr: 1e-3,
            beta1: adam.beta1,
            beta2: adam.beta2,
            seed: 0,
        }
    }
}

impl PretrainConfig {
    fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            ..AdamConfig::default()
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PretrainReport {
    /// Mean training loss of each epoch.
    pub epoch_losses: Vec<f64>,
    pub steps: usize,
}

/// Span corruption for denoising pretraining.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    /// Fraction of units covered by masked spans.
    pub mask_ratio: f64,
    pub min_spans: usize,
    pub max_spans: usize,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            mask_ratio: 0.3,
            min_spans: 1,
            max_spans: 3,
        }
    }
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.mask_ratio) {
            return Err(Error::Config(format!(
                "mask ratio {} must be in [0, 1)",
                self.mask_ratio
            )));
        }
        if self.min_spans == 0 || self.min_spans > self.max_spans {
            return Err(Error::Config("span counts must satisfy 1 <= min <= max".into()));
        }
        Ok(())
    }
}

/// Replaces contiguous spans covering about `mask_ratio` of `units` with a
/// single `mask` id each.
pub fn corrupt_spans(
    units: &[usize],
    spec: &NoiseSpec,
    mask: usize,
    rng: &mut impl Rng,
) -> Result<Vec<usize>> {
    spec.validate()?;
    let n = units.len();
    let masked = (spec.mask_ratio * n as f64).round() as usize;
    if masked == 0 {
        return Ok(units.to_vec());
    }
    let spans = rng.gen_range(spec.min_spans..=spec.max_spans).min(masked);
    let lengths = composition(masked, spans, 1, rng);
    let gaps = composition(n - masked, spans + 1, 0, rng);
    let mut out = Vec::with_capacity(n);
    let mut pos = 0;
    for s in 0..spans {
        out.extend_from_slice(&units[pos..pos + gaps[s]]);
        pos += gaps[s];
        out.push(mask);
        pos += lengths[s];
    }
    out.extend_from_slice(&units[pos..]);
    Ok(out)
}

/// Random split of `total` into `parts` integers, each at least `min`.
fn composition(total: usize, parts: usize, min: usize, rng: &mut impl Rng) -> Vec<usize> {
    let free = total - parts * min;
    let mut cuts: Vec<usize> = (0..parts - 1).map(|_| rng.gen_range(0..=free)).collect();
    cuts.sort_unstable();
    let mut out = Vec::with_capacity(parts);
    let mut prev = 0;
    for &c in &cuts {
        out.push(c - prev + min);
        prev = c;
    }
    out.push(free - prev + min);
    out
}

fn check_trainable<T: Real>(lm: &UnitLm<T>, corpus: &[Vec<usize>]) -> Result<()> {
    if lm.is_frozen() {
        return Err(Error::Contract("cannot pretrain a frozen backbone".into()));
    }
    if corpus.iter().all(|s| s.len() < 2) {
        return Err(Error::InsufficientData(
            "pretraining corpus has no sequence of length >= 2".into(),
        ));
    }
    for s in corpus {
        lm.vocab().check(s)?;
    }
    Ok(())
}

/// Windows of at most `max` units; sequences shorter than 2 are dropped.
fn windows(corpus: &[Vec<usize>], max: usize) -> Vec<Vec<usize>> {
    corpus
        .iter()
        .flat_map(|s| s.chunks(max).map(<[usize]>::to_vec))
        .filter(|w| w.len() >= 2)
        .collect()
}

fn adam_update<T: Real>(
    lm: &mut UnitLm<T>,
    adam: &mut AdamState<T>,
    grads: &crate::numcore::Gradients<T>,
    vars: &LmVars,
) -> Result<()> {
    let grad_tensors: Vec<Tensor<T>> = lm
        .params()
        .iter()
        .zip(vars.all())
        .map(|((_, p), &v)| grads.get_or_zeros(v, p))
        .collect();
    let grad_refs: Vec<&Tensor<T>> = grad_tensors.iter().collect();
    let mut params: Vec<&mut Tensor<T>> = lm.params_mut().tensors_mut().collect();
    adam.step(&mut params, &grad_refs)
}

/// Shared loop: `example_loss` adds one example's mean loss to the graph.
fn train_loop<T: Real>(
    lm: &mut UnitLm<T>,
    examples: &[Vec<usize>],
    config: &PretrainConfig,
    mut example_loss: impl FnMut(
        &UnitLm<T>,
        &mut Graph<T>,
        &LmVars,
        &[usize],
        &mut Option<Dropout>,
        &mut ChaCha8Rng,
    ) -> Result<Var>,
) -> Result<PretrainReport> {
    let mut adam = AdamState::new(config.adam())?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut dropout = Some(Dropout::new(lm.config().dropout, config.seed ^ 0xd20_0d20));
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut report = PretrainReport::default();
    let batch = config.batch_size.max(1);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(batch) {
            let mut g = Graph::new();
            let vars = lm.bind(&mut g, true);
            let mut sum: Option<Var> = None;
            for &i in chunk {
                let l = example_loss(lm, &mut g, &vars, &examples[i], &mut dropout, &mut rng)?;
                sum = Some(match sum {
                    Some(s) => g.add(s, l)?,
                    None => l,
                });
            }
            let sum = sum.expect("non-empty chunk");
            let loss = g.scale(sum, T::lit(1.0 / chunk.len() as f64));
            total += g.value(loss).data()[0].to_f64().unwrap_or(f64::NAN) * chunk.len() as f64;
            let grads = g.backward(loss)?;
            adam_update(lm, &mut adam, &grads, &vars)?;
            report.steps += 1;
        }
        report.epoch_losses.push(total / examples.len() as f64);
    }
    Ok(report)
}

/// Trains a decoder-only backbone to predict each unit from its prefix.
pub fn pretrain_next_token<T: Real>(
    lm: &mut UnitLm<T>,
    corpus: &[Vec<usize>],
    config: &PretrainConfig,
) -> Result<PretrainReport> {
    lm.require(Variant::DecoderOnly)?;
    check_trainable(lm, corpus)?;
    let examples = windows(corpus, lm.config().max_positions + 1);
    train_loop(lm, &examples, config, |lm, g, vars, seq, dropout, _| {
        let n = seq.len() - 1;
        let x = lm.embed_ids(g, vars, &seq[..n])?;
        let logits = lm.decoder_only_logits(g, vars, x, &StackPrompts::default(), dropout)?;
        g.cross_entropy(logits, &seq[1..])
    })
}

/// Teacher-forced decoder inputs and targets for reconstructing `original`.
fn reconstruction(vocab: Vocabulary, original: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let mut input = Vec::with_capacity(original.len() + 1);
    input.push(vocab.bos());
    input.extend_from_slice(original);
    let mut target = original.to_vec();
    target.push(vocab.eos());
    (input, target)
}

/// Trains an encoder-decoder backbone to reconstruct span-corrupted input.
pub fn pretrain_denoise<T: Real>(
    lm: &mut UnitLm<T>,
    corpus: &[Vec<usize>],
    noise: &NoiseSpec,
    config: &PretrainConfig,
) -> Result<PretrainReport> {
    lm.require(Variant::EncoderDecoder)?;
    noise.validate()?;
    check_trainable(lm, corpus)?;
    let examples = windows(corpus, lm.config().max_positions - 1);
    let vocab = lm.vocab();
    train_loop(lm, &examples, config, |lm, g, vars, seq, dropout, rng| {
        let corrupted = corrupt_spans(seq, noise, vocab.mask(), rng)?;
        let memory = lm.encode(g, vars, &corrupted, &StackPrompts::default(), dropout)?;
        let (input, target) = reconstruction(vocab, seq);
        let x = lm.embed_ids(g, vars, &input)?;
        let logits = lm.decode_logits(g, vars, memory, x, &StackPrompts::default(), dropout)?;
        g.cross_entropy(logits, &target)
    })
}

/// Fraction of positions where the argmax next-unit prediction is correct.
pub fn next_token_accuracy<T: Real>(lm: &UnitLm<T>, corpus: &[Vec<usize>]) -> Result<f64> {
    let (mut hit, mut total) = (0usize, 0usize);
    for seq in windows(corpus, lm.config().max_positions + 1) {
        let n = seq.len() - 1;
        let logits = lm.forward(super::LmInput::DecoderOnly { units: &seq[..n] }, None)?;
        for (t, &want) in seq[1..].iter().enumerate() {
            hit += usize::from(argmax(logits.row(t)) == Some(want));
            total += 1;
        }
    }
    Ok(hit as f64 / total.max(1) as f64)
}

/// Teacher-forced reconstruction accuracy (including the final `<eos>`)
/// under the given corruption.
pub fn denoise_accuracy<T: Real>(
    lm: &UnitLm<T>,
    corpus: &[Vec<usize>],
    noise: &NoiseSpec,
    seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = lm.vocab();
    let (mut hit, mut total) = (0usize, 0usize);
    for seq in windows(corpus, lm.config().max_positions - 1) {
        let corrupted = corrupt_spans(&seq, noise, vocab.mask(), &mut rng)?;
        let (input, target) = reconstruction(vocab, &seq);
        let logits = lm.forward(
            super::LmInput::EncoderDecoder {
                source: &corrupted,
                target: &input,
            },
            None,
        )?;
        for (t, &want) in target.iter().enumerate() {
            hit += usize::from(argmax(logits.row(t)) == Some(want));
            total += 1;
        }
    }
    Ok(hit as f64 / total.max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::unitlm::LmConfig;
    use proptest::prelude::*;
    use rand::Rng;

    fn small(variant: Variant) -> LmConfig {
        LmConfig {
            variant,
            n_layers: 1,
            n_heads: 2,
            d_model: 16,
            d_ff: 32,
            n_units: 6,
            max_positions: 32,
            dropout: 0.0,
        }
    }

    #[test]
    fn cyclic_corpus_is_learned() {
        let mut lm = UnitLm::<f32>::new(small(Variant::DecoderOnly), 1).unwrap();
        let corpus: Vec<Vec<usize>> = (0..16)
            .map(|i| (0..12).map(|t| 1 + (t + i) % 3).collect())
            .collect();
        let config = PretrainConfig {
            epochs: 30,
            batch_size: 4,
            lr: 5e-3,
            ..PretrainConfig::default()
        };
        let report = pretrain_next_token(&mut lm, &corpus, &config).unwrap();
        assert!(report.epoch_losses.last() < report.epoch_losses.first());
        assert!(next_token_accuracy(&lm, &corpus).unwrap() >= 0.99);
    }

    #[test]
    fn seeded_runs_match_and_errors() {
        let corpus = vec![vec![1, 2, 3, 1, 2, 3]; 4];
        let config = PretrainConfig {
            epochs: 2,
            ..PretrainConfig::default()
        };
        let mut a = UnitLm::<f32>::new(small(Variant::DecoderOnly), 4).unwrap();
        let mut b = a.clone();
        pretrain_next_token(&mut a, &corpus, &config).unwrap();
        pretrain_next_token(&mut b, &corpus, &config).unwrap();
        assert_eq!(a.backbone_hash(), b.backbone_hash());

        assert!(matches!(
            pretrain_next_token(&mut a, &[], &config),
            Err(Error::InsufficientData(_))
        ));
        let mut ed = UnitLm::<f32>::new(small(Variant::EncoderDecoder), 4).unwrap();
        assert!(matches!(
            pretrain_next_token(&mut ed, &corpus, &config),
            Err(Error::Usage(_))
        ));
        a.freeze();
        assert!(matches!(
            pretrain_next_token(&mut a, &corpus, &config),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn copy_task_is_learned_without_noise() {
        let mut lm = UnitLm::<f32>::new(small(Variant::EncoderDecoder), 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut sample = |n: usize| -> Vec<Vec<usize>> {
            (0..n)
                .map(|_| (0..rng.gen_range(3..7)).map(|_| rng.gen_range(0..6)).collect())
                .collect()
        };
        let train = sample(300);
        let held_out = sample(40);
        let noise = NoiseSpec {
            mask_ratio: 0.0,
            ..NoiseSpec::default()
        };
        let config = PretrainConfig {
            epochs: 12,
            batch_size: 8,
            lr: 5e-3,
            ..PretrainConfig::default()
        };
        pretrain_denoise(&mut lm, &train, &noise, &config).unwrap();
        assert!(denoise_accuracy(&lm, &held_out, &noise, 0).unwrap() >= 0.99);
    }

    #[test]
    fn full_masking_rejected() {
        let spec = NoiseSpec {
            mask_ratio: 1.0,
            ..NoiseSpec::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            corrupt_spans(&[1, 2, 3], &spec, 9, &mut rng),
            Err(Error::Config(_))
        ));
    }

    proptest! {
        #[test]
        fn corruption_never_lengthens(
            units in proptest::collection::vec(0usize..6, 0..40),
            ratio in 0.0f64..0.95,
            seed in any::<u64>(),
        ) {
            let spec = NoiseSpec { mask_ratio: ratio, ..NoiseSpec::default() };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let out = corrupt_spans(&units, &spec, 9, &mut rng).unwrap();
            prop_assert!(out.len() <= units.len());
            let masks = out.iter().filter(|&&u| u == 9).count();
            let kept = out.len() - masks;
            let masked = (ratio * units.len() as f64).round() as usize;
            prop_assert_eq!(kept, units.len() - masked);
            prop_assert!(masks <= 3);
        }
    }
}
