use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Framer, PromptSet};
use crate::error::{Error, Result};
use crate::numcore::{AdamConfig, AdamState, Graph, Real, Tensor};
use crate::unitlm::{Dropout, UnitLm};
use crate::verbalizer::Verbalizer;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TuneConfig {
    /// Maximum optimizer steps.
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Validate every this many steps.
    pub eval_every: usize,
    /// Evaluations without improvement before stopping.
    pub patience: usize,
    pub dropout: f64,
    pub seed: u64,
}

impl Default for TuneConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            steps: 2000,
            batch_size: 8,
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eval_every: 100,
            patience: 5,
            dropout: 0.0,
            seed: 0,
        }
    }
}

/// A source unit sequence and its target label ids (or units, for
/// generation tasks).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TuneExample {
    pub source: Vec<usize>,
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TuneReport {
    pub steps: usize,
    /// Mean training loss per step.
    pub train_losses: Vec<f64>,
    /// `(step, validation loss)` at each evaluation.
    pub valid_losses: Vec<(usize, f64)>,
    /// Step whose parameters were kept, when validation ran.
    pub best_step: Option<usize>,
    pub stopped_early: bool,
}

/// Mean teacher-forced loss over `examples` in eval mode.
pub fn mean_loss<T: Real>(framer: &Framer<'_, T>, examples: &[TuneExample]) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::InsufficientData("no examples to evaluate".into()));
    }
    let losses = examples
        .par_iter()
        .map(|ex| {
            let mut g = Graph::new();
            let b = framer.bind(&mut g, false)?;
            let l = framer.example_loss(&mut g, &b, &ex.source, &ex.labels, &mut None)?;
            Ok(g.value(l).data()[0].to_f64().unwrap_or(f64::NAN))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

/// Tunes `prompts` (and a learnable `verbalizer`) against a frozen `lm`.
///
/// Only prompt and verbalizer tensors are bound as trainable; the backbone
/// is borrowed immutably. With a non-empty `valid` set the parameters from
/// the best validation evaluation are restored at the end.
pub fn prompt_tune<T: Real>(
    lm: &UnitLm<T>,
    prompts: &mut PromptSet<T>,
    verbalizer: &mut Verbalizer<T>,
    train: &[TuneExample],
    valid: &[TuneExample],
    config: &TuneConfig,
) -> Result<TuneReport> {
    if !lm.is_frozen() {
        return Err(Error::Contract("prompt tuning requires a frozen backbone".into()));
    }
    Framer::new(lm, prompts, verbalizer)?;
    let mut report = TuneReport::default();
    if config.steps == 0 {
        return Ok(report);
    }
    if train.is_empty() {
        return Err(Error::InsufficientData("no training examples".into()));
    }
    let adam_config = AdamConfig {
        lr: config.lr,
        beta1: config.beta1,
        beta2: config.beta2,
        ..AdamConfig::default()
    };
    let mut adam = AdamState::new(adam_config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut dropout = (config.dropout > 0.0).then(|| Dropout::new(config.dropout, config.seed ^ 0x7d_7d));
    let batch = config.batch_size.max(1).min(train.len());
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(&mut rng);
    let mut cursor = 0;

    let mut best: Option<(f64, PromptSet<T>, Verbalizer<T>)> = None;
    let mut stale = 0;
    for step in 1..=config.steps {
        let mut g = Graph::new();
        let framer = Framer::new(lm, prompts, verbalizer)?;
        let b = framer.bind(&mut g, true)?;
        let mut sum = None;
        for _ in 0..batch {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            let ex = &train[order[cursor]];
            cursor += 1;
            let l = framer.example_loss(&mut g, &b, &ex.source, &ex.labels, &mut dropout)?;
            sum = Some(match sum {
                Some(s) => g.add(s, l)?,
                None => l,
            });
        }
        let loss = g.scale(sum.expect("batch >= 1"), T::lit(1.0 / batch as f64));
        report
            .train_losses
            .push(g.value(loss).data()[0].to_f64().unwrap_or(f64::NAN));
        let grads = g.backward(loss)?;
        let vars = b.trainable();
        let grad_tensors: Vec<Tensor<T>> = {
            let mut current: Vec<&Tensor<T>> = prompts.tensors();
            if let Verbalizer::Learnable(v) = &*verbalizer {
                current.push(v.weights());
            }
            current
                .iter()
                .zip(&vars)
                .map(|(p, &v)| grads.get_or_zeros(v, p))
                .collect()
        };
        let grad_refs: Vec<&Tensor<T>> = grad_tensors.iter().collect();
        {
            let mut params = prompts.tensors_mut();
            if let Verbalizer::Learnable(v) = verbalizer {
                params.push(v.weights_mut());
            }
            adam.step(&mut params, &grad_refs)?;
        }
        report.steps = step;

        let evaluate = !valid.is_empty()
            && (step % config.eval_every.max(1) == 0 || step == config.steps);
        if evaluate {
            let v = mean_loss(&Framer::new(lm, prompts, verbalizer)?, valid)?;
            report.valid_losses.push((step, v));
            if best.as_ref().is_none_or(|(b, _, _)| v < *b) {
                best = Some((v, prompts.clone(), verbalizer.clone()));
                report.best_step = Some(step);
                stale = 0;
            } else {
                stale += 1;
                if stale >= config.patience {
                    report.stopped_early = true;
                    break;
                }
            }
        }
    }
    if let Some((_, p, v)) = best {
        *prompts = p;
        *verbalizer = v;
    }
    Ok(report)
}
