//! Greedy and beam search over any step scorer, and the task framing that
//! turns one decoding routine into classification, label-sequence output
//! and raw unit generation.

mod task;

pub use task::{run_task, FramedScorer, TaskKind, TaskOutput, TaskSpec};

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One autoregressive model seen as a function of the emitted prefix.
pub trait StepScorer {
    /// Number of output ids.
    fn space(&self) -> usize;
    fn eos(&self) -> usize;
    /// Log-probabilities of the next id given `prefix` (normalized).
    fn log_probs(&mut self, prefix: &[usize]) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Greedy,
    Beam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeConfig {
    pub strategy: Strategy,
    pub beam: usize,
    /// Maximum emitted ids, `<eos>` included.
    pub max_len: usize,
    /// Length normalization exponent: scores are `logprob / len^alpha`.
    pub alpha: f64,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Beam,
            beam: 5,
            max_len: 64,
            alpha: 0.0,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beam == 0 || self.max_len == 0 {
            return Err(Error::Config("beam and max_len must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config("alpha must be in [0, 1]".into()));
        }
        Ok(())
    }

    fn effective_beam(&self) -> usize {
        match self.strategy {
            Strategy::Greedy => 1,
            Strategy::Beam => self.beam,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    /// Emitted ids, ending with `<eos>` when it was produced.
    pub units: Vec<usize>,
    pub logprob: f64,
    pub finished: bool,
}

impl Hypothesis {
    pub fn score(&self, alpha: f64) -> f64 {
        if alpha == 0.0 {
            self.logprob
        } else {
            self.logprob / (self.units.len().max(1) as f64).powf(alpha)
        }
    }

    /// Ids without the trailing `<eos>`.
    pub fn content(&self, eos: usize) -> &[usize] {
        match self.units.last() {
            Some(&u) if u == eos => &self.units[..self.units.len() - 1],
            _ => &self.units,
        }
    }
}

/// Best-first order: higher score, then shorter, then lexicographically smaller.
pub fn compare_finished(a: &Hypothesis, b: &Hypothesis, alpha: f64) -> Ordering {
    b.score(alpha)
        .total_cmp(&a.score(alpha))
        .then(a.units.len().cmp(&b.units.len()))
        .then_with(|| a.units.cmp(&b.units))
}

fn compare_live(a: &Hypothesis, b: &Hypothesis) -> Ordering {
    b.logprob.total_cmp(&a.logprob).then_with(|| a.units.cmp(&b.units))
}

/// Beam search returning every finished hypothesis, best first.
///
/// Each step expands all live hypotheses over the full output space and keeps
/// the `beam` best candidates; those ending in `<eos>` leave the beam as
/// finished. Candidates reaching `max_len` finish without `<eos>`.
pub fn beam_search<S: StepScorer + ?Sized>(scorer: &mut S, config: &DecodeConfig) -> Result<Vec<Hypothesis>> {
    config.validate()?;
    let beam = config.effective_beam();
    let eos = scorer.eos();
    let mut live = vec![Hypothesis {
        units: Vec::new(),
        logprob: 0.0,
        finished: false,
    }];
    let mut finished: Vec<Hypothesis> = Vec::new();
    for step in 0..config.max_len {
        let mut candidates = Vec::with_capacity(live.len() * scorer.space());
        for h in &live {
            let lp = scorer.log_probs(&h.units)?;
            if lp.len() != scorer.space() {
                return Err(Error::Shape(format!(
                    "scorer returned {} log-probs for a space of {}",
                    lp.len(),
                    scorer.space()
                )));
            }
            for (id, &l) in lp.iter().enumerate() {
                let mut units = h.units.clone();
                units.push(id);
                candidates.push(Hypothesis {
                    units,
                    logprob: h.logprob + l,
                    finished: false,
                });
            }
        }
        candidates.sort_by(compare_live);
        candidates.truncate(beam);
        let last = step + 1 == config.max_len;
        live.clear();
        for mut c in candidates {
            if last || c.units.last() == Some(&eos) {
                c.finished = true;
                finished.push(c);
            } else {
                live.push(c);
            }
        }
        if live.is_empty() {
            break;
        }
        // Log-probs are non-positive, so with alpha = 0 no extension of a live
        // hypothesis can beat (or tie earlier than) the best finished one.
        if config.alpha == 0.0 {
            let best_done = finished.iter().map(|h| h.logprob).fold(f64::NEG_INFINITY, f64::max);
            let best_live = live.iter().map(|h| h.logprob).fold(f64::NEG_INFINITY, f64::max);
            if best_done >= best_live {
                break;
            }
        }
    }
    finished.sort_by(|a, b| compare_finished(a, b, config.alpha));
    Ok(finished)
}

/// Best hypothesis under `config`.
pub fn beam_decode<S: StepScorer + ?Sized>(scorer: &mut S, config: &DecodeConfig) -> Result<Hypothesis> {
    beam_search(scorer, config)?
        .into_iter()
        .next()
        .ok_or_else(|| Error::Usage("beam search produced no hypothesis".into()))
}

/// Argmax at every step; identical to beam search with beam 1.
pub fn greedy_decode<S: StepScorer + ?Sized>(scorer: &mut S, max_len: usize) -> Result<Hypothesis> {
    beam_decode(
        scorer,
        &DecodeConfig {
            strategy: Strategy::Greedy,
            beam: 1,
            max_len,
            alpha: 0.0,
        },
    )
}

/// Sum of stepwise log-probabilities of `units` under `scorer`.
pub fn sequence_logprob<S: StepScorer + ?Sized>(scorer: &mut S, units: &[usize]) -> Result<f64> {
    let mut total = 0.0;
    for t in 0..units.len() {
        let lp = scorer.log_probs(&units[..t])?;
        total += lp.get(units[t]).copied().ok_or(Error::Index {
            index: units[t],
            width: lp.len(),
        })?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Next-id distribution depends only on the prefix length.
    struct ByLength(Vec<Vec<f64>>);

    impl StepScorer for ByLength {
        fn space(&self) -> usize {
            self.0[0].len()
        }
        fn eos(&self) -> usize {
            0
        }
        fn log_probs(&mut self, prefix: &[usize]) -> Result<Vec<f64>> {
            let p = &self.0[prefix.len().min(self.0.len() - 1)];
            Ok(p.iter().map(|x| x.ln()).collect())
        }
    }

    #[test]
    fn eos_first_gives_empty_finished() {
        let mut s = ByLength(vec![vec![0.9, 0.05, 0.05]]);
        let h = greedy_decode(&mut s, 10).unwrap();
        assert_eq!(h.units, vec![0]);
        assert!(h.finished);
        assert!(h.content(0).is_empty());
    }

    #[test]
    fn max_length_respected() {
        let mut s = ByLength(vec![vec![0.1, 0.9]]);
        let h = greedy_decode(&mut s, 4).unwrap();
        assert_eq!(h.units, vec![1; 4]);
        assert!(h.finished);
        let beam = beam_search(&mut s, &DecodeConfig { max_len: 3, ..DecodeConfig::default() }).unwrap();
        assert!(beam.iter().all(|h| h.units.len() <= 3));
    }

    #[test]
    fn beam_finds_delayed_reward() {
        // Greedy takes id 1 (0.6) and then faces a flat tail; the beam finds
        // id 2 (0.4) followed by a certain eos.
        struct Trap;
        impl StepScorer for Trap {
            fn space(&self) -> usize {
                3
            }
            fn eos(&self) -> usize {
                0
            }
            fn log_probs(&mut self, prefix: &[usize]) -> Result<Vec<f64>> {
                let p: [f64; 3] = match prefix {
                    [] => [1e-9, 0.6, 0.4 - 1e-9],
                    [2, ..] => [1.0 - 2e-9, 1e-9, 1e-9],
                    _ => [1.0 / 3.0; 3],
                };
                Ok(p.iter().map(|x| x.ln()).collect())
            }
        }
        let greedy = greedy_decode(&mut Trap, 2).unwrap();
        let beam = beam_decode(&mut Trap, &DecodeConfig { max_len: 2, ..DecodeConfig::default() }).unwrap();
        assert_eq!(greedy.units[0], 1);
        assert_eq!(beam.units, vec![2, 0]);
        assert!(beam.logprob > greedy.logprob);
        let rescored = sequence_logprob(&mut Trap, &beam.units).unwrap();
        assert!((rescored - beam.logprob).abs() < 1e-12);
    }
}
