//! Beam search over a hand-written scorer: a bigram table where the greedy
//! path is not the most probable sequence.

use anyhow::Result;
use unitprompt::decode::{beam_search, greedy_decode, sequence_logprob, DecodeConfig, StepScorer};

/// Tokens 0 and 1 are content, 2 is end-of-sequence.
struct Bigram {
    table: [[f64; 3]; 4],
}

impl StepScorer for Bigram {
    fn space(&self) -> usize {
        3
    }

    fn eos(&self) -> usize {
        2
    }

    fn log_probs(&mut self, prefix: &[usize]) -> unitprompt::Result<Vec<f64>> {
        // Row 3 is the start state.
        let row = prefix.last().copied().unwrap_or(3);
        Ok(self.table[row].iter().map(|p| p.ln()).collect())
    }
}

fn main() -> Result<()> {
    let mut scorer = Bigram {
        table: [
            [0.34, 0.33, 0.33],
            [0.05, 0.05, 0.90],
            [1.0 / 3.0; 3],
            [0.55, 0.40, 0.05],
        ],
    };
    let greedy = greedy_decode(&mut scorer, 4)?;
    println!("greedy: {:?} logprob {:.4}", greedy.units, greedy.logprob);

    let config = DecodeConfig { beam: 3, max_len: 4, ..DecodeConfig::default() };
    for h in beam_search(&mut scorer, &config)?.iter().take(3) {
        let rescored = sequence_logprob(&mut scorer, &h.units)?;
        println!("beam:   {:?} logprob {:.4} (rescored {rescored:.4}, finished {})", h.units, h.logprob, h.finished);
    }
    Ok(())
}
