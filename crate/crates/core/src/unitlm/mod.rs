//! Frozen unit language model backbones: a decoder-only next-unit predictor
//! and an encoder-decoder denoiser, with their pretraining loops and the
//! checkpoint format.

mod checkpoint;
mod model;
mod pretrain;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use model::{attention, Dropout, LmInput, LmVars, ParamSet, StackPrompts, UnitLm};
pub use pretrain::{
    corrupt_spans, denoise_accuracy, next_token_accuracy, pretrain_denoise, pretrain_next_token,
    NoiseSpec, PretrainConfig, PretrainReport,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of reserved ids appended after the content units.
pub const RESERVED: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    DecoderOnly,
    EncoderDecoder,
}

/// Content units `0..n_units`, followed by `<pad> <sep> <eos> <mask> <bos>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Vocabulary {
    n_units: usize,
}

impl Vocabulary {
    pub fn new(n_units: usize) -> Result<Self> {
        if n_units == 0 {
            return Err(Error::Config("vocabulary needs at least one content unit".into()));
        }
        Ok(Self { n_units })
    }

    pub fn size(&self) -> usize {
        self.n_units + RESERVED
    }

    pub fn n_units(&self) -> usize {
        self.n_units
    }

    pub fn pad(&self) -> usize {
        self.n_units
    }

    pub fn sep(&self) -> usize {
        self.n_units + 1
    }

    pub fn eos(&self) -> usize {
        self.n_units + 2
    }

    pub fn mask(&self) -> usize {
        self.n_units + 3
    }

    pub fn bos(&self) -> usize {
        self.n_units + 4
    }

    pub fn is_reserved(&self, id: usize) -> bool {
        id >= self.n_units && id < self.size()
    }

    pub fn check(&self, units: &[usize]) -> Result<()> {
        match units.iter().find(|&&u| u >= self.size()) {
            Some(&id) => Err(Error::Vocabulary {
                id,
                size: self.size(),
            }),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmConfig {
    pub variant: Variant,
    /// Layers per stack.
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    /// Content units; the vocabulary adds the reserved ids on top.
    pub n_units: usize,
    pub max_positions: usize,
    pub dropout: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            variant: Variant::DecoderOnly,
            n_layers: 2,
            n_heads: 4,
            d_model: 64,
            d_ff: 256,
            n_units: 100,
            max_positions: 256,
            dropout: 0.1,
        }
    }
}

impl LmConfig {
    pub fn encoder_decoder() -> Self {
        Self {
            variant: Variant::EncoderDecoder,
            ..Self::default()
        }
    }

    pub fn vocab(&self) -> Vocabulary {
        Vocabulary {
            n_units: self.n_units,
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.n_units + RESERVED
    }

    /// Number of stacks: 1 for decoder-only, 2 for encoder-decoder.
    pub fn stacks(&self) -> usize {
        match self.variant {
            Variant::DecoderOnly => 1,
            Variant::EncoderDecoder => 2,
        }
    }

    /// Self-attention layers over all stacks.
    pub fn self_attention_layers(&self) -> usize {
        self.stacks() * self.n_layers
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_heads == 0 || self.d_model == 0 || !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::Config(format!(
                "d_model {} must be a positive multiple of n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.n_layers == 0 || self.d_ff == 0 || self.n_units == 0 || self.max_positions == 0 {
            return Err(Error::Config("layer, ffn, unit and position counts must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config("dropout must be in [0, 1)".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reserved_ids_distinct_and_after_units() {
        let v = Vocabulary::new(100).unwrap();
        let ids = [v.pad(), v.sep(), v.eos(), v.mask(), v.bos()];
        let mut sorted = ids.to_vec();
        sorted.dedup();
        assert_eq!(sorted.len(), 5);
        assert!(ids.iter().all(|&i| v.is_reserved(i) && i < v.size()));
        assert_eq!(v.size(), 105);
        assert!(!v.is_reserved(99));
        assert!(matches!(v.check(&[3, 105]), Err(Error::Vocabulary { id: 105, .. })));
    }

    #[test]
    fn config_validation() {
        assert!(LmConfig::default().validate().is_ok());
        let bad = LmConfig {
            n_heads: 3,
            ..LmConfig::default()
        };
        assert!(bad.validate().is_err());
        assert_eq!(LmConfig::encoder_decoder().self_attention_layers(), 4);
    }
}
