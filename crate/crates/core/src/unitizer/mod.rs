//! Speech-to-unit stage at desk scale: k-means quantization of frame
//! features, run-length deduplication, data-size accounting and a
//! synthetic corpus generator standing in for real speech.

mod datasize;
mod files;
mod kmeans;
mod synth;

pub use datasize::{data_size_bits, DataFormat, DataSize, FRAME_RATE, SSL_DIM};
pub use files::{read_features, read_unit_file, write_features, write_unit_file};
pub use kmeans::{kmeans_fit, quantize, KmeansFit, QuantizerModel};
pub use synth::{
    class_name, symbol_name, synth_corpus, CorpusTask, FeatureSpec, Grammar, GrammarSpec, SynthMeta, SynthSpec,
    SynthUtterance,
};

use crate::error::{shape_err, Result};

/// Frame-level feature matrix (`frames × dim`, row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    frames: usize,
    dim: usize,
    values: Vec<f32>,
}

impl FeatureMatrix {
    pub fn new(frames: usize, dim: usize, values: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(shape_err("feature dimension must be at least 1"));
        }
        if values.len() != frames * dim {
            return Err(shape_err(format!(
                "{frames}x{dim} features need {} values, got {}",
                frames * dim,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(crate::Error::NonFinite("feature matrix".into()));
        }
        Ok(Self {
            frames,
            dim,
            values,
        })
    }

    pub fn empty(dim: usize) -> Result<Self> {
        Self::new(0, dim, Vec::new())
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        &self.values[t * self.dim..(t + 1) * self.dim]
    }
}

/// Collapses every maximal run of equal ids to a single id.
pub fn deduplicate(units: &[usize]) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::with_capacity(units.len());
    for &u in units {
        if out.last() != Some(&u) {
            out.push(u);
        }
    }
    out
}
