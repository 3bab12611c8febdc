use super::{PromptSet, PromptVars};
use crate::error::{shape_err, Result};
use crate::numcore::{Graph, Real, Var};
use crate::unitlm::{Dropout, LmVars, UnitLm, Variant};
use crate::verbalizer::{class_embedding_var, Verbalizer};

/// A prompted frozen backbone plus its verbalizer, framed so that every task
/// is "source in, output-id sequence terminated by `<eos>` out".
///
/// Decoder-only input is `source <sep> y₁ … y_{t-1}`; encoder-decoder feeds
/// the source to the encoder and `<bos> y₁ … y_{t-1}` to the decoder. With a
/// learnable verbalizer the output ids are classes plus `<eos>`, and fed-back
/// classes use the temperature-softmax class embeddings.
#[derive(Debug, Clone, Copy)]
pub struct Framer<'a, T> {
    pub lm: &'a UnitLm<T>,
    pub prompts: &'a PromptSet<T>,
    pub verbalizer: &'a Verbalizer<T>,
}

/// Graph handles for one [`Framer`].
#[derive(Debug, Clone)]
pub struct Bound {
    pub lm: LmVars,
    pub prompts: PromptVars,
    /// Learnable-verbalizer weights.
    pub weights: Option<Var>,
    /// `|Y| × d` class embeddings derived from `weights`.
    pub class_embeddings: Option<Var>,
}

impl Bound {
    /// Trainable handles in [`PromptSet::tensors`] order, then the
    /// verbalizer weights.
    pub fn trainable(&self) -> Vec<Var> {
        let mut v = self.prompts.all.clone();
        v.extend(self.weights);
        v
    }
}

/// Per-source state reused across decoding steps.
#[derive(Debug, Clone, Copy)]
pub enum SourceContext {
    /// Embedded `source <sep>` rows (no positions yet).
    Prefix(Var),
    /// Encoder output.
    Memory(Var),
}

impl<'a, T: Real> Framer<'a, T> {
    pub fn new(lm: &'a UnitLm<T>, prompts: &'a PromptSet<T>, verbalizer: &'a Verbalizer<T>) -> Result<Self> {
        prompts.check_compatible(lm.config())?;
        if let Verbalizer::Learnable(v) = verbalizer {
            if v.vocab_size() != lm.config().vocab_size() {
                return Err(shape_err("verbalizer width does not match the vocabulary"));
            }
        }
        Ok(Self {
            lm,
            prompts,
            verbalizer,
        })
    }

    pub fn output_size(&self) -> usize {
        self.verbalizer.output_size(self.lm.vocab())
    }

    pub fn output_eos(&self) -> usize {
        self.verbalizer.output_eos(self.lm.vocab())
    }

    /// Binds the backbone (never trainable), prompts and verbalizer.
    pub fn bind(&self, g: &mut Graph<T>, trainable: bool) -> Result<Bound> {
        let lm = self.lm.bind(g, false);
        let prompts = self.prompts.bind(g, trainable);
        let (weights, class_embeddings) = match self.verbalizer {
            Verbalizer::Learnable(v) => {
                let w = g.leaf(v.weights().clone(), trainable);
                let table = self.lm.var(&lm, "embed");
                (Some(w), Some(class_embedding_var(g, w, v.tau(), table)?))
            }
            _ => (None, None),
        };
        Ok(Bound {
            lm,
            prompts,
            weights,
            class_embeddings,
        })
    }

    pub fn context(
        &self,
        g: &mut Graph<T>,
        b: &Bound,
        source: &[usize],
        dropout: &mut Option<Dropout>,
    ) -> Result<SourceContext> {
        match self.lm.config().variant {
            Variant::DecoderOnly => {
                let ids = self.lm.framed_sequence(source, &[]);
                Ok(SourceContext::Prefix(self.lm.embed_ids(g, &b.lm, &ids)?))
            }
            Variant::EncoderDecoder => Ok(SourceContext::Memory(self.lm.encode(
                g,
                &b.lm,
                source,
                &b.prompts.encoder,
                dropout,
            )?)),
        }
    }

    /// Input rows for already-emitted output ids.
    fn feedback(&self, g: &mut Graph<T>, b: &Bound, prefix: &[usize]) -> Result<Var> {
        match b.class_embeddings {
            Some(table) => g.gather(table, prefix),
            None => self.lm.embed_ids(g, &b.lm, prefix),
        }
    }

    /// Output-space logits predicting `prefix[0]`, …, and the id after the
    /// prefix: `(prefix.len() + 1) × output_size`.
    pub fn logits(
        &self,
        g: &mut Graph<T>,
        b: &Bound,
        ctx: SourceContext,
        prefix: &[usize],
        dropout: &mut Option<Dropout>,
    ) -> Result<Var> {
        let steps = prefix.len() + 1;
        let z = match ctx {
            SourceContext::Prefix(head) => {
                let x = if prefix.is_empty() {
                    head
                } else {
                    let fb = self.feedback(g, b, prefix)?;
                    g.concat_rows(&[head, fb])?
                };
                let z = self.lm.decoder_only_logits(g, &b.lm, x, &b.prompts.decoder, dropout)?;
                let rows = g.value(z).rows();
                g.slice_rows(z, rows - steps, steps)?
            }
            SourceContext::Memory(memory) => {
                let bos = self.lm.embed_ids(g, &b.lm, &[self.lm.vocab().bos()])?;
                let x = if prefix.is_empty() {
                    bos
                } else {
                    let fb = self.feedback(g, b, prefix)?;
                    g.concat_rows(&[bos, fb])?
                };
                self.lm.decode_logits(g, &b.lm, memory, x, &b.prompts.decoder, dropout)?
            }
        };
        match b.weights {
            Some(w) => {
                let classes = g.matmul_t(z, w)?;
                let eos = g.slice_cols(z, self.lm.vocab().eos(), 1)?;
                g.concat_cols(&[classes, eos])
            }
            None => Ok(z),
        }
    }

    /// Teacher-forced targets for `labels`: output ids followed by `<eos>`.
    pub fn targets(&self, labels: &[usize]) -> Result<Vec<usize>> {
        let mut t = self.verbalizer.encode_labels(labels, self.lm.vocab())?;
        t.push(self.output_eos());
        Ok(t)
    }

    /// Mean cross-entropy of one example under teacher forcing.
    pub fn example_loss(
        &self,
        g: &mut Graph<T>,
        b: &Bound,
        source: &[usize],
        labels: &[usize],
        dropout: &mut Option<Dropout>,
    ) -> Result<Var> {
        let targets = self.targets(labels)?;
        let ctx = self.context(g, b, source, dropout)?;
        let z = self.logits(g, b, ctx, &targets[..targets.len() - 1], dropout)?;
        g.cross_entropy(z, &targets)
    }
}
