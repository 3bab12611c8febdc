use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{LmConfig, Variant, Vocabulary};
use crate::container::Fnv1a;
use crate::error::{shape_err, Error, Result};
use crate::numcore::{Graph, Real, Tensor, Var};
use crate::prompts::PromptSet;

const MASKED: f64 = -1e9;

/// Ordered, named parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<T> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
    index: HashMap<String, usize>,
}

impl<T: Real> Default for ParamSet<T> {
    fn default() -> Self {
        Self {
            names: Vec::new(),
            tensors: Vec::new(),
            index: HashMap::new(),
        }
    }
}

impl<T: Real> ParamSet<T> {
    pub fn push(&mut self, name: impl Into<String>, t: Tensor<T>) {
        let name = name.into();
        assert!(!self.index.contains_key(&name), "duplicate parameter {name}");
        self.index.insert(name.clone(), self.names.len());
        self.names.push(name);
        self.tensors.push(t);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.index.get(name).map(|&i| &self.tensors[i])
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor<T>> {
        self.tensors.iter_mut()
    }

    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    /// FNV-1a over the little-endian bytes of every tensor, in order.
    pub fn content_hash(&self) -> u64 {
        let mut h = Fnv1a::default();
        for t in &self.tensors {
            h.update(&crate::container::tensor_bytes(t));
        }
        h.finish()
    }
}

/// Graph handles for every backbone parameter, aligned with its [`ParamSet`].
#[derive(Debug, Clone)]
pub struct LmVars {
    vars: Vec<Var>,
}

impl LmVars {
    pub fn all(&self) -> &[Var] {
        &self.vars
    }
}

/// Prompt handles injected into one transformer stack.
#[derive(Debug, Clone, Default)]
pub struct StackPrompts {
    /// `l × d` rows prepended to the stack input.
    pub input: Option<Var>,
    /// Per-layer `(p^K, p^V)`, each `l × d`; empty when deep prompts are off.
    pub deep: Vec<(Var, Var)>,
}

/// Inverted dropout with its own random stream.
#[derive(Debug, Clone)]
pub struct Dropout {
    pub p: f64,
    rng: ChaCha8Rng,
}

impl Dropout {
    pub fn new(p: f64, seed: u64) -> Self {
        Self {
            p,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn apply<T: Real>(&mut self, g: &mut Graph<T>, x: Var) -> Result<Var> {
        if self.p <= 0.0 {
            return Ok(x);
        }
        let keep = T::lit(1.0 / (1.0 - self.p));
        let shape = g.value(x).shape().to_vec();
        let n: usize = shape.iter().product();
        let mask: Vec<T> = (0..n)
            .map(|_| {
                if self.rng.gen::<f64>() < self.p {
                    T::zero()
                } else {
                    keep
                }
            })
            .collect();
        g.mul_const(x, Tensor::new(shape, mask)?)
    }
}

fn drop<T: Real>(g: &mut Graph<T>, x: Var, dropout: &mut Option<Dropout>) -> Result<Var> {
    match dropout {
        Some(d) => d.apply(g, x),
        None => Ok(x),
    }
}

/// Model input for [`UnitLm::forward`].
#[derive(Debug, Clone, Copy)]
pub enum LmInput<'a> {
    /// Decoder-only: the full unit sequence seen by the causal stack.
    DecoderOnly { units: &'a [usize] },
    /// Encoder-decoder: encoder units and decoder input units.
    EncoderDecoder {
        source: &'a [usize],
        target: &'a [usize],
    },
}

/// Transformer over discrete units with tied input/output embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitLm<T> {
    config: LmConfig,
    params: ParamSet<T>,
    frozen: bool,
}

fn normal<T: Real>(rng: &mut ChaCha8Rng, shape: &[usize], std: f64) -> Tensor<T> {
    let dist = Normal::new(0.0, std).expect("std >= 0");
    let n = shape.iter().product();
    let data = (0..n).map(|_| T::lit(dist.sample(rng))).collect();
    Tensor::new(shape.to_vec(), data).expect("shape")
}

impl<T: Real> UnitLm<T> {
    /// Freshly initialized, trainable model.
    pub fn new(config: LmConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (d, f, v) = (config.d_model, config.d_ff, config.vocab_size());
        let w_std = (d as f64).powf(-0.5);
        let out_std = w_std / (2.0 * config.self_attention_layers() as f64).sqrt();
        let ff_out_std = (f as f64).powf(-0.5) / (2.0 * config.self_attention_layers() as f64).sqrt();

        let mut p = ParamSet::default();
        p.push("embed", normal(&mut rng, &[v, d], w_std));
        let stacks: &[&str] = match config.variant {
            Variant::DecoderOnly => &["dec"],
            Variant::EncoderDecoder => &["enc", "dec"],
        };
        for &s in stacks {
            p.push(format!("{s}.pos"), normal(&mut rng, &[config.max_positions, d], 0.5 * w_std));
            let cross = s == "dec" && config.variant == Variant::EncoderDecoder;
            for i in 0..config.n_layers {
                let attn = |p: &mut ParamSet<T>, rng: &mut ChaCha8Rng, ln: &str, at: &str| {
                    p.push(format!("{s}.{i}.{ln}.g"), Tensor::full(&[d], T::one()));
                    p.push(format!("{s}.{i}.{ln}.b"), Tensor::zeros(&[d]));
                    for w in ["wq", "wk", "wv"] {
                        p.push(format!("{s}.{i}.{at}.{w}"), normal(rng, &[d, d], w_std));
                    }
                    p.push(format!("{s}.{i}.{at}.wo"), normal(rng, &[d, d], out_std));
                };
                attn(&mut p, &mut rng, "ln1", "attn");
                if cross {
                    attn(&mut p, &mut rng, "lnx", "xattn");
                }
                p.push(format!("{s}.{i}.ln2.g"), Tensor::full(&[d], T::one()));
                p.push(format!("{s}.{i}.ln2.b"), Tensor::zeros(&[d]));
                p.push(format!("{s}.{i}.ff.w1"), normal(&mut rng, &[d, f], w_std));
                p.push(format!("{s}.{i}.ff.b1"), Tensor::zeros(&[f]));
                p.push(format!("{s}.{i}.ff.w2"), normal(&mut rng, &[f, d], ff_out_std));
                p.push(format!("{s}.{i}.ff.b2"), Tensor::zeros(&[d]));
            }
            p.push(format!("{s}.ln_f.g"), Tensor::full(&[d], T::one()));
            p.push(format!("{s}.ln_f.b"), Tensor::zeros(&[d]));
        }
        Ok(Self {
            config,
            params: p,
            frozen: false,
        })
    }

    pub(crate) fn from_parts(config: LmConfig, params: ParamSet<T>, frozen: bool) -> Result<Self> {
        let reference = Self::new(config.clone(), 0)?;
        for (name, t) in reference.params.iter() {
            match params.get(name) {
                Some(p) if p.shape() == t.shape() => {}
                Some(p) => {
                    return Err(Error::CorruptCheckpoint(format!(
                        "parameter {name} has shape {:?}, expected {:?}",
                        p.shape(),
                        t.shape()
                    )))
                }
                None => return Err(Error::CorruptCheckpoint(format!("missing parameter {name}"))),
            }
        }
        if params.len() != reference.params.len() {
            return Err(Error::CorruptCheckpoint("unexpected extra parameters".into()));
        }
        Ok(Self {
            config,
            params,
            frozen,
        })
    }

    pub fn config(&self) -> &LmConfig {
        &self.config
    }

    pub fn vocab(&self) -> Vocabulary {
        self.config.vocab()
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn unfreeze(&mut self) {
        self.frozen = false;
    }

    /// Content hash of all backbone parameters.
    pub fn backbone_hash(&self) -> u64 {
        self.params.content_hash()
    }

    pub fn embedding(&self) -> &Tensor<T> {
        self.params.get("embed").expect("embedding table")
    }

    /// Adds every parameter to `g` as a leaf.
    pub fn bind(&self, g: &mut Graph<T>, trainable: bool) -> LmVars {
        LmVars {
            vars: self
                .params
                .iter()
                .map(|(_, t)| g.leaf(t.clone(), trainable))
                .collect(),
        }
    }

    pub fn var(&self, vars: &LmVars, name: &str) -> Var {
        let i = self
            .params
            .position(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"));
        vars.vars[i]
    }

    fn stack_name(&self, encoder: bool) -> &'static str {
        if encoder {
            "enc"
        } else {
            "dec"
        }
    }

    /// Embedding rows `e(u)` for `units`, without positions.
    pub fn embed_ids(&self, g: &mut Graph<T>, vars: &LmVars, units: &[usize]) -> Result<Var> {
        self.vocab().check(units)?;
        let table = self.var(vars, "embed");
        g.gather(table, units)
    }

    /// Adds learned absolute positions `0..T` to a `T × d` input.
    pub fn add_positions(&self, g: &mut Graph<T>, vars: &LmVars, x: Var, encoder: bool) -> Result<Var> {
        let rows = g.value(x).rows();
        if g.value(x).numel() == 0 {
            return Ok(x);
        }
        if rows > self.config.max_positions {
            return Err(Error::Length {
                len: rows,
                max: self.config.max_positions,
            });
        }
        let pos = self.var(vars, &format!("{}.pos", self.stack_name(encoder)));
        let ids: Vec<usize> = (0..rows).collect();
        let p = g.gather(pos, &ids)?;
        g.add(x, p)
    }

    /// Runs one stack. `x` already carries positions. Returns the final
    /// normalized hidden states, including rows for input prompts.
    #[allow(clippy::too_many_arguments)]
    pub fn run_stack(
        &self,
        g: &mut Graph<T>,
        vars: &LmVars,
        encoder: bool,
        x: Var,
        prompts: &StackPrompts,
        memory: Option<Var>,
        dropout: &mut Option<Dropout>,
    ) -> Result<Var> {
        let s = self.stack_name(encoder);
        let causal = !encoder;
        let content = g.value(x).rows();
        let mut h = match prompts.input {
            Some(p) => g.concat_rows(&[p, x])?,
            None => x,
        };
        let prompt_rows = g.value(h).rows() - content;
        let deep_len = prompts.deep.first().map_or(0, |(k, _)| g.value(*k).rows());
        let used = content + prompt_rows.max(deep_len);
        if used > self.config.max_positions {
            return Err(Error::Length {
                len: used,
                max: self.config.max_positions,
            });
        }
        if !prompts.deep.is_empty() && prompts.deep.len() != self.config.n_layers {
            return Err(shape_err(format!(
                "{} deep prompt pairs for {} layers",
                prompts.deep.len(),
                self.config.n_layers
            )));
        }
        h = drop(g, h, dropout)?;
        let rows = g.value(h).rows();
        let mask = causal.then(|| causal_mask::<T>(rows, deep_len));

        for i in 0..self.config.n_layers {
            let a = self.norm(g, vars, h, &format!("{s}.{i}.ln1"))?;
            let (pk, pv) = match prompts.deep.get(i) {
                Some(&(k, v)) => (Some(k), Some(v)),
                None => (None, None),
            };
            let o = self.attention_block(g, vars, &format!("{s}.{i}.attn"), a, a, pk, pv, mask.as_ref())?;
            let o = drop(g, o, dropout)?;
            h = g.add(h, o)?;

            if let Some(mem) = memory {
                let a = self.norm(g, vars, h, &format!("{s}.{i}.lnx"))?;
                let o = self.attention_block(g, vars, &format!("{s}.{i}.xattn"), a, mem, None, None, None)?;
                let o = drop(g, o, dropout)?;
                h = g.add(h, o)?;
            }

            let a = self.norm(g, vars, h, &format!("{s}.{i}.ln2"))?;
            let w1 = self.var(vars, &format!("{s}.{i}.ff.w1"));
            let b1 = self.var(vars, &format!("{s}.{i}.ff.b1"));
            let w2 = self.var(vars, &format!("{s}.{i}.ff.w2"));
            let b2 = self.var(vars, &format!("{s}.{i}.ff.b2"));
            let f = g.matmul(a, w1)?;
            let f = g.add_row(f, b1)?;
            let f = g.gelu(f);
            let f = g.matmul(f, w2)?;
            let f = g.add_row(f, b2)?;
            let f = drop(g, f, dropout)?;
            h = g.add(h, f)?;
        }
        self.norm(g, vars, h, &format!("{s}.ln_f"))
    }

    fn norm(&self, g: &mut Graph<T>, vars: &LmVars, x: Var, prefix: &str) -> Result<Var> {
        let gain = self.var(vars, &format!("{prefix}.g"));
        let bias = self.var(vars, &format!("{prefix}.b"));
        g.layer_norm(x, gain, bias)
    }

    /// Multi-head attention. Keys and values come from `kv_input`, with the
    /// deep prompts prepended before projection.
    #[allow(clippy::too_many_arguments)]
    fn attention_block(
        &self,
        g: &mut Graph<T>,
        vars: &LmVars,
        prefix: &str,
        q_input: Var,
        kv_input: Var,
        key_prompt: Option<Var>,
        value_prompt: Option<Var>,
        mask: Option<&Tensor<T>>,
    ) -> Result<Var> {
        let wq = self.var(vars, &format!("{prefix}.wq"));
        let wk = self.var(vars, &format!("{prefix}.wk"));
        let wv = self.var(vars, &format!("{prefix}.wv"));
        let wo = self.var(vars, &format!("{prefix}.wo"));
        let q = g.matmul(q_input, wq)?;
        let (k, v) = crate::prompts::apply_deep_prompts(g, kv_input, key_prompt, value_prompt, wk, wv)?;
        let heads = self.config.n_heads;
        let o = multi_head(g, q, k, v, heads, mask)?;
        g.matmul(o, wo)
    }

    /// Tied output projection `h · eᵀ`.
    pub fn project(&self, g: &mut Graph<T>, vars: &LmVars, hidden: Var) -> Result<Var> {
        let table = self.var(vars, "embed");
        g.matmul_t(hidden, table)
    }

    /// Decoder-only logits for every content row of `x` (token embeddings
    /// without positions).
    pub fn decoder_only_logits(
        &self,
        g: &mut Graph<T>,
        vars: &LmVars,
        x: Var,
        prompts: &StackPrompts,
        dropout: &mut Option<Dropout>,
    ) -> Result<Var> {
        self.require(Variant::DecoderOnly)?;
        let content = g.value(x).rows();
        let x = self.add_positions(g, vars, x, false)?;
        let h = self.run_stack(g, vars, false, x, prompts, None, dropout)?;
        let skip = g.value(h).rows() - content;
        let h = g.slice_rows(h, skip, content)?;
        self.project(g, vars, h)
    }

    /// Encoder output (including rows for encoder input prompts).
    pub fn encode(
        &self,
        g: &mut Graph<T>,
        vars: &LmVars,
        source: &[usize],
        prompts: &StackPrompts,
        dropout: &mut Option<Dropout>,
    ) -> Result<Var> {
        self.require(Variant::EncoderDecoder)?;
        let x = self.embed_ids(g, vars, source)?;
        let x = self.add_positions(g, vars, x, true)?;
        self.run_stack(g, vars, true, x, prompts, None, dropout)
    }

    /// Decoder logits for every content row of `x` given encoder `memory`.
    pub fn decode_logits(
        &self,
        g: &mut Graph<T>,
        vars: &LmVars,
        memory: Var,
        x: Var,
        prompts: &StackPrompts,
        dropout: &mut Option<Dropout>,
    ) -> Result<Var> {
        self.require(Variant::EncoderDecoder)?;
        let content = g.value(x).rows();
        let x = self.add_positions(g, vars, x, false)?;
        let h = self.run_stack(g, vars, false, x, prompts, Some(memory), dropout)?;
        let skip = g.value(h).rows() - content;
        let h = g.slice_rows(h, skip, content)?;
        self.project(g, vars, h)
    }

    pub(crate) fn require(&self, variant: Variant) -> Result<()> {
        if self.config.variant != variant {
            return Err(Error::Usage(format!(
                "operation needs a {variant:?} backbone, this one is {:?}",
                self.config.variant
            )));
        }
        Ok(())
    }

    /// Source embedding `e(u) + position` in eval mode (encoder stack for
    /// encoder-decoder models, the only stack otherwise).
    pub fn embed_source(&self, units: &[usize]) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let vars = self.bind(&mut g, false);
        let x = self.embed_ids(&mut g, &vars, units)?;
        let encoder = self.config.variant == Variant::EncoderDecoder;
        let x = self.add_positions(&mut g, &vars, x, encoder)?;
        Ok(g.value(x).clone())
    }

    /// Decoder-only input `[e(u^x), e(<sep>), e(u^y_<t)] + positions`.
    pub fn embed_decoder_input(&self, source: &[usize], prefix: &[usize]) -> Result<Tensor<T>> {
        self.require(Variant::DecoderOnly)?;
        let seq = self.framed_sequence(source, prefix);
        let mut g = Graph::new();
        let vars = self.bind(&mut g, false);
        let x = self.embed_ids(&mut g, &vars, &seq)?;
        let x = self.add_positions(&mut g, &vars, x, false)?;
        Ok(g.value(x).clone())
    }

    /// `source ++ [<sep>] ++ prefix`, the decoder-only task framing.
    pub fn framed_sequence(&self, source: &[usize], prefix: &[usize]) -> Vec<usize> {
        let mut seq = Vec::with_capacity(source.len() + 1 + prefix.len());
        seq.extend_from_slice(source);
        seq.push(self.vocab().sep());
        seq.extend_from_slice(prefix);
        seq
    }

    /// Eval-mode logits for every decoder position.
    pub fn forward(&self, input: LmInput<'_>, prompts: Option<&PromptSet<T>>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let vars = self.bind(&mut g, false);
        let (enc, dec) = match prompts {
            Some(p) => {
                p.check_compatible(&self.config)?;
                let pv = p.bind(&mut g, false);
                (pv.encoder, pv.decoder)
            }
            None => (StackPrompts::default(), StackPrompts::default()),
        };
        let mut no_drop = None;
        let logits = match input {
            LmInput::DecoderOnly { units } => {
                let x = self.embed_ids(&mut g, &vars, units)?;
                self.decoder_only_logits(&mut g, &vars, x, &dec, &mut no_drop)?
            }
            LmInput::EncoderDecoder { source, target } => {
                let mem = self.encode(&mut g, &vars, source, &enc, &mut no_drop)?;
                let x = self.embed_ids(&mut g, &vars, target)?;
                self.decode_logits(&mut g, &vars, mem, x, &dec, &mut no_drop)?
            }
        };
        Ok(g.value(logits).clone())
    }
}

/// `(rows) × (prefix + rows)` additive mask: prefix columns always visible,
/// the rest causal.
fn causal_mask<T: Real>(rows: usize, prefix: usize) -> Tensor<T> {
    let cols = prefix + rows;
    let mut m = Tensor::zeros(&[rows, cols]);
    for i in 0..rows {
        for j in (i + 1)..rows {
            m.data_mut()[i * cols + prefix + j] = T::lit(MASKED);
        }
    }
    m
}

/// Scaled dot-product attention split across `heads`.
pub(crate) fn multi_head<T: Real>(
    g: &mut Graph<T>,
    q: Var,
    k: Var,
    v: Var,
    heads: usize,
    mask: Option<&Tensor<T>>,
) -> Result<Var> {
    let d = g.value(q).cols();
    if g.value(k).cols() != d || g.value(v).cols() != d || g.value(k).rows() != g.value(v).rows() {
        return Err(shape_err("attention: q/k/v shapes disagree"));
    }
    let dk = d / heads;
    let scale = T::lit(1.0 / (dk as f64).sqrt());
    let mut outs = Vec::with_capacity(heads);
    for h in 0..heads {
        let (qh, kh, vh) = if heads == 1 {
            (q, k, v)
        } else {
            (
                g.slice_cols(q, h * dk, dk)?,
                g.slice_cols(k, h * dk, dk)?,
                g.slice_cols(v, h * dk, dk)?,
            )
        };
        let scores = g.matmul_t(qh, kh)?;
        let mut scores = g.scale(scores, scale);
        if let Some(m) = mask {
            scores = g.add_const(scores, m)?;
        }
        let weights = g.softmax_rows(scores)?;
        outs.push(g.matmul(weights, vh)?);
    }
    if heads == 1 {
        Ok(outs[0])
    } else {
        g.concat_cols(&outs)
    }
}

/// Single-head `softmax(QKᵀ/√d_k + mask)V` on plain tensors.
pub fn attention<T: Real>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
    mask: Option<&Tensor<T>>,
) -> Result<Tensor<T>> {
    if q.cols() != k.cols() {
        return Err(shape_err("attention: query and key widths differ"));
    }
    if k.rows() != v.rows() {
        return Err(shape_err("attention: key and value counts differ"));
    }
    if let Some(m) = mask {
        if m.shape() != [q.rows(), k.rows()] {
            return Err(shape_err("attention: mask shape does not match scores"));
        }
    }
    let mut g = Graph::new();
    let (qv, kv, vv) = (
        g.constant(q.clone()),
        g.constant(k.clone()),
        g.constant(v.clone()),
    );
    let scale = T::lit(1.0 / (q.cols() as f64).sqrt());
    let s = g.matmul_t(qv, kv)?;
    let mut s = g.scale(s, scale);
    if let Some(m) = mask {
        s = g.add_const(s, m)?;
    }
    let w = g.softmax_rows(s)?;
    let out = g.matmul(w, vv)?;
    Ok(g.value(out).clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::unitlm::LmConfig;

    fn tiny(variant: Variant) -> LmConfig {
        LmConfig {
            variant,
            n_layers: 2,
            n_heads: 2,
            d_model: 8,
            d_ff: 16,
            n_units: 10,
            max_positions: 32,
            dropout: 0.0,
        }
    }

    #[test]
    fn attention_single_pair_and_uniform() {
        let q = Tensor::<f64>::from_rows(&[vec![0.3, -1.0]]);
        let k = Tensor::from_rows(&[vec![2.0, 1.0]]);
        let v = Tensor::from_rows(&[vec![4.0, 5.0, 6.0]]);
        assert_eq!(attention(&q, &k, &v, None).unwrap().data(), v.data());

        let q = Tensor::<f64>::from_rows(&[vec![1.0, 0.0]]);
        let k = Tensor::from_rows(&[vec![0.0, 1.0], vec![0.0, -2.0]]);
        let v = Tensor::from_rows(&[vec![1.0, 3.0], vec![3.0, 5.0]]);
        let out = attention(&q, &k, &v, None).unwrap();
        assert!((out.data()[0] - 2.0).abs() < 1e-12 && (out.data()[1] - 4.0).abs() < 1e-12);
        let bad_mask = Tensor::zeros(&[2, 2]);
        assert!(attention(&q, &k, &v, Some(&bad_mask)).is_err());
    }

    #[test]
    fn embedding_shapes() {
        let lm = UnitLm::<f64>::new(tiny(Variant::DecoderOnly), 1).unwrap();
        assert_eq!(lm.embed_source(&[]).unwrap().numel(), 0);
        let e = lm.embed_source(&[1; 10]).unwrap();
        assert_eq!(e.shape(), &[10, 8]);
        // Same unit at two positions differs exactly by the positional rows.
        let pos = lm.params().get("dec.pos").unwrap();
        for j in 0..8 {
            let lhs = e.get2(0, j) - e.get2(3, j);
            let rhs = pos.get2(0, j) - pos.get2(3, j);
            assert!((lhs - rhs).abs() < 1e-12);
        }
        assert_eq!(lm.embed_decoder_input(&[1, 2, 3, 4], &[]).unwrap().rows(), 5);
        assert_eq!(lm.embed_decoder_input(&[1, 2, 3, 4], &[5, 6, 7]).unwrap().rows(), 8);
        assert!(matches!(lm.embed_source(&[15]), Err(Error::Vocabulary { id: 15, .. })));

        let ed = UnitLm::<f64>::new(tiny(Variant::EncoderDecoder), 1).unwrap();
        assert!(matches!(ed.embed_decoder_input(&[1], &[]), Err(Error::Usage(_))));
    }

    #[test]
    fn forward_rows_normalize_and_repeat() {
        let lm = UnitLm::<f32>::new(tiny(Variant::DecoderOnly), 3).unwrap();
        let units = [1, 4, 2, 11, 7];
        let a = lm.forward(LmInput::DecoderOnly { units: &units }, None).unwrap();
        let b = lm.forward(LmInput::DecoderOnly { units: &units }, None).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.shape(), &[5, 15]);
        let probs = a.softmax(1).unwrap();
        for r in 0..5 {
            let s: f32 = probs.row(r).iter().sum();
            assert!((s - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn too_long_input_is_a_length_error() {
        let lm = UnitLm::<f32>::new(tiny(Variant::DecoderOnly), 3).unwrap();
        let units = vec![1; 33];
        assert!(matches!(
            lm.forward(LmInput::DecoderOnly { units: &units }, None),
            Err(Error::Length { .. })
        ));
    }

    #[test]
    fn tied_projection_is_h_times_embedding_transpose() {
        let lm = UnitLm::<f64>::new(tiny(Variant::DecoderOnly), 5).unwrap();
        let mut g = Graph::new();
        let vars = lm.bind(&mut g, false);
        let h = g.constant(Tensor::from_f64(&[2, 8], &[0.1, -0.2, 0.3, 0.4, -0.5, 0.6, 0.7, -0.8, 1.0, 0.0, -1.0, 0.5, 0.25, 0.0, 2.0, -3.0]).unwrap());
        let z = lm.project(&mut g, &vars, h).unwrap();
        let expected = g.value(h).matmul(&lm.embedding().transpose().unwrap()).unwrap();
        assert_eq!(g.value(z), &expected);
    }

    #[test]
    fn encoder_decoder_forward_shapes() {
        let lm = UnitLm::<f32>::new(tiny(Variant::EncoderDecoder), 9).unwrap();
        let z = lm
            .forward(
                LmInput::EncoderDecoder {
                    source: &[1, 2, 3],
                    target: &[14, 5],
                },
                None,
            )
            .unwrap();
        assert_eq!(z.shape(), &[2, 15]);
    }
}
