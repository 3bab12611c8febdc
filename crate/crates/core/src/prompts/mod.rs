//! Trainable prompt vectors over a frozen backbone: input prompts prepended
//! to each stack's first layer and deep key/value prompts on every
//! self-attention layer.

mod framing;
mod tune;

pub use framing::{Bound, Framer, SourceContext};
pub use tune::{mean_loss, prompt_tune, TuneConfig, TuneExample, TuneReport};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::container::Container;
use crate::error::{shape_err, Error, Result};
use crate::numcore::{Graph, Real, Tensor, Var};
use crate::unitlm::{LmConfig, StackPrompts};
use crate::verbalizer::Verbalizer;

/// Standard deviation of the prompt initialization.
pub const INIT_STD: f64 = 0.02;

/// Prompt length and which prompt kinds are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptConfig {
    pub length: usize,
    pub input: bool,
    pub deep: bool,
}

impl Default for PromptConfig {
    fn default() -> Self {
        Self {
            length: 5,
            input: true,
            deep: true,
        }
    }
}

/// Prompt tensors for every stack of one backbone configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptSet<T> {
    length: usize,
    d_model: usize,
    /// `input[s]`: `l × d` for stack `s`; empty when input prompts are off.
    input: Vec<Tensor<T>>,
    /// `deep[s][i]`: `(p^K, p^V)` for layer `i` of stack `s`; empty when off.
    deep: Vec<Vec<(Tensor<T>, Tensor<T>)>>,
}

/// Graph handles produced by [`PromptSet::bind`].
#[derive(Debug, Clone, Default)]
pub struct PromptVars {
    /// Encoder-stack prompts (unused by decoder-only backbones).
    pub encoder: StackPrompts,
    /// Prompts of the decoder (or only) stack.
    pub decoder: StackPrompts,
    /// Every bound tensor, in [`PromptSet::tensors`] order.
    pub all: Vec<Var>,
}

/// `PromptSet` with both prompt kinds at length `l`.
pub fn init_prompts<T: Real>(config: &LmConfig, length: usize, seed: u64) -> PromptSet<T> {
    PromptSet::new(
        config,
        PromptConfig {
            length,
            ..PromptConfig::default()
        },
        seed,
    )
}

impl<T: Real> PromptSet<T> {
    /// Entries drawn i.i.d. from `N(0, 0.02²)`.
    pub fn new(config: &LmConfig, pc: PromptConfig, seed: u64) -> Self {
        let d = config.d_model;
        let l = pc.length;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dist = Normal::new(0.0, INIT_STD).expect("valid std");
        let mut draw = || {
            let data = (0..l * d).map(|_| T::lit(dist.sample(&mut rng))).collect();
            Tensor::new(vec![l, d], data).expect("shape")
        };
        let active = l > 0;
        let input = if active && pc.input {
            (0..config.stacks()).map(|_| draw()).collect()
        } else {
            Vec::new()
        };
        let deep = if active && pc.deep {
            (0..config.stacks())
                .map(|_| (0..config.n_layers).map(|_| (draw(), draw())).collect())
                .collect()
        } else {
            Vec::new()
        };
        Self {
            length: l,
            d_model: d,
            input,
            deep,
        }
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn d_model(&self) -> usize {
        self.d_model
    }

    pub fn has_input(&self) -> bool {
        !self.input.is_empty()
    }

    pub fn has_deep(&self) -> bool {
        !self.deep.is_empty()
    }

    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        let mut out: Vec<&Tensor<T>> = self.input.iter().collect();
        for stack in &self.deep {
            for (k, v) in stack {
                out.push(k);
                out.push(v);
            }
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out: Vec<&mut Tensor<T>> = self.input.iter_mut().collect();
        for stack in &mut self.deep {
            for (k, v) in stack {
                out.push(k);
                out.push(v);
            }
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.numel()).sum()
    }

    /// Checks that the prompt layout fits `config`.
    pub fn check_compatible(&self, config: &LmConfig) -> Result<()> {
        let ok = self.d_model == config.d_model
            && (self.input.is_empty() || self.input.len() == config.stacks())
            && (self.deep.is_empty()
                || (self.deep.len() == config.stacks()
                    && self.deep.iter().all(|s| s.len() == config.n_layers)));
        if ok {
            Ok(())
        } else {
            Err(shape_err("prompt layout does not match the backbone"))
        }
    }

    /// Adds every prompt tensor to `g`. Decoder-only layouts have one stack,
    /// bound as the decoder.
    pub fn bind(&self, g: &mut Graph<T>, trainable: bool) -> PromptVars {
        let mut pv = PromptVars::default();
        let stacks = self.input.len().max(self.deep.len());
        let mut per_stack = vec![StackPrompts::default(); stacks];
        for (s, t) in self.input.iter().enumerate() {
            let v = g.leaf(t.clone(), trainable);
            pv.all.push(v);
            per_stack[s].input = Some(v);
        }
        for (s, layers) in self.deep.iter().enumerate() {
            for (k, v) in layers {
                let kv = g.leaf(k.clone(), trainable);
                let vv = g.leaf(v.clone(), trainable);
                pv.all.push(kv);
                pv.all.push(vv);
                per_stack[s].deep.push((kv, vv));
            }
        }
        match per_stack.len() {
            0 => {}
            1 => pv.decoder = per_stack.pop().expect("one stack"),
            _ => {
                pv.decoder = per_stack.pop().expect("decoder stack");
                pv.encoder = per_stack.pop().expect("encoder stack");
            }
        }
        pv
    }
}

/// `Concat(prompt, sequence)` along rows.
pub fn apply_input_prompts<T: Real>(sequence: &Tensor<T>, prompt: &Tensor<T>) -> Result<Tensor<T>> {
    if prompt.numel() == 0 {
        return Ok(sequence.clone());
    }
    if prompt.cols() != sequence.cols() && sequence.numel() > 0 {
        return Err(shape_err("prompt width does not match sequence width"));
    }
    let mut data = prompt.data().to_vec();
    data.extend_from_slice(sequence.data());
    Tensor::new(vec![prompt.rows() + sequence.rows(), prompt.cols()], data)
}

/// Keys and values for one attention layer: `K = Concat(p^K, h)·W_K`,
/// `V = Concat(p^V, h)·W_V`. Without prompts this is plain `h·W`.
pub fn apply_deep_prompts<T: Real>(
    g: &mut Graph<T>,
    h: Var,
    key_prompt: Option<Var>,
    value_prompt: Option<Var>,
    w_k: Var,
    w_v: Var,
) -> Result<(Var, Var)> {
    let with = |g: &mut Graph<T>, p: Option<Var>| -> Result<Var> {
        match p {
            Some(p) if g.value(p).numel() > 0 => {
                if g.value(p).cols() != g.value(h).cols() {
                    return Err(shape_err("deep prompt width does not match layer input"));
                }
                g.concat_rows(&[p, h])
            }
            _ => Ok(h),
        }
    };
    let kin = with(g, key_prompt)?;
    let vin = with(g, value_prompt)?;
    if g.value(kin).rows() != g.value(vin).rows() {
        return Err(shape_err("key and value prompts differ in length"));
    }
    Ok((g.matmul(kin, w_k)?, g.matmul(vin, w_v)?))
}

/// Trainable scalars: prompts plus learnable-verbalizer weights.
pub fn count_trainable<T: Real>(prompts: &PromptSet<T>, verbalizer: &Verbalizer<T>) -> usize {
    prompts.num_params() + verbalizer.num_trainable()
}

/// Serializes prompts into a "PROMPT" container tied to `backbone_hash`.
pub fn save_prompts<T: Real>(prompts: &PromptSet<T>, backbone_hash: u64) -> Vec<u8> {
    let config = format!(
        "component = \"PROMPT\"\nbackbone_hash = \"{backbone_hash:016x}\"\nlength = {}\nd_model = {}\ninput_stacks = {}\ndeep_stacks = {}\nlayers = {}\n",
        prompts.length,
        prompts.d_model,
        prompts.input.len(),
        prompts.deep.len(),
        prompts.deep.first().map_or(0, Vec::len),
    );
    let mut c = Container::new(config);
    for (s, t) in prompts.input.iter().enumerate() {
        c.push_tensor(&format!("input.{s}"), t);
    }
    for (s, layers) in prompts.deep.iter().enumerate() {
        for (i, (k, v)) in layers.iter().enumerate() {
            c.push_tensor(&format!("deep.{s}.{i}.k"), k);
            c.push_tensor(&format!("deep.{s}.{i}.v"), v);
        }
    }
    c.to_bytes()
}

/// Loads prompts, refusing a checkpoint tuned against another backbone.
pub fn load_prompts<T: Real>(bytes: &[u8], backbone_hash: u64) -> Result<PromptSet<T>> {
    let c = Container::from_bytes(bytes)?;
    let table = c.config_table("PROMPT")?;
    let int = |key: &str| -> Result<usize> {
        table
            .get(key)
            .and_then(|v| v.as_integer())
            .map(|v| v as usize)
            .ok_or_else(|| Error::CorruptCheckpoint(format!("missing {key}")))
    };
    let stored = table
        .get("backbone_hash")
        .and_then(|v| v.as_str())
        .and_then(|s| u64::from_str_radix(s, 16).ok())
        .ok_or_else(|| Error::CorruptCheckpoint("missing backbone_hash".into()))?;
    if stored != backbone_hash {
        return Err(Error::BackboneMismatch {
            expected: backbone_hash,
            found: stored,
        });
    }
    let mut set = PromptSet {
        length: int("length")?,
        d_model: int("d_model")?,
        input: Vec::new(),
        deep: Vec::new(),
    };
    for s in 0..int("input_stacks")? {
        set.input.push(c.tensor(&format!("input.{s}"))?);
    }
    let layers = int("layers")?;
    for s in 0..int("deep_stacks")? {
        let mut stack = Vec::with_capacity(layers);
        for i in 0..layers {
            stack.push((
                c.tensor(&format!("deep.{s}.{i}.k"))?,
                c.tensor(&format!("deep.{s}.{i}.v"))?,
            ));
        }
        set.deep.push(stack);
    }
    for t in set.tensors() {
        if t.shape() != [set.length, set.d_model] {
            return Err(Error::CorruptCheckpoint("prompt tensor has wrong shape".into()));
        }
    }
    Ok(set)
}
