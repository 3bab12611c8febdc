//! Label mapping between the unit vocabulary and downstream labels.

mod export;

pub use export::{export_weights, write_weights_csv, UnitAnnotations, WeightRow};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::container::Container;
use crate::error::{shape_err, Error, Result};
use crate::numcore::{argmax, Graph, Real, Tensor, Var};
use crate::unitlm::Vocabulary;

/// Default softmax temperature of the class embedding.
pub const DEFAULT_TAU: f64 = 0.01;

/// Result of reading one emitted unit through a fixed verbalizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verbalized {
    Label(usize),
    /// The unit is not the image of any label; scored as wrong.
    Unmapped,
}

/// Injective label → content unit map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixedVerbalizer {
    units: Vec<usize>,
    inverse: Vec<Option<usize>>,
}

impl FixedVerbalizer {
    /// `units[y]` is the unit of label `y`.
    pub fn from_units(units: Vec<usize>, vocab: Vocabulary) -> Result<Self> {
        let mut inverse = vec![None; vocab.size()];
        for (label, &u) in units.iter().enumerate() {
            if u >= vocab.n_units() {
                return Err(Error::Validation(format!(
                    "label {label} maps to non-content unit {u}"
                )));
            }
            if inverse[u].replace(label).is_some() {
                return Err(Error::Validation(format!("unit {u} mapped twice")));
            }
        }
        Ok(Self { units, inverse })
    }

    /// Uniformly random injective assignment over the content units.
    pub fn from_seed(n_labels: usize, vocab: Vocabulary, seed: u64) -> Result<Self> {
        let usable = vocab.n_units();
        if n_labels > usable {
            return Err(Error::Capacity {
                labels: n_labels,
                usable,
            });
        }
        let mut pool: Vec<usize> = (0..usable).collect();
        pool.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        pool.truncate(n_labels);
        Self::from_units(pool, vocab)
    }

    pub fn n_labels(&self) -> usize {
        self.units.len()
    }

    pub fn units(&self) -> &[usize] {
        &self.units
    }

    pub fn unit(&self, label: usize) -> Result<usize> {
        self.units.get(label).copied().ok_or(Error::Index {
            index: label,
            width: self.units.len(),
        })
    }

    pub fn verbalize(&self, unit: usize) -> Verbalized {
        match self.inverse.get(unit).copied().flatten() {
            Some(l) => Verbalized::Label(l),
            None => Verbalized::Unmapped,
        }
    }
}

/// Trainable `|Y| × |V|` matrix over the unit logits.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnableVerbalizer<T> {
    weights: Tensor<T>,
    tau: f64,
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("temperature must be positive, got {tau}")))
    }
}

impl<T: Real> LearnableVerbalizer<T> {
    /// Zero-initialized weights.
    pub fn new(n_labels: usize, vocab_size: usize, tau: f64) -> Result<Self> {
        Self::from_weights(Tensor::zeros(&[n_labels, vocab_size]), tau)
    }

    pub fn from_weights(weights: Tensor<T>, tau: f64) -> Result<Self> {
        check_tau(tau)?;
        if weights.rank() != 2 || weights.shape()[0] == 0 {
            return Err(shape_err("verbalizer weights must be a non-empty matrix"));
        }
        if !weights.is_finite() {
            return Err(Error::NonFinite("verbalizer weights".into()));
        }
        Ok(Self { weights, tau })
    }

    pub fn n_labels(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn vocab_size(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn weights(&self) -> &Tensor<T> {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut Tensor<T> {
        &mut self.weights
    }

    pub fn num_params(&self) -> usize {
        self.weights.numel()
    }

    /// `ẑ = W·z` for each row of `z` (`n × |V|` → `n × |Y|`).
    pub fn transform_logits(&self, z: &Tensor<T>) -> Result<Tensor<T>> {
        transform_logits(&self.weights, z)
    }

    /// `ê(y)` for every class, as a `|Y| × d` matrix.
    pub fn class_embedding(&self, embedding: &Tensor<T>) -> Result<Tensor<T>> {
        class_embedding(&self.weights, self.tau, embedding)
    }
}

pub fn transform_logits<T: Real>(w: &Tensor<T>, z: &Tensor<T>) -> Result<Tensor<T>> {
    let z = if z.rank() == 1 {
        z.clone().reshape(&[1, z.numel()])?
    } else {
        z.clone()
    };
    if z.cols() != w.cols() {
        return Err(shape_err(format!(
            "logits width {} does not match verbalizer width {}",
            z.cols(),
            w.cols()
        )));
    }
    z.matmul_t(w)
}

/// `ê(y) = Σᵢ softmax(W_y/τ)ᵢ e(uᵢ)` for every row of `w`.
pub fn class_embedding<T: Real>(w: &Tensor<T>, tau: f64, embedding: &Tensor<T>) -> Result<Tensor<T>> {
    check_tau(tau)?;
    let mut g = Graph::new();
    let wv = g.constant(w.clone());
    let ev = g.constant(embedding.clone());
    let out = class_embedding_var(&mut g, wv, tau, ev)?;
    Ok(g.value(out).clone())
}

/// Graph form of [`class_embedding`].
pub fn class_embedding_var<T: Real>(g: &mut Graph<T>, w: Var, tau: f64, embedding: Var) -> Result<Var> {
    check_tau(tau)?;
    if g.value(w).cols() != g.value(embedding).rows() {
        return Err(shape_err("verbalizer width does not match embedding rows"));
    }
    let scaled = g.scale(w, T::lit(1.0 / tau));
    let probs = g.softmax_rows(scaled)?;
    g.matmul(probs, embedding)
}

/// Argmax over class logits, lowest index on ties.
pub fn predict_label<T: Real>(logits: &[T]) -> Result<usize> {
    argmax(logits).ok_or_else(|| shape_err("cannot predict from empty logits"))
}

/// How decoded output ids relate to task labels.
#[derive(Debug, Clone, PartialEq)]
pub enum Verbalizer<T> {
    /// Raw units are the output (generation tasks).
    Identity,
    Fixed(FixedVerbalizer),
    Learnable(LearnableVerbalizer<T>),
}

impl<T: Real> Verbalizer<T> {
    /// Width of the decoding space: `|V|`, or `|Y| + 1` with the learnable
    /// verbalizer (the extra id is `<eos>`).
    pub fn output_size(&self, vocab: Vocabulary) -> usize {
        match self {
            Self::Learnable(v) => v.n_labels() + 1,
            _ => vocab.size(),
        }
    }

    pub fn output_eos(&self, vocab: Vocabulary) -> usize {
        match self {
            Self::Learnable(v) => v.n_labels(),
            _ => vocab.eos(),
        }
    }

    pub fn num_trainable(&self) -> usize {
        match self {
            Self::Learnable(v) => v.num_params(),
            _ => 0,
        }
    }

    /// Output-space ids for label ids (or units, for `Identity`).
    pub fn encode_labels(&self, labels: &[usize], vocab: Vocabulary) -> Result<Vec<usize>> {
        match self {
            Self::Identity => {
                vocab.check(labels)?;
                Ok(labels.to_vec())
            }
            Self::Fixed(v) => labels.iter().map(|&l| v.unit(l)).collect(),
            Self::Learnable(v) => {
                if let Some(&l) = labels.iter().find(|&&l| l >= v.n_labels()) {
                    return Err(Error::Index {
                        index: l,
                        width: v.n_labels(),
                    });
                }
                Ok(labels.to_vec())
            }
        }
    }

    /// Reads one output id back as a label (or unit, for `Identity`).
    pub fn decode_output(&self, id: usize) -> Verbalized {
        match self {
            Self::Identity => Verbalized::Label(id),
            Self::Fixed(v) => v.verbalize(id),
            Self::Learnable(v) if id < v.n_labels() => Verbalized::Label(id),
            Self::Learnable(_) => Verbalized::Unmapped,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Identity => "identity",
            Self::Fixed(_) => "fixed",
            Self::Learnable(_) => "learnable",
        }
    }
}

/// Serializes a verbalizer with its label names into a "VERB" container.
pub fn save_verbalizer<T: Real>(v: &Verbalizer<T>, labels: &[String]) -> Result<Vec<u8>> {
    let mut config = toml::Table::new();
    config.insert("component".into(), "VERB".into());
    config.insert("kind".into(), v.kind().into());
    config.insert(
        "labels".into(),
        toml::Value::Array(labels.iter().map(|l| l.clone().into()).collect()),
    );
    let mut records: Vec<(&str, Tensor<f64>)> = Vec::new();
    match v {
        Verbalizer::Identity => {}
        Verbalizer::Fixed(f) => {
            let units: Vec<f64> = f.units().iter().map(|&u| u as f64).collect();
            records.push(("units", Tensor::new(vec![units.len()], units)?));
            config.insert("n_units".into(), (f.inverse.len() as i64).into());
        }
        Verbalizer::Learnable(l) => {
            config.insert("tau".into(), l.tau().into());
        }
    }
    let mut c = Container::new(toml::to_string(&config).expect("table serializes"));
    for (name, t) in &records {
        c.push_tensor(name, t);
    }
    if let Verbalizer::Learnable(l) = v {
        c.push_tensor("weights", l.weights());
    }
    Ok(c.to_bytes())
}

pub fn load_verbalizer<T: Real>(bytes: &[u8]) -> Result<(Verbalizer<T>, Vec<String>)> {
    let c = Container::from_bytes(bytes)?;
    let table = c.config_table("VERB")?;
    let corrupt = |m: &str| Error::CorruptCheckpoint(m.to_string());
    let labels = table
        .get("labels")
        .and_then(|v| v.as_array())
        .ok_or_else(|| corrupt("missing labels"))?
        .iter()
        .map(|v| v.as_str().map(str::to_string).ok_or_else(|| corrupt("label is not a string")))
        .collect::<Result<Vec<_>>>()?;
    let v = match table.get("kind").and_then(|v| v.as_str()) {
        Some("identity") => Verbalizer::Identity,
        Some("fixed") => {
            let size = table
                .get("n_units")
                .and_then(|v| v.as_integer())
                .ok_or_else(|| corrupt("missing n_units"))? as usize;
            let units: Tensor<f64> = c.tensor("units")?;
            let units = units.data().iter().map(|&u| u as usize).collect();
            let vocab = Vocabulary::new(size.saturating_sub(crate::unitlm::RESERVED))?;
            Verbalizer::Fixed(FixedVerbalizer::from_units(units, vocab)?)
        }
        Some("learnable") => {
            let tau = table
                .get("tau")
                .and_then(|v| v.as_float())
                .ok_or_else(|| corrupt("missing tau"))?;
            Verbalizer::Learnable(LearnableVerbalizer::from_weights(c.tensor("weights")?, tau)?)
        }
        other => return Err(corrupt(&format!("unknown verbalizer kind {other:?}"))),
    };
    Ok((v, labels))
}
