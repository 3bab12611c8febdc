use serde::{Deserialize, Serialize};

use crate::decode::{TaskKind, TaskSpec};
use crate::error::{Error, Result};
use crate::numcore::{argmax, AdamConfig, AdamState, Graph, Real, Tensor};
use crate::prompts::TuneExample;
use crate::unitlm::UnitLm;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeConfig {
    pub steps: usize,
    pub lr: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self { steps: 500, lr: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub accuracy: f64,
    pub params: usize,
    /// Only one class: accuracy is trivially 1.
    pub degenerate: bool,
}

/// Mean of the backbone's embedding rows over an utterance.
pub fn mean_embedding<T: Real>(lm: &UnitLm<T>, units: &[usize]) -> Result<Vec<f64>> {
    lm.vocab().check(units)?;
    let e = lm.embedding();
    let mut out = vec![0.0; e.cols()];
    for &u in units {
        for (o, &x) in out.iter_mut().zip(e.row(u)) {
            *o += x.to_f64().unwrap_or(f64::NAN);
        }
    }
    let n = units.len().max(1) as f64;
    out.iter_mut().for_each(|o| *o /= n);
    Ok(out)
}

fn features<T: Real>(lm: &UnitLm<T>, examples: &[TuneExample]) -> Result<Tensor<f64>> {
    let d = lm.config().d_model;
    let mut data = Vec::with_capacity(examples.len() * d);
    for ex in examples {
        data.extend(mean_embedding(lm, &ex.source)?);
    }
    Tensor::new(vec![examples.len(), d], data)
}

/// Softmax regression on frozen mean-pooled embeddings, trained full-batch.
pub fn linear_probe_baseline<T: Real>(
    lm: &UnitLm<T>,
    task: &TaskSpec,
    train: &[TuneExample],
    test: &[TuneExample],
    config: &ProbeConfig,
) -> Result<ProbeReport> {
    if task.kind != (TaskKind::Classification { slots: 1 }) {
        return Err(Error::Usage("the linear probe needs a single-slot classification task".into()));
    }
    let classes = task.labels.len();
    let d = lm.config().d_model;
    let params = classes * d + classes;
    if classes == 1 {
        return Ok(ProbeReport {
            accuracy: 1.0,
            params,
            degenerate: true,
        });
    }
    if train.is_empty() || test.is_empty() {
        return Err(Error::InsufficientData("probe needs train and test examples".into()));
    }
    let x = features(lm, train)?;
    let y: Vec<usize> = train.iter().map(|e| e.labels[0]).collect();
    let mut w = Tensor::<f64>::zeros(&[classes, d]);
    let mut b = Tensor::<f64>::zeros(&[classes]);
    let mut adam = AdamState::new(AdamConfig::with_lr(config.lr))?;
    for _ in 0..config.steps {
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let wv = g.leaf(w.clone(), true);
        let bv = g.leaf(b.clone(), true);
        let z = g.matmul_t(xv, wv)?;
        let z = g.add_row(z, bv)?;
        let loss = g.cross_entropy(z, &y)?;
        let grads = g.backward(loss)?;
        let (gw, gb) = (grads.get_or_zeros(wv, &w), grads.get_or_zeros(bv, &b));
        adam.step(&mut [&mut w, &mut b], &[&gw, &gb])?;
    }
    let xt = features(lm, test)?;
    let mut logits = xt.matmul_t(&w)?;
    for r in 0..logits.rows() {
        for (z, &bias) in logits.row_mut(r).iter_mut().zip(b.data()) {
            *z += bias;
        }
    }
    let hits = test
        .iter()
        .enumerate()
        .filter(|(i, ex)| argmax(logits.row(*i)) == Some(ex.labels[0]))
        .count();
    Ok(ProbeReport {
        accuracy: hits as f64 / test.len() as f64,
        params,
        degenerate: false,
    })
}
