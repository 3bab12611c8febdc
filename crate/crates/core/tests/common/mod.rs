//! Shared oracles for the integration tests and the acceptance runner.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use unitprompt::numcore::{Graph, Tensor, Var};
use unitprompt::prompts::{Framer, PromptConfig, PromptSet};
use unitprompt::unitlm::{LmConfig, UnitLm, Variant};
use unitprompt::verbalizer::{class_embedding_var, LearnableVerbalizer, Verbalizer};
use unitprompt::Result;

const STEP: f64 = 1e-6;

pub fn rand_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor<f64> {
    let data = (0..rows * cols).map(|_| rng.gen_range(-1.5..1.5)).collect();
    Tensor::new(vec![rows, cols], data).unwrap()
}

/// `|a - n| / max(|a|, |n|, 1e-2)`: relative, with a floor so that
/// near-zero gradients are compared on an absolute scale.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-2)
}

/// Worst relative error between the tape gradient and central differences
/// of `build(inputs)` contracted with a fixed random weight.
///
/// `coords` caps how many coordinates per input are probed (all when None).
pub fn check<F>(rng: &mut ChaCha8Rng, inputs: &[Tensor<f64>], coords: Option<usize>, build: F) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let probe_shape = {
        let mut g = Graph::new();
        let vars: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone())).collect();
        let out = build(&mut g, &vars)?;
        g.value(out).shape().to_vec()
    };
    let rows = probe_shape.iter().rev().skip(1).product::<usize>().max(1);
    let cols = *probe_shape.last().unwrap_or(&1);
    let weight = rand_tensor(rng, rows, cols).reshape(&probe_shape)?;

    let loss_of = |g: &mut Graph<f64>, vars: &[Var]| -> Result<Var> {
        let out = build(g, vars)?;
        let w = g.mul_const(out, weight.clone())?;
        Ok(g.sum(w))
    };
    let value_at = |ins: &[Tensor<f64>]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = ins.iter().map(|t| g.constant(t.clone())).collect();
        let l = loss_of(&mut g, &vars)?;
        Ok(g.value(l).data()[0])
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone(), true)).collect();
    let loss = loss_of(&mut g, &vars)?;
    let grads = g.backward(loss)?;

    let mut worst = 0.0f64;
    for (i, input) in inputs.iter().enumerate() {
        let analytic = grads.get_or_zeros(vars[i], input);
        let n = input.numel();
        let picks: Vec<usize> = match coords {
            Some(k) if k < n => (0..k).map(|_| rng.gen_range(0..n)).collect(),
            _ => (0..n).collect(),
        };
        for j in picks {
            let mut ins = inputs.to_vec();
            ins[i].data_mut()[j] += STEP;
            let up = value_at(&ins)?;
            ins[i].data_mut()[j] -= 2.0 * STEP;
            let down = value_at(&ins)?;
            let numeric = (up - down) / (2.0 * STEP);
            worst = worst.max(rel_err(analytic.data()[j], numeric));
        }
    }
    Ok(worst)
}

type Case = fn(&mut ChaCha8Rng) -> Result<f64>;

fn dims(rng: &mut ChaCha8Rng) -> (usize, usize, usize) {
    (rng.gen_range(1..5), rng.gen_range(1..5), rng.gen_range(1..5))
}

fn case_matmul(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (m, k, n) = dims(rng);
    let ins = [rand_tensor(rng, m, k), rand_tensor(rng, k, n)];
    check(rng, &ins, None, |g, v| g.matmul(v[0], v[1]))
}

fn case_matmul_t(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (m, k, n) = dims(rng);
    let ins = [rand_tensor(rng, m, k), rand_tensor(rng, n, k)];
    check(rng, &ins, None, |g, v| g.matmul_t(v[0], v[1]))
}

fn case_add(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (m, n, _) = dims(rng);
    let ins = [rand_tensor(rng, m, n), rand_tensor(rng, m, n)];
    // Same input on both sides exercises gradient accumulation.
    check(rng, &ins, None, |g, v| {
        let s = g.add(v[0], v[1])?;
        g.add(s, v[0])
    })
}

fn case_add_row(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (m, n, _) = dims(rng);
    let ins = [rand_tensor(rng, m, n), rand_tensor(rng, 1, n)];
    check(rng, &ins, None, |g, v| g.add_row(v[0], v[1]))
}

fn case_mul(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (m, n, _) = dims(rng);
    let ins = [rand_tensor(rng, m, n), rand_tensor(rng, m, n)];
    check(rng, &ins, None, |g, v| {
        let p = g.mul(v[0], v[1])?;
        g.mul(p, v[0])
    })
}

fn case_scale(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (m, n, _) = dims(rng);
    let s = rng.gen_range(-3.0..3.0);
    let x = rand_tensor(rng, m, n);
    check(rng, &[x], None, move |g, v| Ok(g.scale(v[0], s)))
}

fn case_add_const(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (m, n, _) = dims(rng);
    let c = rand_tensor(rng, m, n);
    let x = rand_tensor(rng, m, n);
    check(rng, &[x], None, move |g, v| g.add_const(v[0], &c))
}

fn case_mul_const(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (m, n, _) = dims(rng);
    let c = rand_tensor(rng, m, n);
    let x = rand_tensor(rng, m, n);
    check(rng, &[x], None, move |g, v| g.mul_const(v[0], c.clone()))
}

fn case_gelu(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (m, n, _) = dims(rng);
    let x = rand_tensor(rng, m, n).map(|x| 2.0 * x);
    check(rng, &[x], None, |g, v| Ok(g.gelu(v[0])))
}

fn case_softmax(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (m, n, _) = dims(rng);
    let x = rand_tensor(rng, m, n);
    check(rng, &[x], None, |g, v| g.softmax_rows(v[0]))
}

fn case_log_softmax(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (m, n, _) = dims(rng);
    let x = rand_tensor(rng, m, n);
    check(rng, &[x], None, |g, v| g.log_softmax_rows(v[0]))
}

fn case_layer_norm(rng: &mut ChaCha8Rng) -> Result<f64> {
    let m = rng.gen_range(1..5);
    let n = rng.gen_range(2..7);
    let ins = [rand_tensor(rng, m, n), rand_tensor(rng, 1, n), rand_tensor(rng, 1, n)];
    check(rng, &ins, None, |g, v| g.layer_norm(v[0], v[1], v[2]))
}

fn case_gather(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (m, n, k) = dims(rng);
    let ids: Vec<usize> = (0..k + 2).map(|_| rng.gen_range(0..m)).collect();
    let x = rand_tensor(rng, m, n);
    check(rng, &[x], None, move |g, v| g.gather(v[0], &ids))
}

fn case_concat_rows(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (a, b, n) = dims(rng);
    let ins = [rand_tensor(rng, a, n), rand_tensor(rng, b, n)];
    check(rng, &ins, None, |g, v| g.concat_rows(&[v[0], v[1], v[0]]))
}

fn case_concat_cols(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (m, a, b) = dims(rng);
    let ins = [rand_tensor(rng, m, a), rand_tensor(rng, m, b)];
    check(rng, &ins, None, |g, v| g.concat_cols(&[v[1], v[0]]))
}

fn case_slice_rows(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (m, n, _) = dims(rng);
    let start = rng.gen_range(0..m);
    let len = rng.gen_range(1..=m - start);
    let x = rand_tensor(rng, m, n);
    check(rng, &[x], None, move |g, v| g.slice_rows(v[0], start, len))
}

fn case_slice_cols(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (m, n, _) = dims(rng);
    let start = rng.gen_range(0..n);
    let len = rng.gen_range(1..=n - start);
    let x = rand_tensor(rng, m, n);
    check(rng, &[x], None, move |g, v| g.slice_cols(v[0], start, len))
}

fn case_cross_entropy(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (m, n, _) = dims(rng);
    let targets: Vec<usize> = (0..m).map(|_| rng.gen_range(0..n)).collect();
    let x = rand_tensor(rng, m, n);
    check(rng, &[x], None, move |g, v| g.cross_entropy(v[0], &targets))
}

fn case_sum(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (m, n, _) = dims(rng);
    let x = rand_tensor(rng, m, n);
    check(rng, &[x], None, |g, v| Ok(g.sum(v[0])))
}

/// Masked single-head attention assembled from tape primitives.
fn case_attention(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (t, d, _) = dims(rng);
    let mut mask = Tensor::zeros(&[t, t]);
    for i in 0..t {
        for j in i + 1..t {
            mask.row_mut(i)[j] = -1e9;
        }
    }
    let scale = 1.0 / (d as f64).sqrt();
    let ins = [rand_tensor(rng, t, d), rand_tensor(rng, t, d), rand_tensor(rng, t, d)];
    check(rng, &ins, None, move |g, v| {
        let s = g.matmul_t(v[0], v[1])?;
        let s = g.scale(s, scale);
        let s = g.add_const(s, &mask)?;
        let p = g.softmax_rows(s)?;
        g.matmul(p, v[2])
    })
}

fn case_class_embedding(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (y, v, d) = dims(rng);
    let tau = rng.gen_range(0.5..2.0);
    let ins = [rand_tensor(rng, y, v + 1), rand_tensor(rng, v + 1, d)];
    check(rng, &ins, None, move |g, vars| class_embedding_var(g, vars[0], tau, vars[1]))
}

pub fn tiny_lm(rng: &mut ChaCha8Rng, variant: Variant) -> UnitLm<f64> {
    let config = LmConfig {
        variant,
        n_layers: rng.gen_range(1..3),
        n_heads: 2,
        d_model: 4,
        d_ff: 6,
        n_units: rng.gen_range(2..6),
        max_positions: 16,
        dropout: 0.0,
    };
    UnitLm::new(config, rng.gen()).unwrap()
}

/// Teacher-forced framing loss of a whole prompted backbone with respect to
/// every prompt tensor and the learnable verbalizer weights.
fn framed_loss_case(rng: &mut ChaCha8Rng, variant: Variant) -> Result<f64> {
    let lm = tiny_lm(rng, variant);
    let pc = PromptConfig {
        length: rng.gen_range(1..4),
        input: rng.gen_bool(0.5),
        deep: true,
    };
    let mut prompts = PromptSet::<f64>::new(lm.config(), pc, rng.gen());
    for t in prompts.tensors_mut() {
        t.data_mut().iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
    }
    let n_labels = rng.gen_range(1..4);
    let tau = rng.gen_range(0.5..2.0);
    let weights = rand_tensor(rng, n_labels, lm.config().vocab_size());
    let source: Vec<usize> = (0..rng.gen_range(1..4))
        .map(|_| rng.gen_range(0..lm.vocab().n_units()))
        .collect();
    let labels: Vec<usize> = (0..rng.gen_range(1..3)).map(|_| rng.gen_range(0..n_labels)).collect();

    let assemble = |ins: &[Tensor<f64>]| -> Result<(PromptSet<f64>, Verbalizer<f64>)> {
        let mut p = prompts.clone();
        for (dst, src) in p.tensors_mut().into_iter().zip(ins) {
            *dst = src.clone();
        }
        let w = ins.last().expect("weights").clone();
        Ok((p, Verbalizer::Learnable(LearnableVerbalizer::from_weights(w, tau)?)))
    };
    let mut inputs: Vec<Tensor<f64>> = prompts.tensors().into_iter().cloned().collect();
    inputs.push(weights);

    let value = |ins: &[Tensor<f64>]| -> Result<f64> {
        let (p, v) = assemble(ins)?;
        let framer = Framer::new(&lm, &p, &v)?;
        let mut g = Graph::new();
        let b = framer.bind(&mut g, false)?;
        let loss = framer.example_loss(&mut g, &b, &source, &labels, &mut None)?;
        Ok(g.value(loss).data()[0])
    };
    let (p, v) = assemble(&inputs)?;
    let framer = Framer::new(&lm, &p, &v)?;
    let mut g = Graph::new();
    let b = framer.bind(&mut g, true)?;
    let loss = framer.example_loss(&mut g, &b, &source, &labels, &mut None)?;
    let grads = g.backward(loss)?;
    let analytic: Vec<Tensor<f64>> = b
        .trainable()
        .into_iter()
        .zip(&inputs)
        .map(|(var, like)| grads.get_or_zeros(var, like))
        .collect();
    check_scalar(rng, &inputs, &analytic, 6, value)
}

/// Compares given analytic gradients of a scalar function against central
/// differences on up to `coords` random coordinates per input.
pub fn check_scalar(
    rng: &mut ChaCha8Rng,
    inputs: &[Tensor<f64>],
    analytic: &[Tensor<f64>],
    coords: usize,
    value: impl Fn(&[Tensor<f64>]) -> Result<f64>,
) -> Result<f64> {
    let mut worst = 0.0f64;
    for (i, input) in inputs.iter().enumerate() {
        for _ in 0..coords.min(input.numel()) {
            let j = rng.gen_range(0..input.numel());
            let mut ins = inputs.to_vec();
            ins[i].data_mut()[j] += STEP;
            let up = value(&ins)?;
            ins[i].data_mut()[j] -= 2.0 * STEP;
            let down = value(&ins)?;
            worst = worst.max(rel_err(analytic[i].data()[j], (up - down) / (2.0 * STEP)));
        }
    }
    Ok(worst)
}

fn case_framed_decoder_only(rng: &mut ChaCha8Rng) -> Result<f64> {
    framed_loss_case(rng, Variant::DecoderOnly)
}

fn case_framed_encoder_decoder(rng: &mut ChaCha8Rng) -> Result<f64> {
    framed_loss_case(rng, Variant::EncoderDecoder)
}

/// Worst error of every case family over `n` seeded draws.
pub fn gradient_suite(n: usize, seed: u64) -> Vec<(&'static str, f64)> {
    CASES
        .iter()
        .map(|(name, case)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let worst = (0..n)
                .map(|_| case(&mut rng).unwrap_or(f64::INFINITY))
                .fold(0.0f64, f64::max);
            (*name, worst)
        })
        .collect()
}

pub const CASES: &[(&str, Case)] = &[
    ("matmul", case_matmul),
    ("matmul_t", case_matmul_t),
    ("add", case_add),
    ("add_row", case_add_row),
    ("mul", case_mul),
    ("scale", case_scale),
    ("add_const", case_add_const),
    ("mul_const", case_mul_const),
    ("gelu", case_gelu),
    ("softmax_rows", case_softmax),
    ("log_softmax_rows", case_log_softmax),
    ("layer_norm", case_layer_norm),
    ("gather", case_gather),
    ("concat_rows", case_concat_rows),
    ("concat_cols", case_concat_cols),
    ("slice_rows", case_slice_rows),
    ("slice_cols", case_slice_cols),
    ("cross_entropy", case_cross_entropy),
    ("sum", case_sum),
    ("attention", case_attention),
    ("class_embedding", case_class_embedding),
    ("framed_loss_decoder_only", case_framed_decoder_only),
    ("framed_loss_encoder_decoder", case_framed_encoder_decoder),
];
