use super::tensor::{Real, Tensor};
use crate::error::{shape_err, Error, Result};

/// Adam hyperparameters. Defaults follow the prompt-tuning recipe:
/// betas (0.9, 0.98), learning rate 5e-3.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 5e-3,
            beta1: 0.9,
            beta2: 0.98,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let in_unit = |b: f64| b > 0.0 && b < 1.0;
        if !(self.lr > 0.0) || !in_unit(self.beta1) || !in_unit(self.beta2) || !(self.eps > 0.0) {
            return Err(Error::Config(format!("invalid Adam settings {self:?}")));
        }
        Ok(())
    }
}

/// Moment estimates for a fixed, ordered list of parameters.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Tensor<T>>,
    second: Vec<Tensor<T>>,
}

impl<T: Real> AdamState<T> {
    pub fn new(config: AdamConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        })
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn step(&mut self, params: &mut [&mut Tensor<T>], grads: &[&Tensor<T>]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(shape_err(format!(
                "{} parameters but {} gradients",
                params.len(),
                grads.len()
            )));
        }
        if self.first.is_empty() {
            self.first = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
            self.second = self.first.clone();
        }
        if self.first.len() != params.len() {
            return Err(shape_err("parameter list changed between Adam steps"));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.first) {
            if p.shape() != g.shape() || p.shape() != m.shape() {
                return Err(shape_err(format!(
                    "Adam: parameter {:?} vs gradient {:?}",
                    p.shape(),
                    g.shape()
                )));
            }
        }

        self.step += 1;
        let c = &self.config;
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let bc1 = T::lit(1.0 - c.beta1.powi(self.step as i32));
        let bc2 = T::lit(1.0 - c.beta2.powi(self.step as i32));
        let (lr, eps) = (T::lit(c.lr), T::lit(c.eps));
        let one = T::one();

        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = self.first[i].data_mut();
            let v = self.second[i].data_mut();
            for (((pv, &gv), mv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                *mv = b1 * *mv + (one - b1) * gv;
                *vv = b2 * *vv + (one - b2) * gv * gv;
                let m_hat = *mv / bc1;
                let v_hat = *vv / bc2;
                *pv = *pv - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
