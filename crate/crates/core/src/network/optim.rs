use serde::{Deserialize, Serialize};

use super::layers::Real;
use super::params::NetworkParams;
use crate::error::Result;

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam moment estimates, shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<R> {
    pub config: AdamConfig,
    pub m: NetworkParams<R>,
    pub v: NetworkParams<R>,
    /// Number of steps taken so far.
    pub step: u64,
}

impl<R: Real> Adam<R> {
    pub fn new(params: &NetworkParams<R>, config: AdamConfig) -> Self {
        Self {
            config,
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }

    /// One update with gradient `grad`.
    pub fn step(&mut self, params: &mut NetworkParams<R>, grad: &NetworkParams<R>) -> Result<()> {
        self.step += 1;
        let c = self.config;
        let (b1, b2) = (R::lit(c.beta1), R::lit(c.beta2));
        let one = R::one();
        self.m.zip_mut_with(grad, |m, g| *m = b1 * *m + (one - b1) * g);
        self.v.zip_mut_with(grad, |v, g| *v = b2 * *v + (one - b2) * g * g);
        let t = self.step as i32;
        let lr = R::lit(c.learning_rate);
        let bias1 = R::lit(1.0 - c.beta1.powi(t));
        let bias2 = R::lit(1.0 - c.beta2.powi(t));
        let eps = R::lit(c.epsilon);

        params.zip2_mut_with(&self.m, &self.v, |p, m, v| {
            *p -= lr * (m / bias1) / ((v / bias2).sqrt() + eps);
        });
        Ok(())
    }
}
