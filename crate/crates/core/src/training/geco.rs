//! Constrained reconstruction: a Lagrange multiplier on the per-pixel
//! squared error, adapted from a moving average of the constraint.

use serde::{Deserialize, Serialize};

use crate::config::GecoConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Geco {
    pub kappa: f64,
    pub decay: f64,
    pub lambda_lr: f64,
    pub lambda: f64,
    pub ema: f64,
}

impl Geco {
    pub fn new(cfg: &GecoConfig) -> Self {
        Self {
            kappa: cfg.kappa,
            decay: cfg.ema_decay,
            lambda_lr: cfg.lambda_lr,
            lambda: cfg.lambda_init,
            ema: 0.0,
        }
    }

    /// `ema ← d·ema + (1 − d)(mse − κ)`, then `λ ← λ·exp(lr·ema)`.
    pub fn update(&mut self, mse: f64) {
        self.ema = self.decay * self.ema + (1.0 - self.decay) * (mse - self.kappa);
        self.lambda *= (self.lambda_lr * self.ema).exp();
    }
}
