//! Adam with bias correction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-7,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// One descent step: `params -= lr · m̂ / (√v̂ + ε)`. Entries whose
    /// `active` flag is false are left alone.
    pub fn update(&mut self, params: &mut [&mut Tensor], grads: &[Tensor], active: &[bool]) -> Result<()> {
        self.apply(params, grads, active, 1.0)
    }

    /// Same step along `+grads`, for maximization.
    pub fn ascend(&mut self, params: &mut [&mut Tensor], grads: &[Tensor], active: &[bool]) -> Result<()> {
        self.apply(params, grads, active, -1.0)
    }

    fn apply(&mut self, params: &mut [&mut Tensor], grads: &[Tensor], active: &[bool], sign: f64) -> Result<()> {
        if params.len() != grads.len() || params.len() != active.len() {
            return Err(Error::Shape(format!(
                "{} parameters, {} gradients, {} flags",
                params.len(),
                grads.len(),
                active.len()
            )));
        }
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| Tensor::zeros(g.rows(), g.cols())).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(t);
        let rc2 = 1.0 / (1.0 - b2.powi(t));
        let step = sign * self.lr / c1;
        let eps = self.eps;
        for (i, p) in params.iter_mut().enumerate() {
            if !active[i] {
                continue;
            }
            let g = &grads[i];
            if !p.same_shape(g) || !self.m[i].same_shape(g) {
                return Err(Error::Shape(format!("gradient {i} has shape {:?}", g.shape())));
            }
            let (m, v) = (self.m[i].data_mut(), self.v[i].data_mut());
            for (((x, &gk), mk), vk) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mk = b1 * *mk + (1.0 - b1) * gk;
                *vk = b2 * *vk + (1.0 - b2) * gk * gk;
                *x -= step * *mk / ((*vk * rc2).sqrt() + eps);
            }
        }
        Ok(())
    }
}
