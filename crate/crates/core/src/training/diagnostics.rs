//! Gradient checks and the vanishing-encoder-gradient diagnostic on small
//! seeded problems that exercise every parameter group.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::kernels::{AuxiliaryData, Kernel, KernelKind};
use crate::models::{evaluate, value_and_grads, Activation, Batch, InitInputs, ModelKind, ModelSpec, ModelState, ParamGroup};
use crate::numerics::Tensor;

pub const ALL_KINDS: [ModelKind; 6] = [
    ModelKind::Pearce,
    ModelKind::Svgpvae,
    ModelKind::Lpt,
    ModelKind::LphDiagnostic,
    ModelKind::DeepSvigp,
    ModelKind::PlainVae,
];

/// A tiny dataset with GP-LVM inputs: `objects x angles` rows laid out
/// `[angle | GP-LVM]`, a periodic-times-linear kernel, and random data.
#[derive(Clone, Debug)]
pub struct ToyProblem {
    pub state: ModelState,
    pub y: Tensor,
    pub aux: AuxiliaryData,
    pub noise: Tensor,
}

impl ToyProblem {
    pub fn rows(&self) -> Vec<usize> {
        (0..self.aux.len()).collect()
    }
}

pub fn toy_problem(kind: ModelKind, seed: u64) -> Result<ToyProblem> {
    let (objects, angles, dims, data_dim, latent) = (3, 2, 2, 3, 2);
    let n = objects * angles;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = |r: usize, c: usize| Tensor::from_fn(r, c, |_, _| StandardNormal.sample(&mut rng));
    let gplvm = normal(objects, dims);
    let y = normal(n, data_dim).scale(0.5);
    let noise = normal(n, latent);
    let angle = Tensor::from_fn(n, 1, |i, _| 0.9 + 1.7 * (i % angles) as f64);
    let ids: Vec<usize> = (0..n).map(|i| i / angles).collect();
    let mut mask = vec![true];
    mask.extend(std::iter::repeat_n(false, dims));
    let aux = AuxiliaryData::with_latent(angle, mask, ids, gplvm.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let u = Tensor::from_fn(3, 1 + dims, |i, j| {
        if j == 0 {
            0.4 + 1.1 * i as f64
        } else {
            rng.random_range(-1.0..1.0)
        }
    });
    let mut kernel = Kernel::new(KernelKind::ProductPeriodicLinear { view_dims: 1 }, 1 + dims, 1.3, 0.8)?;
    kernel.train_lengthscale = true;
    kernel.train_variance = true;
    let spec = ModelSpec {
        kind,
        data_dim,
        latent_dim: latent,
        encoder_hidden: vec![3],
        decoder_hidden: vec![3],
        activation: Activation::Tanh,
        kernel,
        sigma_y2: 0.7,
        train_sigma_y2: true,
        train_inducing: true,
    };
    let inputs = InitInputs {
        inducing: kind.uses_inducing().then_some(u),
        gplvm: kind.uses_kernel().then_some(gplvm),
    };
    let mut state = ModelState::init(spec, inputs, seed)?;
    if kind.free_posterior() {
        // move off the prior so every variational entry matters
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xfee);
        for p in state.params.iter_mut().filter(|p| p.group == ParamGroup::Variational) {
            for v in p.value.data_mut() {
                *v += 0.3 * rng.random_range(-1.0..1.0);
            }
        }
    }
    Ok(ToyProblem { state, y, aux, noise })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupError {
    pub group: ParamGroup,
    pub max_rel_error: f64,
    pub entries: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradReport {
    pub kind: ModelKind,
    pub max_rel_error: f64,
    pub groups: Vec<GroupError>,
}

/// Central differences against the tape gradient for every trainable
/// entry, with relative error `|ad − fd| / max(|ad|, |fd|, 1e-8)`.
pub fn gradient_check(p: &ToyProblem, rows: &[usize], eps: f64) -> Result<GradReport> {
    let y = p.y.select_rows(rows);
    let noise = p.noise.select_rows(rows);
    let batch = Batch {
        y: &y,
        aux: &p.aux,
        rows,
        n_total: p.aux.len(),
    };
    let (_, grads) = value_and_grads(&p.state, &batch, &noise)?;
    let mut groups: Vec<GroupError> = Vec::new();
    let mut work = p.state.clone();
    for (i, param) in p.state.params.iter().enumerate() {
        if !param.trainable {
            continue;
        }
        let mut worst: f64 = 0.0;
        for e in 0..param.value.len() {
            let x0 = param.value.data()[e];
            work.params[i].value.data_mut()[e] = x0 + eps;
            let fp = evaluate(&work, &batch, &noise)?;
            work.params[i].value.data_mut()[e] = x0 - eps;
            let fm = evaluate(&work, &batch, &noise)?;
            work.params[i].value.data_mut()[e] = x0;
            let fd = (fp - fm) / (2.0 * eps);
            let ad = grads[i].data()[e];
            worst = worst.max((ad - fd).abs() / ad.abs().max(fd.abs()).max(1e-8));
        }
        match groups.iter_mut().find(|g| g.group == param.group) {
            Some(g) => {
                g.max_rel_error = g.max_rel_error.max(worst);
                g.entries += param.value.len();
            }
            None => groups.push(GroupError {
                group: param.group,
                max_rel_error: worst,
                entries: param.value.len(),
            }),
        }
    }
    Ok(GradReport {
        kind: p.state.spec.kind,
        max_rel_error: groups.iter().map(|g| g.max_rel_error).fold(0.0, f64::max),
        groups,
    })
}

/// Gradient check of every objective on its toy problem (full batch).
pub fn gradient_check_all(seed: u64) -> Result<Vec<GradReport>> {
    ALL_KINDS
        .iter()
        .map(|&k| {
            let p = toy_problem(k, seed)?;
            gradient_check(&p, &p.rows(), 1e-5)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VanishingPhi {
    /// `max |∇_φ|` of the free-posterior bound.
    pub lph: f64,
    /// `max |∇_φ|` of the sparse GP-VAE bound at the same parameters.
    pub svgpvae: f64,
}

fn encoder_grad_max(state: &ModelState, p: &ToyProblem) -> Result<f64> {
    let rows = p.rows();
    let batch = Batch {
        y: &p.y,
        aux: &p.aux,
        rows: &rows,
        n_total: rows.len(),
    };
    let (_, grads) = value_and_grads(state, &batch, &p.noise)?;
    Ok(state
        .params
        .iter()
        .zip(&grads)
        .filter(|(q, _)| q.group == ParamGroup::Encoder)
        .map(|(_, g)| g.max_abs())
        .fold(0.0, f64::max))
}

/// Encoder-gradient magnitudes of both bounds on one seeded problem.
pub fn vanishing_phi(seed: u64) -> Result<VanishingPhi> {
    let p = toy_problem(ModelKind::LphDiagnostic, seed)?;
    let lph = encoder_grad_max(&p.state, &p)?;
    let mut s = p.state.clone();
    s.spec.kind = ModelKind::Svgpvae;
    let svgpvae = encoder_grad_max(&s, &p)?;
    Ok(VanishingPhi { lph, svgpvae })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn problems_build_for_every_kind() {
        for k in ALL_KINDS {
            let p = toy_problem(k, 1).unwrap();
            assert_eq!(p.y.rows(), 6);
        }
    }

    #[test]
    fn encoder_gradient_of_free_bound_is_zero() {
        let v = vanishing_phi(2).unwrap();
        assert_eq!(v.lph, 0.0);
        assert!(v.svgpvae > 1e-8);
    }
}
