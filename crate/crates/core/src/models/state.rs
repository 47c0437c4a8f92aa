//! Model description, parameters, and binding onto a graph.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::nets::{glorot_layers, Activation, MlpVars};
use crate::error::{Error, Result};
use crate::kernels::{Kernel, KernelVars};
use crate::numerics::{linalg, Graph, Tensor, Var, BASE_JITTER};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    /// Exact GP-VAE on the full dataset.
    Pearce,
    /// Sparse GP-VAE with batch estimators.
    Svgpvae,
    /// Sparse GP-VAE with the collapsed bound on the full dataset.
    Lpt,
    /// Sparse GP-VAE with free `(μ, A)`; the inference network drops out.
    LphDiagnostic,
    /// Decoder-only sparse variational GP.
    DeepSvigp,
    /// Standard VAE with a `N(0, I)` prior.
    PlainVae,
}

impl ModelKind {
    pub fn has_encoder(self) -> bool {
        !matches!(self, ModelKind::DeepSvigp)
    }

    pub fn uses_inducing(self) -> bool {
        matches!(
            self,
            ModelKind::Svgpvae | ModelKind::Lpt | ModelKind::LphDiagnostic | ModelKind::DeepSvigp
        )
    }

    pub fn free_posterior(self) -> bool {
        matches!(self, ModelKind::LphDiagnostic | ModelKind::DeepSvigp)
    }

    pub fn uses_kernel(self) -> bool {
        !matches!(self, ModelKind::PlainVae)
    }

    /// Objectives that need every data point in one evaluation.
    pub fn full_batch_only(self) -> bool {
        matches!(self, ModelKind::Pearce | ModelKind::Lpt)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Observation dimension `K`.
    pub data_dim: usize,
    /// Latent channels `L`.
    pub latent_dim: usize,
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    pub activation: Activation,
    pub kernel: Kernel,
    pub sigma_y2: f64,
    pub train_sigma_y2: bool,
    pub train_inducing: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParamGroup {
    Encoder,
    Decoder,
    Kernel,
    Inducing,
    Gplvm,
    Variational,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub group: ParamGroup,
    pub value: Tensor,
    pub trainable: bool,
}

/// Initial values that depend on the data.
#[derive(Clone, Debug, Default)]
pub struct InitInputs {
    /// `m x D` inducing inputs.
    pub inducing: Option<Tensor>,
    /// `P x M` GP-LVM vectors.
    pub gplvm: Option<Tensor>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelState {
    pub spec: ModelSpec,
    pub params: Vec<Param>,
}

/// Parameters of one forward pass.
#[derive(Clone, Debug)]
pub struct Bound {
    /// One variable per entry of `ModelState::params`, in order.
    pub vars: Vec<Var>,
    pub encoder: Option<MlpVars>,
    pub decoder: MlpVars,
    pub kernel: KernelVars,
    pub log_sigma_y2: Var,
    pub inducing: Option<Var>,
    pub gplvm: Option<Var>,
    pub mu: Option<Var>,
    pub cov_raw: Vec<Var>,
}

fn push(params: &mut Vec<Param>, name: String, group: ParamGroup, value: Tensor, trainable: bool) {
    params.push(Param {
        name,
        group,
        value,
        trainable,
    });
}

impl ModelState {
    pub fn init(spec: ModelSpec, inputs: InitInputs, seed: u64) -> Result<Self> {
        if spec.latent_dim == 0 || spec.data_dim == 0 {
            return Err(Error::Config("data_dim and latent_dim must be positive".into()));
        }
        if !(spec.sigma_y2 > 0.0) {
            return Err(Error::Config("sigma_y2 must be positive".into()));
        }
        let kind = spec.kind;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::new();
        if kind.has_encoder() {
            let mut widths = vec![spec.data_dim];
            widths.extend(&spec.encoder_hidden);
            widths.push(2 * spec.latent_dim);
            for (i, (w, b)) in glorot_layers(&widths, &mut rng).into_iter().enumerate() {
                push(&mut params, format!("encoder.{i}.w"), ParamGroup::Encoder, w, true);
                push(&mut params, format!("encoder.{i}.b"), ParamGroup::Encoder, b, true);
            }
        }
        let mut widths = vec![spec.latent_dim];
        widths.extend(&spec.decoder_hidden);
        widths.push(spec.data_dim);
        for (i, (w, b)) in glorot_layers(&widths, &mut rng).into_iter().enumerate() {
            push(&mut params, format!("decoder.{i}.w"), ParamGroup::Decoder, w, true);
            push(&mut params, format!("decoder.{i}.b"), ParamGroup::Decoder, b, true);
        }
        push(
            &mut params,
            "likelihood.log_sigma_y2".into(),
            ParamGroup::Decoder,
            Tensor::scalar(spec.sigma_y2.ln()),
            spec.train_sigma_y2,
        );
        let k = &spec.kernel;
        push(
            &mut params,
            "kernel.log_lengthscale".into(),
            ParamGroup::Kernel,
            Tensor::scalar(k.log_lengthscale),
            k.train_lengthscale && kind.uses_kernel(),
        );
        push(
            &mut params,
            "kernel.log_variance".into(),
            ParamGroup::Kernel,
            Tensor::scalar(k.log_variance),
            k.train_variance && kind.uses_kernel(),
        );
        let mut inducing_value = None;
        if kind.uses_inducing() {
            let u = inputs
                .inducing
                .ok_or_else(|| Error::Config(format!("{kind:?} needs inducing inputs")))?;
            if u.rows() == 0 || u.cols() != k.input_dim {
                return Err(Error::Shape(format!(
                    "inducing inputs {:?} do not match kernel input dim {}",
                    u.shape(),
                    k.input_dim
                )));
            }
            inducing_value = Some(u.clone());
            push(&mut params, "inducing.u".into(), ParamGroup::Inducing, u, spec.train_inducing);
        }
        if let Some(lat) = inputs.gplvm {
            push(&mut params, "gplvm".into(), ParamGroup::Gplvm, lat, kind.uses_kernel());
        }
        if kind.free_posterior() {
            let u = inducing_value.expect("checked above");
            let m = u.rows();
            // Start at the prior: A = K_mm, so the KL term is zero.
            let kmm = k.eval_tensor(&u, &u)?;
            let l = linalg::cholesky(&kmm, BASE_JITTER)?.lower;
            let raw = Tensor::from_fn(m, m, |i, j| if i == j { l.get(i, i).ln() } else { l.get(i, j) });
            push(
                &mut params,
                "posterior.mu".into(),
                ParamGroup::Variational,
                Tensor::zeros(m, spec.latent_dim),
                true,
            );
            for c in 0..spec.latent_dim {
                push(
                    &mut params,
                    format!("posterior.cov_raw.{c}"),
                    ParamGroup::Variational,
                    raw.clone(),
                    true,
                );
            }
        }
        Ok(Self { spec, params })
    }

    pub fn find(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.find(name).map(|i| &self.params[i].value)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.find(name).map(move |i| &mut self.params[i].value)
    }

    /// Kernel with the current parameter values.
    pub fn kernel(&self) -> Kernel {
        let mut k = self.spec.kernel.clone();
        k.log_lengthscale = self.get("kernel.log_lengthscale").expect("kernel param").item();
        k.log_variance = self.get("kernel.log_variance").expect("kernel param").item();
        k
    }

    pub fn sigma_y2(&self) -> f64 {
        self.get("likelihood.log_sigma_y2").expect("likelihood param").item().exp()
    }

    pub fn inducing(&self) -> Option<&Tensor> {
        self.get("inducing.u")
    }

    pub fn gplvm(&self) -> Option<&Tensor> {
        self.get("gplvm")
    }

    pub fn num_trainable(&self) -> usize {
        self.params.iter().filter(|p| p.trainable).map(|p| p.value.len()).sum()
    }

    /// Registers every parameter on `g`; trainable ones become gradient
    /// leaves.
    pub fn bind(&self, g: &mut Graph) -> Bound {
        self.bind_values(g, vec![None; self.params.len()])
    }

    /// Like [`ModelState::bind`], but network weights are moved onto the
    /// graph instead of copied. They read as empty until
    /// [`ModelState::unbind`] returns them.
    pub fn bind_moved(&mut self, g: &mut Graph) -> Bound {
        let moved = self
            .params
            .iter_mut()
            .map(|p| {
                matches!(p.group, ParamGroup::Encoder | ParamGroup::Decoder)
                    .then(|| std::mem::replace(&mut p.value, Tensor::zeros(0, 0)))
            })
            .collect();
        self.bind_values(g, moved)
    }

    /// Returns weights moved by [`ModelState::bind_moved`].
    pub fn unbind(&mut self, g: &mut Graph, bound: &Bound) {
        for (p, v) in self.params.iter_mut().zip(&bound.vars) {
            if p.value.is_empty() && matches!(p.group, ParamGroup::Encoder | ParamGroup::Decoder) {
                p.value = g.take_leaf(*v);
            }
        }
    }

    fn bind_values(&self, g: &mut Graph, mut moved: Vec<Option<Tensor>>) -> Bound {
        let vars: Vec<Var> = self
            .params
            .iter()
            .zip(moved.iter_mut())
            .map(|(p, m)| {
                let value = m.take().unwrap_or_else(|| p.value.clone());
                if p.trainable {
                    g.param(value)
                } else {
                    g.constant(value)
                }
            })
            .collect();
        let var = |name: &str| self.find(name).map(|i| vars[i]);
        let layers = |prefix: &str| {
            let mut out = Vec::new();
            let mut i = 0;
            while let (Some(w), Some(b)) = (var(&format!("{prefix}.{i}.w")), var(&format!("{prefix}.{i}.b"))) {
                out.push((w, b));
                i += 1;
            }
            out
        };
        let act = self.spec.activation;
        let enc = layers("encoder");
        Bound {
            encoder: (!enc.is_empty()).then_some(MlpVars {
                layers: enc,
                activation: act,
            }),
            decoder: MlpVars {
                layers: layers("decoder"),
                activation: act,
            },
            kernel: KernelVars {
                log_lengthscale: var("kernel.log_lengthscale").expect("kernel param"),
                log_variance: var("kernel.log_variance").expect("kernel param"),
            },
            log_sigma_y2: var("likelihood.log_sigma_y2").expect("likelihood param"),
            inducing: var("inducing.u"),
            gplvm: var("gplvm"),
            mu: var("posterior.mu"),
            cov_raw: (0..self.spec.latent_dim)
                .filter_map(|c| var(&format!("posterior.cov_raw.{c}")))
                .collect(),
            vars,
        }
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;
    use crate::kernels::KernelKind;

    pub fn spec(kind: ModelKind, data_dim: usize, latent_dim: usize, input_dim: usize) -> ModelSpec {
        ModelSpec {
            kind,
            data_dim,
            latent_dim,
            encoder_hidden: vec![6],
            decoder_hidden: vec![5],
            activation: Activation::Tanh,
            kernel: Kernel::new(KernelKind::Rbf, input_dim, 1.2, 0.9).unwrap(),
            sigma_y2: 0.5,
            train_sigma_y2: true,
            train_inducing: true,
        }
    }
}
