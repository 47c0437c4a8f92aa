//! Experiment configuration: one TOML file per run, unknown keys rejected.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::data::{BallConfig, RotatedConfig, ToyConfig};
use crate::error::{Error, Result};
use crate::kernels::{Kernel, KernelKind};
use crate::models::{Activation, ModelKind};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub kernel: KernelConfig,
    pub data: DataConfig,
    pub training: TrainingConfig,
    pub geco: GecoConfig,
    pub init: InitConfig,
    pub diagnostics: DiagnosticsConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub latent_dim: usize,
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    pub activation: Activation,
    pub sigma_y2: f64,
    pub train_sigma_y2: bool,
    /// Number of inducing points `m`.
    pub inducing: usize,
    pub train_inducing: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::Svgpvae,
            latent_dim: 2,
            encoder_hidden: vec![500, 500],
            decoder_hidden: vec![500, 500],
            activation: Activation::Tanh,
            sigma_y2: 1.0,
            train_sigma_y2: false,
            inducing: 15,
            train_inducing: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelName {
    Rbf,
    Linear,
    ProductPeriodicLinear,
    LowRankKronecker,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelConfig {
    pub kind: KernelName,
    /// Initial value. The moving-ball default starts above the generating
    /// scale of 2 so that recovery is visible from either side of it.
    pub lengthscale: f64,
    pub variance: f64,
    pub noise: f64,
    pub train_lengthscale: bool,
    pub train_variance: bool,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            kind: KernelName::Rbf,
            lengthscale: 3.0,
            variance: 1.0,
            noise: 0.0,
            train_lengthscale: true,
            train_variance: false,
        }
    }
}

impl KernelConfig {
    /// Kernel over inputs of `input_dim` columns, the first `view_dims` of
    /// which are views for the product kernels.
    pub fn build(&self, input_dim: usize, view_dims: usize, structure: Option<(usize, usize)>) -> Result<Kernel> {
        let kind = match self.kind {
            KernelName::Rbf => KernelKind::Rbf,
            KernelName::Linear => KernelKind::Linear,
            KernelName::ProductPeriodicLinear => KernelKind::ProductPeriodicLinear { view_dims },
            KernelName::LowRankKronecker => {
                let (objects, views) = structure.unwrap_or((0, 0));
                KernelKind::LowRankKronecker {
                    view_dims,
                    objects,
                    views,
                    object_dims: input_dim - view_dims,
                }
            }
        };
        let mut k = Kernel::new(kind, input_dim, self.lengthscale, self.variance)
            .map_err(|e| Error::Config(e.to_string()))?;
        k.noise = self.noise;
        k.train_lengthscale = self.train_lengthscale;
        k.train_variance = self.train_variance;
        Ok(k)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataSource {
    MovingBall,
    RotatedDigits,
    ToyRegression,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub source: DataSource,
    pub moving_ball: MovingBallData,
    pub rotated: RotatedData,
    pub toy: ToyConfig,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source: DataSource::MovingBall,
            moving_ball: MovingBallData::default(),
            rotated: RotatedData::default(),
            toy: ToyConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MovingBallData {
    pub render: BallConfig,
    /// Fresh training videos drawn per epoch.
    pub videos_per_epoch: usize,
    /// Fixed held-out videos for trajectory RMSE.
    pub test_videos: usize,
    /// Seed of the data streams (training and test streams differ).
    pub seed: u64,
}

impl Default for MovingBallData {
    fn default() -> Self {
        Self {
            render: BallConfig::default(),
            videos_per_epoch: 35,
            test_videos: 10,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RotatedData {
    pub images: PathBuf,
    pub labels: PathBuf,
    pub build: RotatedConfig,
    /// GP-LVM dimensions `M` per object.
    pub gplvm_dims: usize,
}

impl Default for RotatedData {
    fn default() -> Self {
        Self {
            images: PathBuf::from("fixtures/digits/images-idx3-ubyte"),
            labels: PathBuf::from("fixtures/digits/labels-idx1-ubyte"),
            build: RotatedConfig::default(),
            gplvm_dims: 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub epochs: usize,
    /// Batch size `b`; 0 means the full dataset.
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    /// Global-norm gradient clip; absent disables clipping.
    pub clip_norm: Option<f64>,
    /// Checkpoint every this many epochs; 0 keeps only the final one.
    pub checkpoint_every: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            epochs: 2000,
            batch_size: 0,
            lr: 1e-3,
            seed: 0,
            clip_norm: None,
            checkpoint_every: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GecoConfig {
    pub enabled: bool,
    /// Per-pixel squared-error target.
    pub kappa: f64,
    pub ema_decay: f64,
    pub lambda_init: f64,
    pub lambda_lr: f64,
}

impl Default for GecoConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            kappa: 0.020,
            ema_decay: 0.99,
            lambda_init: 1.0,
            lambda_lr: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GplvmInit {
    Pca,
    Random,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InducingInit {
    /// Even grid over the observed range (1-d inputs) or the PCA-based
    /// sampling scheme (rotated digits).
    Grid,
    /// All points inside the first 10% of the input range.
    Clustered,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitConfig {
    pub gplvm: GplvmInit,
    /// Standard deviation of the random GP-LVM fallback.
    pub random_std: f64,
    pub inducing: InducingInit,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            gplvm: GplvmInit::Pca,
            random_std: 1.5,
            inducing: InducingInit::Grid,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsConfig {
    pub bias_tracking: bool,
    pub grad_check: bool,
}

impl ExperimentConfig {
    /// Defaults tuned for one data source.
    pub fn preset(source: DataSource) -> Self {
        let mut c = Self::default();
        c.data.source = source;
        match source {
            DataSource::MovingBall => {}
            DataSource::RotatedDigits => {
                c.model.latent_dim = 16;
                c.model.inducing = 32;
                c.model.encoder_hidden = vec![256, 256];
                c.model.decoder_hidden = vec![256, 256];
                c.model.activation = Activation::Elu;
                c.kernel.kind = KernelName::ProductPeriodicLinear;
                c.kernel.lengthscale = 1.0;
                c.training.batch_size = 256;
                c.training.epochs = 300;
                c.geco.enabled = true;
            }
            DataSource::ToyRegression => {
                c.model.latent_dim = 1;
                c.model.inducing = 8;
                c.kernel.lengthscale = 1.0;
                c.model.encoder_hidden = vec![16];
                c.model.decoder_hidden = vec![16];
                c.training.epochs = 200;
                c.training.lr = 1e-2;
            }
        }
        c
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        let m = &self.model;
        if m.latent_dim == 0 {
            return bad("model.latent_dim must be positive");
        }
        if !(m.sigma_y2 > 0.0) {
            return bad("model.sigma_y2 must be positive");
        }
        if m.kind.uses_inducing() && m.inducing == 0 {
            return bad("model.inducing must be positive for sparse models");
        }
        if !(self.training.lr > 0.0) {
            return bad("training.lr must be positive");
        }
        if let Some(c) = self.training.clip_norm {
            if !(c > 0.0) {
                return bad("training.clip_norm must be positive");
            }
        }
        if !(self.kernel.lengthscale > 0.0) || !(self.kernel.variance > 0.0) || self.kernel.noise < 0.0 {
            return bad("kernel length scale and variance must be positive, noise non-negative");
        }
        let g = &self.geco;
        if g.enabled && (!(g.kappa > 0.0) || !(0.0..1.0).contains(&g.ema_decay) || !(g.lambda_init > 0.0)) {
            return bad("geco needs kappa > 0, ema_decay in [0, 1), lambda_init > 0");
        }
        if self.data.source == DataSource::MovingBall && self.data.moving_ball.videos_per_epoch == 0 {
            return bad("data.moving_ball.videos_per_epoch must be positive");
        }
        if self.data.source == DataSource::RotatedDigits
            && m.kind.uses_kernel()
            && self.data.rotated.gplvm_dims == 0
        {
            return bad("data.rotated.gplvm_dims must be positive");
        }
        if m.kind.full_batch_only() && self.training.batch_size != 0 {
            return bad("pearce and lpt objectives need training.batch_size = 0 (full data)");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn presets_validate() {
        for s in [DataSource::MovingBall, DataSource::RotatedDigits, DataSource::ToyRegression] {
            let c = ExperimentConfig::preset(s);
            c.validate().unwrap();
            assert_eq!(ExperimentConfig::from_toml(&c.to_toml()).unwrap(), c);
        }
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ExperimentConfig::from_toml("[model]\nlatent = 3\n").is_err());
        assert!(ExperimentConfig::from_toml("bogus = 1\n").is_err());
    }

    #[test]
    fn partial_file_fills_defaults() {
        let c = ExperimentConfig::from_toml("[model]\nkind = \"pearce\"\ninducing = 0\n").unwrap();
        assert_eq!(c.model.kind, ModelKind::Pearce);
        assert_eq!(c.training.epochs, 2000);
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(ExperimentConfig::from_toml("[training]\nlr = -1.0\n").is_err());
        assert!(ExperimentConfig::from_toml("[model]\nkind = \"pearce\"\n[training]\nbatch_size = 4\n").is_err());
    }
}
