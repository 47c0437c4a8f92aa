//! Encoder/decoder networks, the GP-VAE family of objectives, conditional
//! generation, and checkpoints.

pub mod checkpoint;
pub mod generate;
pub mod nets;
pub mod objectives;
pub mod state;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use generate::{
    conditional_generate, decode, encode, free_posterior, latent_dataset, latent_posterior_mean, predict_latents,
    with_model_latent,
};
pub use nets::{Activation, MlpVars};
pub use objectives::{evaluate, evaluate_as, objective, value_and_grads, Batch, Terms};
pub use state::{Bound, InitInputs, ModelKind, ModelSpec, ModelState, Param, ParamGroup};
