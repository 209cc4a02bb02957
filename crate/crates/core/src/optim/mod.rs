//! Adam with per-group learning rates, initialization, adaptive density
//! control and the training loop.

mod adam;
mod config;
mod density;
mod train;

pub use adam::{adam_step, lr_schedule, param_rates, sh_coeff_count, ADAM_EPS, BETA1, BETA2};
pub use config::TrainConfig;
pub use density::{
    densify_and_prune, initialize_scene, reset_opacity, DensifyReport, InitPoint, InitSource,
    OPACITY_RESET,
};
pub use train::{camera_extent, train, train_store, DensityEvent, StepMetrics, TrainOutput, LOW_OPACITY};

use thiserror::Error;

use crate::loss::LossError;
use crate::render::RenderError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimError {
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("bad value `{value}` for `{key}`")]
    BadValue { key: String, value: String },
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("initialization source is empty")]
    EmptySource,
    #[error("dataset has no training frames")]
    EmptyDataset,
    #[error("gradient list has {got} entries, store has {expected}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("loss became non-finite at step {step}")]
    NonFiniteLoss { step: usize },
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Loss(#[from] LossError),
}
