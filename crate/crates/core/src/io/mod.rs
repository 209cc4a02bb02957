//! Datasets, checkpoints, synthetic scenes, PNG encoding and metrics.

mod checkpoint;
mod dataset;
mod image_io;
mod metrics;
mod synth;

pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_SH_DEGREE, CHECKPOINT_VERSION,
};
pub use dataset::{
    load_camera_file, load_dataset, load_dataset_with_background, save_camera_file, save_dataset,
    CameraFile, Dataset, Frame, Split,
};
pub use image_io::{flow_to_rgb, read_png, write_png, quantize_u8};
pub use metrics::{mse, psnr, PSNR_CAP};
pub use synth::{
    generate_synthetic, velocity_rotor, BlobSpec, CameraRing, Motion, SyntheticSceneSpec,
};

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("malformed JSON in {path}: {message}")]
    MalformedJson { path: PathBuf, message: String },
    #[error("frame {frame}: camera pose is not a rigid transform (rotation error {error:e})")]
    NonInvertiblePose { frame: String, error: f64 },
    #[error("image {path} is {got:?}, expected {expected:?}")]
    ImageSize { path: PathBuf, expected: (usize, usize), got: (usize, usize) },
    #[error("png: {0}")]
    Png(String),
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("unsupported SH degree {0} in checkpoint")]
    ShDegree(u32),
    #[error("checkpoint truncated: need {needed} bytes, have {have}")]
    Truncated { needed: usize, have: usize },
    #[error("invalid synthetic scene: {0}")]
    InvalidSpec(String),
    #[error("images differ in shape: {a:?} vs {b:?}")]
    ShapeMismatch { a: (usize, usize, usize), b: (usize, usize, usize) },
    #[error(transparent)]
    Camera(#[from] crate::render::CameraError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
