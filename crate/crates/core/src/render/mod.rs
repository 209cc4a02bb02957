//! Camera model, spherical harmonics, projection and tile rasterization.

mod camera;
mod image;
mod pipeline;
mod project;
pub mod raster;
pub mod sh;

pub use camera::{Camera, CameraError};
pub use image::Image;
pub use pipeline::{render_flow, render_frame, render_frame_backward, FrameGrads, FrameRender};
pub use project::{project, Culled, Splat2D, SplatGrad, COV_DILATION, NEAR_PLANE};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RenderError {
    #[error("blend records were not retained for this frame")]
    MissingRecords,
    #[error("gradient image is {got:?}, expected {expected:?}")]
    ShapeMismatch { expected: (usize, usize, usize), got: (usize, usize, usize) },
}
