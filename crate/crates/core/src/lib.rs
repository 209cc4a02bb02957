//! Dynamic scene reconstruction with rotor-parameterized 4D Gaussians.
//!
//! A scene is a set of anisotropic Gaussians over `(x, y, z, t)`. Each one is
//! rotated in 4D by an eight-coefficient rotor, sliced at the query time into a
//! moving, fading 3D Gaussian, and splatted through a tile rasterizer with an
//! exact analytic backward pass.
//!
//! Module map:
//! - [`rotor`]: rotor normalization, rotor to 4x4 rotation matrix, derivatives.
//! - [`gaussian`]: the 4D primitive, covariance assembly and temporal slicing.
//! - [`render`]: camera, projection, spherical harmonics, tile rasterizer.
//! - [`loss`]: L1, SSIM, entropy and 4D consistency objectives, 4D KNN.
//! - [`optim`]: Adam, schedules, initialization, density control, training.
//! - [`io`]: datasets, checkpoints, synthetic scenes, images and metrics.

pub mod gaussian;
pub mod io;
pub mod loss;
pub mod math;
pub mod optim;
pub mod render;
pub mod rotor;

pub use gaussian::{Gaussian4D, GaussianGrad, GaussianStore, SlicedGaussian3D};
pub use math::{Mat3, Mat4, Vec3, Vec4};
pub use render::{Camera, Image, Splat2D};
pub use rotor::{Rotor4, RotorJacobian};
