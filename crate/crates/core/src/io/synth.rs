//! Analytic toy scenes: colored blobs moving through a ring of cameras.
//!
//! Each blob becomes one or more ground-truth Gaussians. Linear motion is
//! encoded by tilting the time axis toward the direction of travel, so the
//! sliced mean moves at exactly the requested velocity. Curved paths and
//! finite lifetimes are covered by several short-lived Gaussians.

use serde::{Deserialize, Serialize};

use crate::gaussian::{Gaussian4D, GaussianStore, SH_COEFFS};
use crate::io::dataset::{Dataset, Frame};
use crate::io::IoError;
use crate::math::{logit, Vec3};
use crate::render::sh::rgb_to_dc;
use crate::render::{render_frame, Camera};
use crate::rotor::Rotor4;

fn default_opacity() -> f64 {
    0.95
}
fn default_temporal_scale() -> f64 {
    1.0
}
fn default_segments() -> usize {
    8
}
fn default_test_every() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Motion {
    #[default]
    Static,
    /// Constant velocity; `center` is the position at the middle of the
    /// blob's lifetime.
    Linear { velocity: [f64; 3] },
    /// `center + amplitude · sin(2π f t)`, approximated piecewise.
    Oscillating {
        amplitude: [f64; 3],
        frequency: f64,
        #[serde(default = "default_segments")]
        segments: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobSpec {
    pub center: [f64; 3],
    #[serde(default)]
    pub motion: Motion,
    pub radius: f64,
    pub color: [f64; 3],
    #[serde(default = "default_opacity")]
    pub opacity: f64,
    #[serde(default = "default_temporal_scale")]
    pub temporal_scale: f64,
    /// `[start, end]` in normalized time; the blob exists only inside.
    #[serde(default)]
    pub lifetime: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraRing {
    pub count: usize,
    pub radius: f64,
    /// Radians above the horizontal plane.
    pub elevation: f64,
    /// Alternate cameras sit at `elevation ± elevation_spread`.
    #[serde(default)]
    pub elevation_spread: f64,
    /// Horizontal field of view in radians.
    pub fov_x: f64,
    #[serde(default)]
    pub target: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSceneSpec {
    pub blobs: Vec<BlobSpec>,
    pub cameras: CameraRing,
    /// Number of evenly spaced time stamps over `[0, 1]`.
    pub times: usize,
    pub width: usize,
    pub height: usize,
    #[serde(default)]
    pub background: [f64; 3],
    /// Frame `(camera i, time j)` goes to the test split when
    /// `(i + j) % test_every == 0`; 0 disables the test split.
    #[serde(default = "default_test_every")]
    pub test_every: usize,
}

/// Rotor tilting the time axis toward `velocity` so that a Gaussian with
/// isotropic spatial scale `radius` and temporal scale `temporal_scale` has
/// `V / W = velocity`.
pub fn velocity_rotor(velocity: [f64; 3], radius: f64, temporal_scale: f64) -> Result<Rotor4, IoError> {
    let v = Vec3::from(velocity);
    let u = v.norm();
    if u == 0.0 {
        return Ok(Rotor4::IDENTITY);
    }
    let dir = v / u;
    let (r2, s2) = (radius * radius, temporal_scale * temporal_scale);
    // In the (dir, t) plane with tilt θ: V = (s² − r²) sinθ cosθ and
    // W = r² sin²θ + s² cos²θ. Setting V = u W gives a quadratic in tanθ.
    let b = s2 - r2;
    let disc = b * b - 4.0 * u * u * r2 * s2;
    if !(b != 0.0 && disc >= 0.0) {
        return Err(IoError::InvalidSpec(format!(
            "speed {u} unreachable for radius {radius} and temporal scale {temporal_scale}"
        )));
    }
    // Root with the smaller tilt.
    let tan = (b - b.signum() * disc.sqrt()) / (2.0 * u * r2);
    let theta = tan.atan();
    let (c, s) = ((0.5 * theta).cos(), (0.5 * theta).sin());
    let candidate = |sign: f64| {
        Rotor4::new(c, 0.0, 0.0, 0.0, sign * s * dir.x, sign * s * dir.y, sign * s * dir.z, 0.0)
    };
    let speed_of = |r: &Rotor4| {
        let m = r.to_matrix_unchecked();
        let var = [r2, r2, r2, s2];
        let cov = |i: usize, j: usize| (0..4).map(|k| m[(i, k)] * m[(j, k)] * var[k]).sum::<f64>();
        Vec3::new(cov(0, 3), cov(1, 3), cov(2, 3)) / cov(3, 3)
    };
    let (plus, minus) = (candidate(1.0), candidate(-1.0));
    Ok(if (speed_of(&plus) - v).norm() <= (speed_of(&minus) - v).norm() { plus } else { minus })
}

fn make_gaussian(
    center: Vec3,
    t: f64,
    velocity: Vec3,
    radius: f64,
    temporal_scale: f64,
    blob: &BlobSpec,
) -> Result<Gaussian4D, IoError> {
    let rotor = velocity_rotor(velocity.into(), radius, temporal_scale)?;
    let mut sh = [[0.0; SH_COEFFS]; 3];
    for c in 0..3 {
        sh[c][0] = rgb_to_dc(blob.color[c]);
    }
    Ok(Gaussian4D::new(
        [center.x, center.y, center.z, t],
        [radius.ln(), radius.ln(), radius.ln(), temporal_scale.ln()],
        rotor,
        logit(blob.opacity),
        sh,
    ))
}

/// Position and velocity of a blob at time `t`.
fn path(blob: &BlobSpec, t: f64, mid: f64) -> (Vec3, Vec3) {
    let c = Vec3::from(blob.center);
    match &blob.motion {
        Motion::Static => (c, Vec3::zeros()),
        Motion::Linear { velocity } => {
            let v = Vec3::from(*velocity);
            (c + v * (t - mid), v)
        }
        Motion::Oscillating { amplitude, frequency, .. } => {
            let a = Vec3::from(*amplitude);
            let w = 2.0 * std::f64::consts::PI * frequency;
            (c + a * (w * t).sin(), a * (w * (w * t).cos()))
        }
    }
}

fn blob_gaussians(blob: &BlobSpec) -> Result<Vec<Gaussian4D>, IoError> {
    if !(blob.radius > 0.0) {
        return Err(IoError::InvalidSpec("blob radius must be positive".into()));
    }
    if !(blob.opacity > 0.0 && blob.opacity < 1.0) {
        return Err(IoError::InvalidSpec("blob opacity must be in (0, 1)".into()));
    }
    if !(blob.temporal_scale > 0.0) {
        return Err(IoError::InvalidSpec("temporal scale must be positive".into()));
    }
    let (start, end) = match blob.lifetime {
        Some([a, b]) if b > a => (a, b),
        Some(_) => return Err(IoError::InvalidSpec("lifetime must satisfy start < end".into())),
        None => (0.0, 1.0),
    };
    let mid = 0.5 * (start + end);
    let pieces = match (&blob.motion, blob.lifetime) {
        (Motion::Oscillating { segments, .. }, _) => (*segments).max(1),
        // Finite lifetimes are tiled with pieces about 0.05 long.
        (_, Some(_)) => ((end - start) / 0.05).ceil().max(1.0) as usize,
        _ => 1,
    };
    if pieces == 1 && blob.lifetime.is_none() {
        let (p, v) = path(blob, mid, mid);
        return Ok(vec![make_gaussian(p, mid, v, blob.radius, blob.temporal_scale, blob)?]);
    }
    let spacing = (end - start) / pieces as f64;
    // Neighboring pieces overlap at one standard deviation each way.
    let st = 0.5 * spacing;
    (0..pieces)
        .map(|k| {
            let t = start + spacing * (k as f64 + 0.5);
            let (p, v) = path(blob, t, mid);
            make_gaussian(p, t, v, blob.radius, st, blob)
        })
        .collect()
}

impl SyntheticSceneSpec {
    pub fn validate(&self) -> Result<(), IoError> {
        if self.blobs.is_empty() {
            return Err(IoError::InvalidSpec("need at least one blob".into()));
        }
        if self.cameras.count < 2 {
            return Err(IoError::InvalidSpec("need at least two cameras".into()));
        }
        if self.times == 0 || self.width == 0 || self.height == 0 {
            return Err(IoError::InvalidSpec("times, width and height must be positive".into()));
        }
        if !(self.cameras.radius > 0.0 && self.cameras.fov_x > 0.0 && self.cameras.fov_x < 3.1) {
            return Err(IoError::InvalidSpec("bad camera ring".into()));
        }
        Ok(())
    }

    /// Ground-truth Gaussians for every blob.
    pub fn ground_truth(&self) -> Result<GaussianStore, IoError> {
        let mut all = Vec::new();
        for b in &self.blobs {
            all.extend(blob_gaussians(b)?);
        }
        Ok(GaussianStore::new(all))
    }

    pub fn cameras(&self) -> Result<Vec<Camera>, IoError> {
        let ring = &self.cameras;
        let target = Vec3::from(ring.target);
        (0..ring.count)
            .map(|i| {
                let az = 2.0 * std::f64::consts::PI * i as f64 / ring.count as f64;
                let el = ring.elevation + if i % 2 == 0 { ring.elevation_spread } else { -ring.elevation_spread };
                let eye = target + Vec3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin()) * ring.radius;
                Ok(Camera::look_at(eye, target, Vec3::z(), self.width, self.height, ring.fov_x, 0.0)?)
            })
            .collect()
    }

    pub fn time_stamps(&self) -> Vec<f64> {
        if self.times == 1 {
            return vec![0.0];
        }
        (0..self.times).map(|j| j as f64 / (self.times - 1) as f64).collect()
    }
}

/// Builds the ground-truth store and renders every camera at every time.
pub fn generate_synthetic(spec: &SyntheticSceneSpec) -> Result<(Dataset, GaussianStore), IoError> {
    spec.validate()?;
    let store = spec.ground_truth()?;
    let cameras = spec.cameras()?;
    let mut ds = Dataset { train: vec![], val: vec![], test: vec![], time_offset: 0.0, time_scale: 1.0 };
    for (i, cam) in cameras.iter().enumerate() {
        for (j, &t) in spec.time_stamps().iter().enumerate() {
            let camera = cam.with_time(t);
            let image = render_frame(&store, &camera, spec.background).image.clamped();
            let test = spec.test_every > 0 && (i + j) % spec.test_every == 0;
            let split = if test { "test" } else { "train" };
            let frame = Frame { camera, image, file_path: format!("./{split}/r_{i:03}_{j:03}") };
            if test {
                ds.test.push(frame);
            } else {
                ds.train.push(frame);
            }
        }
    }
    Ok((ds, store))
}
