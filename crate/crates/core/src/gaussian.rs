//! The 4D Gaussian primitive and its temporal slice.
//!
//! `Σ4D = R S Sᵀ Rᵀ` is split into blocks
//!
//! ```text
//! Σ4D = | U   V |     U: 3x3, V: 3x1, W: scalar
//!       | Vᵀ  W |
//! ```
//!
//! and the slice at time `t` is the conditional Gaussian: covariance
//! `U − V Vᵀ / W` (a Schur complement, so no 4x4 or 3x3 inverse is formed),
//! mean `μxyz + (t − μt) V / W`, and amplitude `exp(−½ (t − μt)² / W)`.

use thiserror::Error;

use crate::math::{sigmoid, Mat3, Mat4, Vec3};
use crate::rotor::Rotor4;

/// Real SH coefficients per color channel (degree 3).
pub const SH_COEFFS: usize = 16;
/// Flattened parameter count of one Gaussian.
pub const PARAM_COUNT: usize = 65;
pub const OFFSET_MEAN: usize = 0;
pub const OFFSET_LOG_SCALE: usize = 4;
pub const OFFSET_ROTOR: usize = 8;
pub const OFFSET_OPACITY: usize = 16;
pub const OFFSET_SH: usize = 17;

/// Diagonal added to every sliced 3D covariance.
pub const SLICE_REGULARIZER: f64 = 1e-9;
/// Temporal variances below this are treated as collapsed.
pub const MIN_TEMPORAL_VARIANCE: f64 = 1e-12;
/// Gaussians with `λ (t − μt)² > VISIBILITY_THRESHOLD` are skipped at `t`.
pub const VISIBILITY_THRESHOLD: f64 = 16.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GaussianError {
    #[error("temporal variance {0:e} is below the floor; the slice is undefined")]
    DegenerateTime(f64),
}

/// One primitive. Scales are stored as logarithms and opacity as a logit.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian4D {
    /// `(μx, μy, μz, μt)`.
    pub mean: [f64; 4],
    /// `(log sx, log sy, log sz, log st)`.
    pub log_scales: [f64; 4],
    pub rotor: Rotor4,
    pub opacity_logit: f64,
    /// `sh[channel][coefficient]`, DC coefficient first.
    pub sh: [[f64; SH_COEFFS]; 3],
}

/// Gradient with the same layout as [`Gaussian4D`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianGrad {
    pub mean: [f64; 4],
    pub log_scales: [f64; 4],
    pub rotor: [f64; 8],
    pub opacity_logit: f64,
    pub sh: [[f64; SH_COEFFS]; 3],
}

impl Default for GaussianGrad {
    fn default() -> Self {
        GaussianGrad {
            mean: [0.0; 4],
            log_scales: [0.0; 4],
            rotor: [0.0; 8],
            opacity_logit: 0.0,
            sh: [[0.0; SH_COEFFS]; 3],
        }
    }
}

impl GaussianGrad {
    pub fn to_flat(&self) -> [f64; PARAM_COUNT] {
        let mut out = [0.0; PARAM_COUNT];
        out[OFFSET_MEAN..OFFSET_MEAN + 4].copy_from_slice(&self.mean);
        out[OFFSET_LOG_SCALE..OFFSET_LOG_SCALE + 4].copy_from_slice(&self.log_scales);
        out[OFFSET_ROTOR..OFFSET_ROTOR + 8].copy_from_slice(&self.rotor);
        out[OFFSET_OPACITY] = self.opacity_logit;
        for c in 0..3 {
            let o = OFFSET_SH + c * SH_COEFFS;
            out[o..o + SH_COEFFS].copy_from_slice(&self.sh[c]);
        }
        out
    }

    pub fn from_flat(flat: &[f64; PARAM_COUNT]) -> Self {
        let mut g = GaussianGrad::default();
        g.mean.copy_from_slice(&flat[OFFSET_MEAN..OFFSET_MEAN + 4]);
        g.log_scales.copy_from_slice(&flat[OFFSET_LOG_SCALE..OFFSET_LOG_SCALE + 4]);
        g.rotor.copy_from_slice(&flat[OFFSET_ROTOR..OFFSET_ROTOR + 8]);
        g.opacity_logit = flat[OFFSET_OPACITY];
        for c in 0..3 {
            let o = OFFSET_SH + c * SH_COEFFS;
            g.sh[c].copy_from_slice(&flat[o..o + SH_COEFFS]);
        }
        g
    }

    pub fn add_scaled(&mut self, other: &GaussianGrad, w: f64) {
        for k in 0..4 {
            self.mean[k] += w * other.mean[k];
            self.log_scales[k] += w * other.log_scales[k];
        }
        for k in 0..8 {
            self.rotor[k] += w * other.rotor[k];
        }
        self.opacity_logit += w * other.opacity_logit;
        for c in 0..3 {
            for k in 0..SH_COEFFS {
                self.sh[c][k] += w * other.sh[c][k];
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_flat().iter().all(|v| v.is_finite())
    }
}

/// A 4D Gaussian restricted to one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct SlicedGaussian3D {
    pub mean: Vec3,
    pub cov: Mat3,
    /// `exp(−½ λ (t − μt)²)`.
    pub decay: f64,
    /// `V / W`: world units per unit of scene time.
    pub speed: Vec3,
    /// `1 / W`.
    pub lambda: f64,
    pub source_index: usize,
}

/// Upstream gradient for the outputs of [`Gaussian4D::slice_at`]. `cov` holds
/// one partial per matrix entry, so symmetric pairs may be split arbitrarily.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SliceGrad {
    pub mean: Vec3,
    pub cov: Mat3,
    pub decay: f64,
    pub speed: Vec3,
}

impl Default for SliceGrad {
    fn default() -> Self {
        SliceGrad { mean: Vec3::zeros(), cov: Mat3::zeros(), decay: 0.0, speed: Vec3::zeros() }
    }
}

struct CovarianceParts {
    raw_rotor: Rotor4,
    unit_rotor: Rotor4,
    rotation: Mat4,
    variances: [f64; 4],
    cov: Mat4,
}

impl Gaussian4D {
    pub fn new(
        mean: [f64; 4],
        log_scales: [f64; 4],
        rotor: Rotor4,
        opacity_logit: f64,
        sh: [[f64; SH_COEFFS]; 3],
    ) -> Self {
        Gaussian4D { mean, log_scales, rotor, opacity_logit, sh }
    }

    pub fn to_flat(&self) -> [f64; PARAM_COUNT] {
        let mut out = [0.0; PARAM_COUNT];
        out[OFFSET_MEAN..OFFSET_MEAN + 4].copy_from_slice(&self.mean);
        out[OFFSET_LOG_SCALE..OFFSET_LOG_SCALE + 4].copy_from_slice(&self.log_scales);
        out[OFFSET_ROTOR..OFFSET_ROTOR + 8].copy_from_slice(&self.rotor.to_array());
        out[OFFSET_OPACITY] = self.opacity_logit;
        for c in 0..3 {
            let o = OFFSET_SH + c * SH_COEFFS;
            out[o..o + SH_COEFFS].copy_from_slice(&self.sh[c]);
        }
        out
    }

    pub fn from_flat(flat: &[f64; PARAM_COUNT]) -> Self {
        let mut mean = [0.0; 4];
        let mut log_scales = [0.0; 4];
        let mut rotor = [0.0; 8];
        let mut sh = [[0.0; SH_COEFFS]; 3];
        mean.copy_from_slice(&flat[OFFSET_MEAN..OFFSET_MEAN + 4]);
        log_scales.copy_from_slice(&flat[OFFSET_LOG_SCALE..OFFSET_LOG_SCALE + 4]);
        rotor.copy_from_slice(&flat[OFFSET_ROTOR..OFFSET_ROTOR + 8]);
        for c in 0..3 {
            let o = OFFSET_SH + c * SH_COEFFS;
            sh[c].copy_from_slice(&flat[o..o + SH_COEFFS]);
        }
        Gaussian4D::new(mean, log_scales, Rotor4::from_array(rotor), flat[OFFSET_OPACITY], sh)
    }

    pub fn opacity(&self) -> f64 {
        sigmoid(self.opacity_logit)
    }

    pub fn scales(&self) -> [f64; 4] {
        self.log_scales.map(f64::exp)
    }

    pub fn spatial_mean(&self) -> Vec3 {
        Vec3::new(self.mean[0], self.mean[1], self.mean[2])
    }

    /// Rotation matrix of the normalized rotor. A zero rotor (never produced by
    /// the optimizer) maps to the identity.
    pub fn rotation_matrix(&self) -> Mat4 {
        self.rotor
            .normalize()
            .map(|r| r.to_matrix_unchecked())
            .unwrap_or_else(|_| Mat4::identity())
    }

    fn covariance_parts(&self) -> CovarianceParts {
        let unit_rotor = self.rotor.normalize().unwrap_or(Rotor4::IDENTITY);
        let rotation = unit_rotor.to_matrix_unchecked();
        let variances = self.log_scales.map(|l| (2.0 * l).exp());
        let mut cov = Mat4::zeros();
        for i in 0..4 {
            for j in i..4 {
                let mut acc = 0.0;
                for k in 0..4 {
                    acc += rotation[(i, k)] * variances[k] * rotation[(j, k)];
                }
                cov[(i, j)] = acc;
                cov[(j, i)] = acc;
            }
        }
        CovarianceParts { raw_rotor: self.rotor, unit_rotor, rotation, variances, cov }
    }

    /// `Σ4D = R S Sᵀ Rᵀ`, exactly symmetric.
    pub fn assemble_covariance(&self) -> Mat4 {
        self.covariance_parts().cov
    }

    /// Temporal variance `W` (the bottom-right entry of `Σ4D`).
    pub fn temporal_variance(&self) -> f64 {
        self.assemble_covariance()[(3, 3)]
    }

    /// `λ (t − μt)² ≤ 16`.
    pub fn is_visible(&self, t: f64) -> bool {
        let w = self.temporal_variance();
        if !(w >= MIN_TEMPORAL_VARIANCE) {
            return false;
        }
        let dt = t - self.mean[3];
        dt * dt / w <= VISIBILITY_THRESHOLD
    }

    /// The time-independent velocity `V / W`.
    pub fn speed(&self) -> Result<Vec3, GaussianError> {
        let cov = self.assemble_covariance();
        let w = cov[(3, 3)];
        if !(w >= MIN_TEMPORAL_VARIANCE) {
            return Err(GaussianError::DegenerateTime(w));
        }
        Ok(Vec3::new(cov[(0, 3)], cov[(1, 3)], cov[(2, 3)]) / w)
    }

    pub fn slice_at(&self, t: f64) -> Result<SlicedGaussian3D, GaussianError> {
        let cov = self.assemble_covariance();
        slice_covariance(&self.mean, &cov, t)
    }

    /// Chain rule of [`slice_at`](Self::slice_at) back to every parameter.
    /// Only mean, log-scale and rotor entries of the result are populated.
    pub fn slice_vjp(&self, t: f64, upstream: &SliceGrad) -> GaussianGrad {
        let parts = self.covariance_parts();
        let cov = &parts.cov;
        let w = cov[(3, 3)];
        let mut out = GaussianGrad::default();
        if !(w >= MIN_TEMPORAL_VARIANCE) {
            return out;
        }
        let v = Vec3::new(cov[(0, 3)], cov[(1, 3)], cov[(2, 3)]);
        let speed = v / w;
        let dt = t - self.mean[3];
        let decay = (-0.5 * dt * dt / w).exp();

        let g_cov = upstream.cov;
        let g_cov_sym = g_cov + g_cov.transpose();
        let d_v = (upstream.speed + upstream.mean * dt) / w - g_cov_sym * v / w;
        let d_w = -(upstream.speed.dot(&v)) / (w * w) - dt * upstream.mean.dot(&v) / (w * w)
            + v.dot(&(g_cov * v)) / (w * w)
            + upstream.decay * decay * 0.5 * dt * dt / (w * w);

        for k in 0..3 {
            out.mean[k] = upstream.mean[k];
        }
        out.mean[3] = -upstream.mean.dot(&speed) + upstream.decay * decay * dt / w;

        let mut g4 = Mat4::zeros();
        for i in 0..3 {
            for j in 0..3 {
                g4[(i, j)] = g_cov[(i, j)];
            }
            g4[(i, 3)] = d_v[i];
        }
        g4[(3, 3)] = d_w;
        let (d_log_scales, d_rotor) = covariance_vjp(&parts, &g4);
        out.log_scales = d_log_scales;
        out.rotor = d_rotor;
        out
    }

    /// Chain rule of [`speed`](Self::speed) for an upstream gradient on `V/W`.
    pub fn speed_vjp(&self, upstream: &Vec3) -> GaussianGrad {
        let slice = SliceGrad { speed: *upstream, ..SliceGrad::default() };
        // Speed does not depend on t; any t gives the same partials.
        self.slice_vjp(self.mean[3], &slice)
    }
}

/// Gradient of `Σ4D` (one partial per entry) mapped to log-scales and the raw
/// rotor coefficients.
fn covariance_vjp(parts: &CovarianceParts, g4: &Mat4) -> ([f64; 4], [f64; 8]) {
    let r = &parts.rotation;
    let d = Mat4::from_diagonal(&nalgebra::Vector4::from(parts.variances));
    let sym = g4 + g4.transpose();
    let d_rotation = sym * r * d;
    let inner = r.transpose() * g4 * r;
    let mut d_log_scales = [0.0; 4];
    for k in 0..4 {
        d_log_scales[k] = inner[(k, k)] * 2.0 * parts.variances[k];
    }
    let d_unit = parts.unit_rotor.to_matrix_jacobian().vjp(&d_rotation);
    let d_raw = parts.raw_rotor.normalize_vjp(&d_unit);
    (d_log_scales, d_raw)
}

/// Conditions a 4D Gaussian `(μ, Σ4D)` on time `t`.
pub fn slice_covariance(
    mean: &[f64; 4],
    cov: &Mat4,
    t: f64,
) -> Result<SlicedGaussian3D, GaussianError> {
    let w = cov[(3, 3)];
    if !(w >= MIN_TEMPORAL_VARIANCE) {
        return Err(GaussianError::DegenerateTime(w));
    }
    let v = Vec3::new(cov[(0, 3)], cov[(1, 3)], cov[(2, 3)]);
    let speed = v / w;
    let dt = t - mean[3];
    let mut cov3 = Mat3::zeros();
    for i in 0..3 {
        for j in i..3 {
            let c = cov[(i, j)] - v[i] * v[j] / w;
            cov3[(i, j)] = c;
            cov3[(j, i)] = c;
        }
        cov3[(i, i)] += SLICE_REGULARIZER;
    }
    Ok(SlicedGaussian3D {
        mean: Vec3::new(mean[0], mean[1], mean[2]) + speed * dt,
        cov: cov3,
        decay: (-0.5 * dt * dt / w).exp(),
        speed,
        lambda: 1.0 / w,
        source_index: 0,
    })
}

/// Per-Gaussian Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub first: [f64; PARAM_COUNT],
    pub second: [f64; PARAM_COUNT],
}

impl Default for Moments {
    fn default() -> Self {
        Moments { first: [0.0; PARAM_COUNT], second: [0.0; PARAM_COUNT] }
    }
}

/// A growable set of Gaussians with optimizer state and densification
/// statistics held in parallel arrays of equal length.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GaussianStore {
    gaussians: Vec<Gaussian4D>,
    moments: Vec<Moments>,
    grad_accum: Vec<f64>,
    grad_hits: Vec<u32>,
    /// Adam step counter shared by all parameters.
    pub adam_step: u64,
}

impl GaussianStore {
    pub fn new(gaussians: Vec<Gaussian4D>) -> Self {
        let n = gaussians.len();
        GaussianStore {
            gaussians,
            moments: vec![Moments::default(); n],
            grad_accum: vec![0.0; n],
            grad_hits: vec![0; n],
            adam_step: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }

    pub fn gaussians(&self) -> &[Gaussian4D] {
        &self.gaussians
    }

    pub fn gaussians_mut(&mut self) -> &mut [Gaussian4D] {
        &mut self.gaussians
    }

    pub fn get(&self, i: usize) -> &Gaussian4D {
        &self.gaussians[i]
    }

    pub fn moments(&self) -> &[Moments] {
        &self.moments
    }

    pub(crate) fn params_and_moments_mut(&mut self) -> (&mut [Gaussian4D], &mut [Moments]) {
        (&mut self.gaussians, &mut self.moments)
    }

    /// Appends a Gaussian with fresh optimizer state and statistics.
    pub fn push(&mut self, g: Gaussian4D) {
        self.gaussians.push(g);
        self.moments.push(Moments::default());
        self.grad_accum.push(0.0);
        self.grad_hits.push(0);
    }

    /// Keeps entries whose mask is true, compacting every parallel array.
    pub fn retain_mask(&mut self, keep: &[bool]) {
        assert_eq!(keep.len(), self.len());
        let mut idx = 0;
        self.gaussians.retain(|_| {
            idx += 1;
            keep[idx - 1]
        });
        let mut idx = 0;
        self.moments.retain(|_| {
            idx += 1;
            keep[idx - 1]
        });
        let mut idx = 0;
        self.grad_accum.retain(|_| {
            idx += 1;
            keep[idx - 1]
        });
        let mut idx = 0;
        self.grad_hits.retain(|_| {
            idx += 1;
            keep[idx - 1]
        });
    }

    /// Slices every Gaussian visible at `t`, tagging each with its index.
    pub fn slice_visible(&self, t: f64) -> Vec<SlicedGaussian3D> {
        self.gaussians
            .iter()
            .enumerate()
            .filter_map(|(i, g)| {
                let s = g.slice_at(t).ok()?;
                let dt = t - g.mean[3];
                (s.lambda * dt * dt <= VISIBILITY_THRESHOLD).then_some(SlicedGaussian3D {
                    source_index: i,
                    ..s
                })
            })
            .collect()
    }

    /// Adds one view's screen-space positional gradient norms. `None` marks a
    /// Gaussian that did not reach the image in that view.
    pub fn accumulate_stats(&mut self, norms: &[Option<f64>]) {
        assert_eq!(norms.len(), self.len());
        for (i, n) in norms.iter().enumerate() {
            if let Some(n) = n {
                self.grad_accum[i] += n;
                self.grad_hits[i] += 1;
            }
        }
    }

    /// Mean accumulated gradient norm per Gaussian; zero for never-seen ones.
    pub fn mean_grad_norms(&self) -> Vec<f64> {
        self.grad_accum
            .iter()
            .zip(&self.grad_hits)
            .map(|(s, &h)| if h == 0 { 0.0 } else { s / h as f64 })
            .collect()
    }

    pub fn reset_stats(&mut self) {
        self.grad_accum.iter_mut().for_each(|v| *v = 0.0);
        self.grad_hits.iter_mut().for_each(|v| *v = 0);
    }

    pub fn reset_moments(&mut self, i: usize) {
        self.moments[i] = Moments::default();
    }
}
