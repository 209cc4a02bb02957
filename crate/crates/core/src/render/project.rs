//! Sliced 3D Gaussian to screen-space splat, and its chain rule.

use crate::gaussian::{SliceGrad, SlicedGaussian3D, SH_COEFFS};
use crate::math::{sigmoid, Mat2x3, Mat3, Vec3};
use crate::render::camera::Camera;
use crate::render::raster::MIN_ALPHA;
use crate::render::sh::{sh_basis, sh_basis_gradient};

/// Points at or closer than this camera depth are culled.
pub const NEAR_PLANE: f64 = 0.2;
/// Added to both diagonal entries of the 2D covariance (pixels²).
pub const COV_DILATION: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Culled {
    NearPlane,
    OffScreen,
    Transparent,
    Degenerate,
}

/// Screen-space footprint of one Gaussian in one view.
#[derive(Debug, Clone, PartialEq)]
pub struct Splat2D {
    /// Pixel coordinates of the center.
    pub mean: [f64; 2],
    /// Upper triangle `(a, b, c)` of the inverse 2D covariance.
    pub conic: [f64; 3],
    pub depth: f64,
    pub color: [f64; 3],
    /// Opacity times temporal decay.
    pub alpha_base: f64,
    /// Screen velocity in pixels per unit of scene time.
    pub flow: [f64; 2],
    pub source_index: usize,
    /// Half extents of the box holding every pixel center where the splat's
    /// alpha can reach [`MIN_ALPHA`].
    pub extent: [f64; 2],
}

/// Gradient with respect to the rasterizer inputs of one splat.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SplatGrad {
    pub mean: [f64; 2],
    pub conic: [f64; 3],
    pub color: [f64; 3],
    pub alpha_base: f64,
}

impl SplatGrad {
    pub fn add(&mut self, o: &SplatGrad) {
        for k in 0..2 {
            self.mean[k] += o.mean[k];
        }
        for k in 0..3 {
            self.conic[k] += o.conic[k];
            self.color[k] += o.color[k];
        }
        self.alpha_base += o.alpha_base;
    }
}

/// Intermediates kept for the backward pass.
pub(crate) struct ProjectionTrace {
    cam_point: Vec3,
    screen_map: Mat2x3,
    cov2: [f64; 3],
    det: f64,
    view_offset: Vec3,
    view_dir: Vec3,
    basis: [f64; SH_COEFFS],
    color_active: [bool; 3],
    opacity: f64,
}

pub fn project(
    s: &SlicedGaussian3D,
    cam: &Camera,
    sh: &[[f64; SH_COEFFS]; 3],
    opacity_logit: f64,
) -> Result<Splat2D, Culled> {
    project_traced(s, cam, sh, opacity_logit).map(|(splat, _)| splat)
}

pub(crate) fn project_traced(
    s: &SlicedGaussian3D,
    cam: &Camera,
    sh: &[[f64; SH_COEFFS]; 3],
    opacity_logit: f64,
) -> Result<(Splat2D, ProjectionTrace), Culled> {
    let rot = cam.rotation();
    let p = rot * s.mean + cam.translation();
    if !(p.z > NEAR_PLANE) {
        return Err(Culled::NearPlane);
    }
    let opacity = sigmoid(opacity_logit);
    let alpha_base = opacity * s.decay;
    if !(alpha_base >= MIN_ALPHA) {
        return Err(Culled::Transparent);
    }

    let inv_z = 1.0 / p.z;
    let jacobian = Mat2x3::new(
        cam.fx * inv_z,
        0.0,
        -cam.fx * p.x * inv_z * inv_z,
        0.0,
        cam.fy * inv_z,
        -cam.fy * p.y * inv_z * inv_z,
    );
    let screen_map = jacobian * rot;
    let full = screen_map * s.cov * screen_map.transpose();
    let cov2 = [full[(0, 0)] + COV_DILATION, full[(0, 1)], full[(1, 1)] + COV_DILATION];
    let det = cov2[0] * cov2[2] - cov2[1] * cov2[1];
    if !(det > 0.0) {
        return Err(Culled::Degenerate);
    }
    let conic = [cov2[2] / det, -cov2[1] / det, cov2[0] / det];
    let mean = [cam.fx * p.x * inv_z + cam.cx, cam.fy * p.y * inv_z + cam.cy];

    let reach = (2.0 * (alpha_base / MIN_ALPHA).ln().max(0.0)).sqrt();
    let extent = [reach * cov2[0].sqrt(), reach * cov2[2].sqrt()];
    if mean[0] + extent[0] < 0.0
        || mean[0] - extent[0] > cam.width as f64
        || mean[1] + extent[1] < 0.0
        || mean[1] - extent[1] > cam.height as f64
    {
        return Err(Culled::OffScreen);
    }

    let view_offset = s.mean - cam.center();
    let view_dir = view_offset.normalize();
    let basis = sh_basis(&view_dir);
    let mut color = [0.0; 3];
    let mut color_active = [false; 3];
    for c in 0..3 {
        let raw: f64 = sh[c].iter().zip(&basis).map(|(a, b)| a * b).sum::<f64>() + 0.5;
        color_active[c] = raw > 0.0;
        color[c] = raw.max(0.0);
    }

    let flow = screen_map * s.speed;
    let splat = Splat2D {
        mean,
        conic,
        depth: p.z,
        color,
        alpha_base,
        flow: [flow[0], flow[1]],
        source_index: s.source_index,
        extent,
    };
    let trace = ProjectionTrace {
        cam_point: p,
        screen_map,
        cov2,
        det,
        view_offset,
        view_dir,
        basis,
        color_active,
        opacity,
    };
    Ok((splat, trace))
}

/// Chain rule of [`project`]: returns gradients for the slice outputs, the SH
/// coefficients and the opacity logit.
pub(crate) fn project_vjp(
    trace: &ProjectionTrace,
    s: &SlicedGaussian3D,
    cam: &Camera,
    sh: &[[f64; SH_COEFFS]; 3],
    g: &SplatGrad,
) -> (SliceGrad, [[f64; SH_COEFFS]; 3], f64) {
    let rot = cam.rotation();
    let mut d_mean3 = Vec3::zeros();

    // Color through spherical harmonics, including the view direction.
    let mut d_sh = [[0.0; SH_COEFFS]; 3];
    let mut d_dir = Vec3::zeros();
    let basis_grad = sh_basis_gradient(&trace.view_dir);
    for c in 0..3 {
        if !trace.color_active[c] || g.color[c] == 0.0 {
            continue;
        }
        for k in 0..SH_COEFFS {
            d_sh[c][k] = g.color[c] * trace.basis[k];
            let w = g.color[c] * sh[c][k];
            d_dir += Vec3::new(basis_grad[k][0], basis_grad[k][1], basis_grad[k][2]) * w;
        }
    }
    let len = trace.view_offset.norm();
    d_mean3 += (d_dir - trace.view_dir * trace.view_dir.dot(&d_dir)) / len;

    // alpha_base = sigmoid(logit) * decay
    let o = trace.opacity;
    let d_logit = g.alpha_base * s.decay * o * (1.0 - o);
    let d_decay = g.alpha_base * o;

    // Conic as a function of the symmetric 2D covariance (a, b, c).
    let [a, b, c] = trace.cov2;
    let det2 = trace.det * trace.det;
    let [g0, g1, g2] = g.conic;
    let d_a = g0 * (-c * c / det2) + g1 * (b * c / det2) + g2 * (-b * b / det2);
    let d_b = g0 * (2.0 * b * c / det2)
        + g1 * (-(trace.det + 2.0 * b * b) / det2)
        + g2 * (2.0 * a * b / det2);
    let d_c = g0 * (-b * b / det2) + g1 * (a * b / det2) + g2 * (-a * a / det2);
    let g_cov2 = nalgebra::Matrix2::new(d_a, 0.5 * d_b, 0.5 * d_b, d_c);

    let t = &trace.screen_map;
    let d_cov3: Mat3 = t.transpose() * g_cov2 * t;
    let d_screen_map = 2.0 * g_cov2 * t * s.cov;
    let d_jac = d_screen_map * rot.transpose();

    let (x, y, z) = (trace.cam_point.x, trace.cam_point.y, trace.cam_point.z);
    let (fx, fy) = (cam.fx, cam.fy);
    let (iz, iz2, iz3) = (1.0 / z, 1.0 / (z * z), 1.0 / (z * z * z));
    let mut d_p = Vec3::zeros();
    d_p.z += d_jac[(0, 0)] * (-fx * iz2);
    d_p.x += d_jac[(0, 2)] * (-fx * iz2);
    d_p.z += d_jac[(0, 2)] * (2.0 * fx * x * iz3);
    d_p.z += d_jac[(1, 1)] * (-fy * iz2);
    d_p.y += d_jac[(1, 2)] * (-fy * iz2);
    d_p.z += d_jac[(1, 2)] * (2.0 * fy * y * iz3);
    d_p.x += g.mean[0] * fx * iz;
    d_p.z += g.mean[0] * (-fx * x * iz2);
    d_p.y += g.mean[1] * fy * iz;
    d_p.z += g.mean[1] * (-fy * y * iz2);
    d_mean3 += rot.transpose() * d_p;

    let slice = SliceGrad { mean: d_mean3, cov: d_cov3, decay: d_decay, speed: Vec3::zeros() };
    (slice, d_sh, d_logit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Mat4;

    fn front_camera() -> Camera {
        Camera::new(64, 64, 100.0, 100.0, 32.0, 32.0, Mat4::identity(), 0.0).unwrap()
    }

    fn slice_at(point: Vec3, cov: Mat3, speed: Vec3) -> SlicedGaussian3D {
        SlicedGaussian3D { mean: point, cov, decay: 1.0, speed, lambda: 1.0, source_index: 0 }
    }

    #[test]
    fn on_axis_point_maps_to_principal_point() {
        let s = slice_at(Vec3::new(0.0, 0.0, 1.0), Mat3::identity() * 1e-4, Vec3::zeros());
        let sp = project(&s, &front_camera(), &[[0.0; SH_COEFFS]; 3], 2.0).unwrap();
        assert_eq!(sp.mean, [32.0, 32.0]);
        assert_eq!(sp.depth, 1.0);
    }

    #[test]
    fn isotropic_covariance_scales_with_focal() {
        let sigma = 0.01;
        let s = slice_at(Vec3::new(0.0, 0.0, 1.0), Mat3::identity() * sigma * sigma, Vec3::zeros());
        let (_, trace) =
            project_traced(&s, &front_camera(), &[[0.0; SH_COEFFS]; 3], 2.0).unwrap();
        let expect = (100.0 * sigma) * (100.0 * sigma) + COV_DILATION;
        assert!((trace.cov2[0] - expect).abs() < 1e-9);
        assert!((trace.cov2[2] - expect).abs() < 1e-9);
        assert!(trace.cov2[1].abs() < 1e-12);
    }

    #[test]
    fn speed_becomes_screen_flow() {
        let s = slice_at(Vec3::new(0.0, 0.0, 1.0), Mat3::identity() * 1e-4, Vec3::new(0.7, 0.0, 0.0));
        let sp = project(&s, &front_camera(), &[[0.0; SH_COEFFS]; 3], 2.0).unwrap();
        assert!((sp.flow[0] - 70.0).abs() < 1e-12);
        assert_eq!(sp.flow[1], 0.0);
    }

    #[test]
    fn culling_rules() {
        let cam = front_camera();
        let sh = [[0.0; SH_COEFFS]; 3];
        let cov = Mat3::identity() * 1e-4;
        let behind = slice_at(Vec3::new(0.0, 0.0, 0.1), cov, Vec3::zeros());
        assert_eq!(project(&behind, &cam, &sh, 2.0), Err(Culled::NearPlane));
        let off = slice_at(Vec3::new(5.0, 0.0, 1.0), cov, Vec3::zeros());
        assert_eq!(project(&off, &cam, &sh, 2.0), Err(Culled::OffScreen));
        let faint = slice_at(Vec3::new(0.0, 0.0, 1.0), cov, Vec3::zeros());
        assert_eq!(project(&faint, &cam, &sh, -8.0), Err(Culled::Transparent));
    }
}
