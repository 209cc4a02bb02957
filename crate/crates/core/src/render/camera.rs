use thiserror::Error;

use crate::math::{Mat3, Mat4, Vec3};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CameraError {
    #[error("focal lengths must be positive (fx = {0}, fy = {1})")]
    BadFocal(f64, f64),
    #[error("image size must be nonzero")]
    EmptyImage,
    #[error("rotation block is not orthonormal (max error {0:e})")]
    NotRigid(f64),
}

/// Pinhole camera. Camera space is x right, y down, z forward; pixel `(i, j)`
/// has its center at `(i + 0.5, j + 0.5)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    world_to_camera: Mat4,
    /// Scene time of the view.
    pub time: f64,
    /// Kept alongside the pose so a camera-to-world matrix read from disk is
    /// written back unchanged.
    center: Vec3,
}

/// OpenGL-style camera axes (y up, looking down −z) to the internal ones.
fn gl_flip() -> Mat4 {
    Mat4::from_diagonal(&nalgebra::Vector4::new(1.0, -1.0, -1.0, 1.0))
}

fn rigid_error(m: &Mat4) -> f64 {
    let r: Mat3 = m.fixed_view::<3, 3>(0, 0).into_owned();
    (r * r.transpose() - Mat3::identity()).abs().max()
}

impl Camera {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        width: usize,
        height: usize,
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        world_to_camera: Mat4,
        time: f64,
    ) -> Result<Self, CameraError> {
        if width == 0 || height == 0 {
            return Err(CameraError::EmptyImage);
        }
        if !(fx > 0.0 && fy > 0.0) {
            return Err(CameraError::BadFocal(fx, fy));
        }
        let err = rigid_error(&world_to_camera);
        if !(err <= 1e-6) {
            return Err(CameraError::NotRigid(err));
        }
        let center = -(world_to_camera.fixed_view::<3, 3>(0, 0).transpose() * world_to_camera.fixed_view::<3, 1>(0, 3));
        Ok(Camera { width, height, fx, fy, cx, cy, world_to_camera, time, center })
    }

    /// Builds a camera from an OpenGL-convention camera-to-world pose.
    #[allow(clippy::too_many_arguments)]
    pub fn from_gl_camera_to_world(
        camera_to_world: &Mat4,
        width: usize,
        height: usize,
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        time: f64,
    ) -> Result<Self, CameraError> {
        let err = rigid_error(camera_to_world);
        if !(err <= 1e-6) {
            return Err(CameraError::NotRigid(err));
        }
        let c2w = camera_to_world * gl_flip();
        let mut cam = Camera::new(width, height, fx, fy, cx, cy, rigid_inverse(&c2w), time)?;
        cam.center = c2w.fixed_view::<3, 1>(0, 3).into_owned();
        Ok(cam)
    }

    /// Inverse of [`from_gl_camera_to_world`](Self::from_gl_camera_to_world).
    pub fn gl_camera_to_world(&self) -> Mat4 {
        let mut c2w = rigid_inverse(&self.world_to_camera);
        c2w.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.center);
        c2w * gl_flip()
    }

    /// Camera at `eye` looking at `target`, with `up` roughly toward the top
    /// of the image and a horizontal field of view `fov_x` in radians.
    pub fn look_at(
        eye: Vec3,
        target: Vec3,
        up: Vec3,
        width: usize,
        height: usize,
        fov_x: f64,
        time: f64,
    ) -> Result<Self, CameraError> {
        let forward = (target - eye).normalize();
        let right = forward.cross(&up).normalize();
        let down = forward.cross(&right);
        let rot = Mat3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let t = -(rot * eye);
        let mut w2c = Mat4::identity();
        w2c.fixed_view_mut::<3, 3>(0, 0).copy_from(&rot);
        w2c.fixed_view_mut::<3, 1>(0, 3).copy_from(&t);
        let f = 0.5 * width as f64 / (0.5 * fov_x).tan();
        Camera::new(width, height, f, f, 0.5 * width as f64, 0.5 * height as f64, w2c, time)
    }

    pub fn world_to_camera(&self) -> &Mat4 {
        &self.world_to_camera
    }

    pub fn rotation(&self) -> Mat3 {
        self.world_to_camera.fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn translation(&self) -> Vec3 {
        self.world_to_camera.fixed_view::<3, 1>(0, 3).into_owned()
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vec3 {
        self.center
    }

    pub fn with_time(&self, time: f64) -> Camera {
        Camera { time, ..self.clone() }
    }
}

pub(crate) fn rigid_inverse(m: &Mat4) -> Mat4 {
    let r: Mat3 = m.fixed_view::<3, 3>(0, 0).into_owned();
    let t: Vec3 = m.fixed_view::<3, 1>(0, 3).into_owned();
    let rt = r.transpose();
    let mut out = Mat4::identity();
    out.fixed_view_mut::<3, 3>(0, 0).copy_from(&rt);
    out.fixed_view_mut::<3, 1>(0, 3).copy_from(&(-(rt * t)));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn look_at_puts_target_on_axis() {
        let cam = Camera::look_at(
            Vec3::new(0.0, -4.0, 1.0),
            Vec3::zeros(),
            Vec3::z(),
            64,
            48,
            1.0,
            0.0,
        )
        .unwrap();
        let p = cam.rotation() * Vec3::zeros() + cam.translation();
        assert!(p.x.abs() < 1e-12 && p.y.abs() < 1e-12 && p.z > 0.0);
        assert!((cam.center() - Vec3::new(0.0, -4.0, 1.0)).norm() < 1e-12);
        // World up projects toward the top of the image (negative y).
        let up = cam.rotation() * Vec3::z();
        assert!(up.y < 0.0);
    }

    #[test]
    fn gl_pose_round_trip() {
        let cam = Camera::look_at(
            Vec3::new(3.0, 1.0, 2.0),
            Vec3::new(0.1, 0.0, 0.0),
            Vec3::z(),
            32,
            32,
            0.8,
            0.25,
        )
        .unwrap();
        let c2w = cam.gl_camera_to_world();
        let back =
            Camera::from_gl_camera_to_world(&c2w, 32, 32, cam.fx, cam.fy, cam.cx, cam.cy, 0.25)
                .unwrap();
        assert!((back.world_to_camera() - cam.world_to_camera()).abs().max() < 1e-12);
        // GL cameras look down their local -z axis.
        let forward = -c2w.fixed_view::<3, 1>(0, 2).into_owned();
        let to_target = (Vec3::new(0.1, 0.0, 0.0) - cam.center()).normalize();
        assert!((forward - to_target).norm() < 1e-12);
    }

    #[test]
    fn rejects_bad_intrinsics() {
        assert!(Camera::new(4, 4, 0.0, 1.0, 2.0, 2.0, Mat4::identity(), 0.0).is_err());
        let mut skew = Mat4::identity();
        skew[(0, 1)] = 0.1;
        assert!(matches!(
            Camera::new(4, 4, 1.0, 1.0, 2.0, 2.0, skew, 0.0),
            Err(CameraError::NotRigid(_))
        ));
    }
}
