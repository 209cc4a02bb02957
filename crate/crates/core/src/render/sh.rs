//! Real spherical harmonics up to degree 3 for view-dependent color.
//!
//! Basis order and signs follow the common Gaussian-splatting convention, so
//! coefficients are interchangeable with other splatting tools.

use crate::gaussian::SH_COEFFS;
use crate::math::Vec3;

pub const SH_C0: f64 = 0.282_094_791_773_878_14;
pub const SH_C1: f64 = 0.488_602_511_902_919_9;
const SH_C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];
const SH_C3: [f64; 7] = [
    -0.590_043_589_926_643_5,
    2.890_611_442_640_554,
    -0.457_045_799_464_465_8,
    0.373_176_332_590_115_4,
    -0.457_045_799_464_465_8,
    1.445_305_721_320_277,
    -0.590_043_589_926_643_5,
];

/// Basis values at a unit direction.
pub fn sh_basis(dir: &Vec3) -> [f64; SH_COEFFS] {
    let (x, y, z) = (dir.x, dir.y, dir.z);
    let (xx, yy, zz) = (x * x, y * y, z * z);
    [
        SH_C0,
        -SH_C1 * y,
        SH_C1 * z,
        -SH_C1 * x,
        SH_C2[0] * x * y,
        SH_C2[1] * y * z,
        SH_C2[2] * (2.0 * zz - xx - yy),
        SH_C2[3] * x * z,
        SH_C2[4] * (xx - yy),
        SH_C3[0] * y * (3.0 * xx - yy),
        SH_C3[1] * x * y * z,
        SH_C3[2] * y * (4.0 * zz - xx - yy),
        SH_C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy),
        SH_C3[4] * x * (4.0 * zz - xx - yy),
        SH_C3[5] * z * (xx - yy),
        SH_C3[6] * x * (xx - 3.0 * yy),
    ]
}

/// Partials of each basis polynomial with respect to `(x, y, z)`, treating the
/// components as independent (the unit-length constraint is applied by the
/// caller).
pub fn sh_basis_gradient(dir: &Vec3) -> [[f64; 3]; SH_COEFFS] {
    let (x, y, z) = (dir.x, dir.y, dir.z);
    let (xx, yy, zz) = (x * x, y * y, z * z);
    let scale = |c: f64, g: [f64; 3]| [c * g[0], c * g[1], c * g[2]];
    [
        [0.0; 3],
        [0.0, -SH_C1, 0.0],
        [0.0, 0.0, SH_C1],
        [-SH_C1, 0.0, 0.0],
        scale(SH_C2[0], [y, x, 0.0]),
        scale(SH_C2[1], [0.0, z, y]),
        scale(SH_C2[2], [-2.0 * x, -2.0 * y, 4.0 * z]),
        scale(SH_C2[3], [z, 0.0, x]),
        scale(SH_C2[4], [2.0 * x, -2.0 * y, 0.0]),
        scale(SH_C3[0], [6.0 * x * y, 3.0 * xx - 3.0 * yy, 0.0]),
        scale(SH_C3[1], [y * z, x * z, x * y]),
        scale(SH_C3[2], [-2.0 * x * y, 4.0 * zz - xx - 3.0 * yy, 8.0 * y * z]),
        scale(SH_C3[3], [-6.0 * x * z, -6.0 * y * z, 6.0 * zz - 3.0 * xx - 3.0 * yy]),
        scale(SH_C3[4], [4.0 * zz - 3.0 * xx - yy, -2.0 * x * y, 8.0 * x * z]),
        scale(SH_C3[5], [2.0 * x * z, -2.0 * y * z, xx - yy]),
        scale(SH_C3[6], [3.0 * xx - 3.0 * yy, -6.0 * x * y, 0.0]),
    ]
}

/// RGB for a view direction: basis expansion plus 0.5, clamped below at 0.
pub fn eval_sh(sh: &[[f64; SH_COEFFS]; 3], dir: &Vec3) -> [f64; 3] {
    let basis = sh_basis(dir);
    std::array::from_fn(|c| {
        let raw: f64 = sh[c].iter().zip(&basis).map(|(a, b)| a * b).sum();
        (raw + 0.5).max(0.0)
    })
}

/// Converts an RGB color to the DC coefficient that reproduces it.
pub fn rgb_to_dc(rgb: f64) -> f64 {
    (rgb - 0.5) / SH_C0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dc_only_is_view_independent() {
        let mut sh = [[0.0; SH_COEFFS]; 3];
        sh[0][0] = 0.3;
        sh[1][0] = -0.2;
        for dir in [Vec3::x(), -Vec3::y(), Vec3::new(1.0, 2.0, -3.0).normalize()] {
            let c = eval_sh(&sh, &dir);
            assert!((c[0] - (0.3 * 0.282_094_8 + 0.5)).abs() < 1e-7);
            assert!((c[1] - (-0.2 * 0.282_094_8 + 0.5)).abs() < 1e-7);
            assert_eq!(c[2], 0.5);
        }
        assert_eq!(eval_sh(&[[0.0; SH_COEFFS]; 3], &Vec3::z()), [0.5; 3]);
    }

    #[test]
    fn degree_one_along_z() {
        let mut sh = [[0.0; SH_COEFFS]; 3];
        sh[0][2] = 0.2;
        let up = eval_sh(&sh, &Vec3::z());
        let down = eval_sh(&sh, &-Vec3::z());
        assert!(((up[0] - down[0]) - 2.0 * 0.2 * 0.488_602_5).abs() < 1e-7);
    }

    #[test]
    fn basis_gradient_matches_differences() {
        let d = Vec3::new(0.3, -0.5, 0.8);
        let g = sh_basis_gradient(&d);
        let h = 1e-6;
        for axis in 0..3 {
            let mut p = d;
            let mut m = d;
            p[axis] += h;
            m[axis] -= h;
            let bp = sh_basis(&p);
            let bm = sh_basis(&m);
            for k in 0..SH_COEFFS {
                let numeric = (bp[k] - bm[k]) / (2.0 * h);
                assert!((numeric - g[k][axis]).abs() < 1e-8, "basis {k} axis {axis}");
            }
        }
    }

    #[test]
    fn clamps_negative_colors() {
        let mut sh = [[0.0; SH_COEFFS]; 3];
        sh[0][0] = -10.0;
        assert_eq!(eval_sh(&sh, &Vec3::x())[0], 0.0);
    }
}
