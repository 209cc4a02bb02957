//! 4D rotors.
//!
//! A rotor is an even-grade element of the geometric algebra over the
//! orthonormal basis `e0, e1, e2, e3` (the `x, y, z, t` axes):
//!
//! ```text
//! r = s + b01 e01 + b02 e02 + b12 e12 + b03 e03 + b13 e13 + b23 e23 + p e0123
//! ```
//!
//! `(s, b01, b02, b12)` carry the purely spatial rotation and reduce to a
//! quaternion when the remaining four coefficients vanish. `(b03, b13, b23, p)`
//! rotate space into time, which after slicing shows up as linear motion.
//!
//! A rotor is valid when `r r† = 1`, which splits into two scalar conditions:
//! unit Euclidean length of the eight coefficients and a vanishing grade-4
//! part `ε = p s − b01 b23 + b02 b13 − b03 b12`.

use std::fmt;

use thiserror::Error;

use crate::math::Mat4;

/// Below this `|ε|` the first normalization step is skipped.
pub const EPSILON_SKIP: f64 = 1e-12;
/// Tolerance used by [`Rotor4::to_matrix`] to reject unnormalized input.
pub const MATRIX_INPUT_TOL: f64 = 1e-6;
/// Tolerance the output of [`Rotor4::normalize`] is checked against.
pub const NORMALIZED_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RotorError {
    #[error("rotor has zero length")]
    ZeroRotor,
    #[error("rotor normalization produced a non-finite or invalid rotor")]
    NonFinite,
    #[error("rotor is not normalized (|l - 1| = {length_error:e}, |eps| = {epsilon:e})")]
    NotNormalized { length_error: f64, epsilon: f64 },
    #[error("quaternion is not unit length (|q| = {0})")]
    NotUnit(f64),
}

/// Eight rotor coefficients, stored in the order
/// `(s, b01, b02, b12, b03, b13, b23, p)`.
#[derive(Clone, Copy, PartialEq, Default)]
pub struct Rotor4 {
    pub s: f64,
    pub b01: f64,
    pub b02: f64,
    pub b12: f64,
    pub b03: f64,
    pub b13: f64,
    pub b23: f64,
    pub p: f64,
}

impl fmt::Debug for Rotor4 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Rotor4{:?}", self.to_array())
    }
}

impl Rotor4 {
    pub const IDENTITY: Rotor4 = Rotor4 {
        s: 1.0,
        b01: 0.0,
        b02: 0.0,
        b12: 0.0,
        b03: 0.0,
        b13: 0.0,
        b23: 0.0,
        p: 0.0,
    };

    #[allow(clippy::too_many_arguments)]
    pub const fn new(
        s: f64,
        b01: f64,
        b02: f64,
        b12: f64,
        b03: f64,
        b13: f64,
        b23: f64,
        p: f64,
    ) -> Self {
        Rotor4 { s, b01, b02, b12, b03, b13, b23, p }
    }

    pub const fn from_array(c: [f64; 8]) -> Self {
        Rotor4::new(c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7])
    }

    pub const fn to_array(&self) -> [f64; 8] {
        [self.s, self.b01, self.b02, self.b12, self.b03, self.b13, self.b23, self.p]
    }

    /// Embeds a unit quaternion `(w, x, y, z)` as a purely spatial rotor.
    ///
    /// Axis pairing: a rotation about x lives in the y–z plane (`e12`), about
    /// y in the z–x plane (`e02`) and about z in the x–y plane (`e01`). With the
    /// matrix closed form used here that gives `b12 = −x`, `b02 = y`,
    /// `b01 = −z`, so [`to_matrix`](Self::to_matrix) reproduces the usual
    /// quaternion rotation matrix in its spatial block.
    pub fn from_quaternion(w: f64, x: f64, y: f64, z: f64) -> Result<Self, RotorError> {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if !n.is_finite() || (n - 1.0).abs() > 1e-9 {
            return Err(RotorError::NotUnit(n));
        }
        Ok(Rotor4::new(w, -z, y, -x, 0.0, 0.0, 0.0, 0.0))
    }

    /// True when the four spatio-temporal coefficients are exactly zero.
    pub fn is_spatial(&self) -> bool {
        self.b03 == 0.0 && self.b13 == 0.0 && self.b23 == 0.0 && self.p == 0.0
    }

    pub fn norm_squared(&self) -> f64 {
        self.to_array().iter().map(|c| c * c).sum()
    }

    /// Grade-4 part of `r r†` (halved).
    pub fn epsilon(&self) -> f64 {
        self.p * self.s - self.b01 * self.b23 + self.b02 * self.b13 - self.b03 * self.b12
    }

    /// Gradient of [`epsilon`](Self::epsilon) with respect to the coefficients.
    ///
    /// It is linear in `r`: `∇ε = A r` with `A` a symmetric signed permutation
    /// that pairs `(s, p)`, `(b01, b23)`, `(b02, b13)` and `(b03, b12)`.
    pub fn epsilon_gradient(&self) -> Rotor4 {
        Rotor4::from_array(pair_swap(&self.to_array()))
    }

    /// Largest violation of the two validity conditions.
    pub fn validity_error(&self) -> (f64, f64) {
        ((self.norm_squared().sqrt() - 1.0).abs(), self.epsilon().abs())
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        let (dl, de) = self.validity_error();
        dl <= tol && de <= tol
    }

    /// Projects an arbitrary nonzero rotor onto the set of valid rotors.
    ///
    /// First `r += δ ∇ε` with the root `δ` of `ε (1 + δ²) + l² δ = 0` that
    /// vanishes with `ε`. Because `A² = I` the updated rotor has `ε = 0`
    /// exactly (up to rounding). The result is then divided by its length,
    /// which leaves `ε = 0` intact.
    pub fn normalize(&self) -> Result<Rotor4, RotorError> {
        let c = self.to_array();
        if c.iter().any(|v| !v.is_finite()) {
            return Err(RotorError::NonFinite);
        }
        let l2 = self.norm_squared();
        if l2 <= 1e-20 {
            return Err(RotorError::ZeroRotor);
        }
        let (delta, _) = correction(self.epsilon(), l2);
        let grad = pair_swap(&c);
        let mut out = [0.0; 8];
        for k in 0..8 {
            out[k] = c[k] + delta * grad[k];
        }
        let len = out.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(len.is_finite() && len > 0.0) {
            return Err(RotorError::NonFinite);
        }
        for v in &mut out {
            *v /= len;
        }
        let r = Rotor4::from_array(out);
        if !r.is_normalized(NORMALIZED_TOL) {
            return Err(RotorError::NonFinite);
        }
        Ok(r)
    }

    /// Vector–Jacobian product of [`normalize`](Self::normalize): maps the
    /// gradient with respect to the normalized rotor back to the raw one.
    pub fn normalize_vjp(&self, upstream: &[f64; 8]) -> [f64; 8] {
        let c = self.to_array();
        let l2 = self.norm_squared();
        if l2 <= 1e-20 {
            return [0.0; 8];
        }
        let eps = self.epsilon();
        let (delta, partials) = correction(eps, l2);
        let grad_eps = pair_swap(&c);
        let mut r1 = [0.0; 8];
        for k in 0..8 {
            r1[k] = c[k] + delta * grad_eps[k];
        }
        let len = r1.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut n = r1;
        for v in &mut n {
            *v /= len;
        }

        // r_n = r1 / |r1|
        let n_dot_g: f64 = n.iter().zip(upstream).map(|(a, b)| a * b).sum();
        let mut g1 = [0.0; 8];
        for k in 0..8 {
            g1[k] = (upstream[k] - n[k] * n_dot_g) / len;
        }

        // r1 = r + δ(ε, l²) A r
        let a_g1 = pair_swap(&g1);
        let mut out = [0.0; 8];
        for k in 0..8 {
            out[k] = g1[k] + delta * a_g1[k];
        }
        if let Some((d_eps, d_l2)) = partials {
            let coupling: f64 = g1.iter().zip(&grad_eps).map(|(a, b)| a * b).sum();
            for k in 0..8 {
                out[k] += coupling * (d_eps * grad_eps[k] + d_l2 * 2.0 * c[k]);
            }
        }
        out
    }

    /// The 4x4 rotation `u ↦ r u r†`, rejecting rotors that are not valid.
    ///
    /// For purely spatial rotors the time axis is returned as an exact
    /// identity row and column; the closed form would give `l² = 1 ± ulp`.
    pub fn to_matrix(&self) -> Result<Mat4, RotorError> {
        let (dl, de) = self.validity_error();
        if dl > MATRIX_INPUT_TOL || de > MATRIX_INPUT_TOL {
            return Err(RotorError::NotNormalized { length_error: dl, epsilon: de });
        }
        let mut m = self.to_matrix_unchecked();
        if self.is_spatial() {
            m[(3, 3)] = 1.0;
        }
        Ok(m)
    }

    /// Closed-form rotation matrix. Each entry is a quadratic form in the
    /// coefficients; the result is orthogonal only for valid rotors.
    pub fn to_matrix_unchecked(&self) -> Mat4 {
        let Rotor4 { s, b01, b02, b12, b03, b13, b23, p } = *self;
        let (s2, p2) = (s * s, p * p);
        let (b01s, b02s, b03s) = (b01 * b01, b02 * b02, b03 * b03);
        let (b12s, b13s, b23s) = (b12 * b12, b13 * b13, b23 * b23);

        let r00 = -b01s - b02s - b03s + b12s + b13s + b23s - p2 + s2;
        let r01 = 2.0 * (b01 * s - b02 * b12 - b03 * b13 + b23 * p);
        let r02 = 2.0 * (b01 * b12 + b02 * s - b03 * b23 - b13 * p);
        let r03 = 2.0 * (b01 * b13 + b02 * b23 + b03 * s + b12 * p);

        let r10 = 2.0 * (-b01 * s - b02 * b12 - b03 * b13 - b23 * p);
        let r11 = -b01s + b02s + b03s - b12s - b13s + b23s - p2 + s2;
        let r12 = 2.0 * (-b01 * b02 + b03 * p + b12 * s - b13 * b23);
        let r13 = 2.0 * (-b01 * b03 - b02 * p + b12 * b23 + b13 * s);

        let r20 = 2.0 * (b01 * b12 - b02 * s - b03 * b23 + b13 * p);
        let r21 = 2.0 * (-b01 * b02 - b03 * p - b12 * s - b13 * b23);
        let r22 = b01s - b02s + b03s - b12s + b13s - b23s - p2 + s2;
        let r23 = 2.0 * (b01 * p - b02 * b03 - b12 * b13 + b23 * s);

        let r30 = 2.0 * (b01 * b13 + b02 * b23 - b03 * s - b12 * p);
        let r31 = 2.0 * (-b01 * b03 + b02 * p + b12 * b23 - b13 * s);
        let r32 = 2.0 * (-b01 * p - b02 * b03 - b12 * b13 - b23 * s);
        let r33 = b01s + b02s - b03s + b12s - b13s - b23s - p2 + s2;

        Mat4::new(
            r00, r01, r02, r03, //
            r10, r11, r12, r13, //
            r20, r21, r22, r23, //
            r30, r31, r32, r33,
        )
    }

    /// Partial derivatives of every entry of
    /// [`to_matrix_unchecked`](Self::to_matrix_unchecked).
    pub fn to_matrix_jacobian(&self) -> RotorJacobian {
        let Rotor4 { s, b01, b02, b12, b03, b13, b23, p } = *self;
        // Columns: d/ds, d/db01, d/db02, d/db12, d/db03, d/db13, d/db23, d/dp
        let rows: [[f64; 8]; 16] = [
            // R00
            [s, -b01, -b02, b12, -b03, b13, b23, -p],
            // R01
            [b01, s, -b12, -b02, -b13, -b03, p, b23],
            // R02
            [b02, b12, s, b01, -b23, -p, -b03, -b13],
            // R03
            [b03, b13, b23, p, s, b01, b02, b12],
            // R10
            [-b01, -s, -b12, -b02, -b13, -b03, -p, -b23],
            // R11
            [s, -b01, b02, -b12, b03, -b13, b23, -p],
            // R12
            [b12, -b02, -b01, s, p, -b23, -b13, b03],
            // R13
            [b13, -b03, -p, b23, -b01, s, b12, -b02],
            // R20
            [-b02, b12, -s, b01, -b23, p, -b03, b13],
            // R21
            [-b12, -b02, -b01, -s, -p, -b23, -b13, -b03],
            // R22
            [s, b01, -b02, -b12, b03, b13, -b23, -p],
            // R23
            [b23, p, -b03, -b13, -b02, -b12, s, b01],
            // R30
            [-b03, b13, b23, -p, -s, b01, b02, -b12],
            // R31
            [-b13, -b03, p, b23, -b01, -s, b12, b02],
            // R32
            [-b23, -p, -b03, -b13, -b02, -b12, -s, -b01],
            // R33
            [s, b01, b02, b12, -b03, -b13, -b23, -p],
        ];
        let mut d = [[0.0; 8]; 16];
        for (out, row) in d.iter_mut().zip(rows.iter()) {
            for (o, v) in out.iter_mut().zip(row) {
                *o = 2.0 * v;
            }
        }
        RotorJacobian(d)
    }
}

/// `∂R[i][j] / ∂c[k]`, stored as 16 rows (`4 i + j`) of 8 coefficient partials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotorJacobian(pub [[f64; 8]; 16]);

impl RotorJacobian {
    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.0[4 * i + j][k]
    }

    /// Gradient with respect to the rotor given the gradient with respect to
    /// the matrix entries.
    pub fn vjp(&self, upstream: &Mat4) -> [f64; 8] {
        let mut out = [0.0; 8];
        for i in 0..4 {
            for j in 0..4 {
                let g = upstream[(i, j)];
                if g != 0.0 {
                    for (o, d) in out.iter_mut().zip(&self.0[4 * i + j]) {
                        *o += g * d;
                    }
                }
            }
        }
        out
    }
}

/// Applies the signed permutation `A` with `∇ε = A r`.
#[inline]
fn pair_swap(c: &[f64; 8]) -> [f64; 8] {
    [c[7], -c[6], c[5], -c[4], -c[3], c[2], -c[1], c[0]]
}

/// The step length `δ` and, when the step is taken, its partials
/// `(∂δ/∂ε, ∂δ/∂l²)`.
///
/// Uses `δ = −2ε / (l² + √(l⁴ − 4ε²))`, algebraically identical to
/// `(−l² + √(l⁴ − 4ε²)) / 2ε` but free of cancellation for small `ε`.
fn correction(eps: f64, l2: f64) -> (f64, Option<(f64, f64)>) {
    if eps.abs() < EPSILON_SKIP {
        return (0.0, None);
    }
    let q = (l2 * l2 - 4.0 * eps * eps).max(0.0).sqrt();
    let denom = l2 + q;
    let delta = -2.0 * eps / denom;
    let q_safe = q.max(1e-300);
    let d_denom_d_eps = -4.0 * eps / q_safe;
    let d_denom_d_l2 = 1.0 + l2 / q_safe;
    let d_eps = -2.0 / denom + 2.0 * eps / (denom * denom) * d_denom_d_eps;
    let d_l2 = 2.0 * eps / (denom * denom) * d_denom_d_l2;
    (delta, Some((d_eps, d_l2)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Full geometric product over the 16 basis blades of R(4,0), blades
    /// encoded as bitmasks over e0..e3.
    fn gp(a: &[f64; 16], b: &[f64; 16]) -> [f64; 16] {
        let mut out = [0.0; 16];
        for (i, &x) in a.iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            for (j, &y) in b.iter().enumerate() {
                if y == 0.0 {
                    continue;
                }
                // Count swaps needed to bring the product into canonical order.
                let mut swaps = 0;
                let mut k = i >> 1;
                while k != 0 {
                    swaps += (k & j).count_ones();
                    k >>= 1;
                }
                let sign = if swaps % 2 == 0 { 1.0 } else { -1.0 };
                out[i ^ j] += sign * x * y;
            }
        }
        out
    }

    fn as_multivector(r: &Rotor4) -> [f64; 16] {
        let mut m = [0.0; 16];
        m[0] = r.s;
        m[0b0011] = r.b01;
        m[0b0101] = r.b02;
        m[0b0110] = r.b12;
        m[0b1001] = r.b03;
        m[0b1010] = r.b13;
        m[0b1100] = r.b23;
        m[0b1111] = r.p;
        m
    }

    fn reverse(m: &[f64; 16]) -> [f64; 16] {
        let mut out = *m;
        for (blade, v) in out.iter_mut().enumerate() {
            let grade = (blade as u32).count_ones();
            if grade == 2 || grade == 3 {
                *v = -*v;
            }
        }
        out
    }

    fn random_rotor(rng: &mut ChaCha8Rng) -> Rotor4 {
        let mut c = [0.0; 8];
        for v in &mut c {
            *v = rng.random_range(-1.0..1.0);
        }
        Rotor4::from_array(c)
    }

    #[test]
    fn identity_is_fixed_point() {
        assert_eq!(Rotor4::IDENTITY.normalize().unwrap(), Rotor4::IDENTITY);
        let r = Rotor4::new(2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0).normalize().unwrap();
        assert_eq!(r, Rotor4::IDENTITY);
    }

    #[test]
    fn zero_rotor_is_rejected() {
        assert_eq!(Rotor4::default().normalize(), Err(RotorError::ZeroRotor));
    }

    #[test]
    fn general_rotor_satisfies_rr_dagger_one() {
        let r = Rotor4::new(0.9, 0.1, -0.2, 0.3, 0.05, -0.15, 0.25, 0.12).normalize().unwrap();
        let m = as_multivector(&r);
        let prod = gp(&m, &reverse(&m));
        assert!((prod[0] - 1.0).abs() < 1e-12);
        for v in &prod[1..] {
            assert!(v.abs() < 1e-12, "{:?}", prod);
        }
    }

    #[test]
    fn sandwich_product_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let r = random_rotor(&mut rng).normalize().unwrap();
            let m = r.to_matrix().unwrap();
            let rm = as_multivector(&r);
            let rd = reverse(&rm);
            for j in 0..4 {
                let mut u = [0.0; 16];
                u[1 << j] = 1.0;
                let image = gp(&gp(&rm, &u), &rd);
                for i in 0..4 {
                    assert!((image[1 << i] - m[(i, j)]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn quarter_turn_in_xy_plane() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let m = Rotor4::new(h, h, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0).to_matrix().unwrap();
        let expected = Mat4::new(
            0.0, 1.0, 0.0, 0.0, //
            -1.0, 0.0, 0.0, 0.0, //
            0.0, 0.0, 1.0, 0.0, //
            0.0, 0.0, 0.0, 1.0,
        );
        assert!((m - expected).abs().max() < 1e-15);
    }

    #[test]
    fn xt_rotor_touches_only_x_and_t() {
        let half = 15f64.to_radians();
        let r = Rotor4::new(half.cos(), 0.0, 0.0, 0.0, half.sin(), 0.0, 0.0, 0.0);
        let m = r.to_matrix().unwrap();
        let (c, s) = (30f64.to_radians().cos(), 30f64.to_radians().sin());
        assert!((m[(0, 0)] - c).abs() < 1e-15 && (m[(3, 3)] - c).abs() < 1e-15);
        assert!((m[(0, 3)] - s).abs() < 1e-15 && (m[(3, 0)] + s).abs() < 1e-15);
        for i in 1..3 {
            for j in 0..4 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((m[(i, j)] - expect).abs() < 1e-15);
                assert!((m[(j, i)] - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn unnormalized_matrix_request_fails() {
        let r = Rotor4::new(1.0, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        assert!(matches!(r.to_matrix(), Err(RotorError::NotNormalized { .. })));
    }

    #[test]
    fn jacobian_spot_values() {
        let j = Rotor4::IDENTITY.to_matrix_jacobian();
        assert_eq!(j.get(0, 0, 0), 2.0);
        assert_eq!(j.get(0, 0, 1), 0.0);
        let r = Rotor4::new(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0);
        assert_eq!(r.to_matrix_jacobian().get(0, 0, 6), 2.0);
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = 1e-6;
        for _ in 0..100 {
            let r = random_rotor(&mut rng).normalize().unwrap();
            let jac = r.to_matrix_jacobian();
            for k in 0..8 {
                let mut plus = r.to_array();
                let mut minus = r.to_array();
                plus[k] += h;
                minus[k] -= h;
                let d = (Rotor4::from_array(plus).to_matrix_unchecked()
                    - Rotor4::from_array(minus).to_matrix_unchecked())
                    / (2.0 * h);
                for i in 0..4 {
                    for j in 0..4 {
                        let a = jac.get(i, j, k);
                        let n = d[(i, j)];
                        let scale = a.abs().max(n.abs()).max(1e-3);
                        assert!((a - n).abs() / scale <= 1e-5, "R{i}{j}/c{k}: {a} vs {n}");
                    }
                }
            }
        }
    }

    #[test]
    fn normalize_vjp_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = 1e-6;
        for _ in 0..50 {
            let r = random_rotor(&mut rng);
            let w: [f64; 8] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            let f = |c: [f64; 8]| -> f64 {
                let n = Rotor4::from_array(c).normalize().unwrap().to_array();
                n.iter().zip(&w).map(|(a, b)| a * b).sum()
            };
            let analytic = r.normalize_vjp(&w);
            for k in 0..8 {
                let mut plus = r.to_array();
                let mut minus = r.to_array();
                plus[k] += h;
                minus[k] -= h;
                let numeric = (f(plus) - f(minus)) / (2.0 * h);
                assert!((analytic[k] - numeric).abs() < 1e-7, "{k}: {} vs {numeric}", analytic[k]);
            }
        }
    }

    #[test]
    fn quaternion_embedding_matches_rotation_matrix() {
        let half = std::f64::consts::FRAC_PI_4;
        // 90 degrees about z.
        let r = Rotor4::from_quaternion(half.cos(), 0.0, 0.0, half.sin()).unwrap();
        assert!(r.s != 0.0 && r.b01 != 0.0);
        assert_eq!((r.b02, r.b12), (0.0, 0.0));
        let m = r.to_matrix().unwrap();
        let expected = [[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((m[(i, j)] - expected[i][j]).abs() < 1e-15);
            }
        }
        // 180 degrees about x.
        let m = Rotor4::from_quaternion(0.0, 1.0, 0.0, 0.0).unwrap().to_matrix().unwrap();
        let d = [1.0, -1.0, -1.0, 1.0];
        for i in 0..4 {
            for j in 0..4 {
                let e = if i == j { d[i] } else { 0.0 };
                assert!((m[(i, j)] - e).abs() < 1e-15);
            }
        }
        assert!(Rotor4::from_quaternion(1.0, 1.0, 0.0, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent_and_orthogonal(c in proptest::array::uniform8(-1.0f64..1.0)) {
            prop_assume!(c.iter().map(|v| v * v).sum::<f64>() > 1e-6);
            let r = Rotor4::from_array(c).normalize().unwrap();
            let (dl, de) = r.validity_error();
            prop_assert!(dl <= 1e-9 && de <= 1e-9);
            let again = r.normalize().unwrap();
            for (a, b) in again.to_array().iter().zip(r.to_array()) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
            let m = r.to_matrix().unwrap();
            prop_assert!((m * m.transpose() - Mat4::identity()).abs().max() <= 1e-9);
            prop_assert!((m.determinant() - 1.0).abs() <= 1e-9);
        }
    }
}
