//! Structural similarity with an 11x11 Gaussian window.
//!
//! Near the border the window is truncated to the image and renormalized, so
//! every local statistic is a proper weighted average. Constant images
//! therefore reproduce the closed-form SSIM exactly at every pixel.

use rayon::prelude::*;

use crate::render::Image;

pub const WINDOW: usize = 11;
pub const WINDOW_SIGMA: f64 = 1.5;
pub const C1: f64 = 1e-4;
pub const C2: f64 = 9e-4;

fn kernel() -> [f64; WINDOW] {
    let half = (WINDOW / 2) as f64;
    let mut k = [0.0; WINDOW];
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - half;
        *v = (-d * d / (2.0 * WINDOW_SIGMA * WINDOW_SIGMA)).exp();
    }
    k
}

/// Separable window along one axis of length `n`, with per-output weights
/// renormalized over the in-range taps.
struct Axis {
    n: usize,
    k: [f64; WINDOW],
    inv_norm: Vec<f64>,
}

impl Axis {
    fn new(n: usize) -> Self {
        let k = kernel();
        let half = WINDOW as isize / 2;
        let inv_norm = (0..n as isize)
            .map(|i| {
                let s: f64 = (-half..=half)
                    .filter(|d| (0..n as isize).contains(&(i + d)))
                    .map(|d| k[(d + half) as usize])
                    .sum();
                1.0 / s
            })
            .collect();
        Axis { n, k, inv_norm }
    }

    /// `out[i] = Σ_j K[i][j] in[j]` along a strided line.
    fn apply(&self, input: &[f64], stride: usize, out: &mut [f64]) {
        let half = WINDOW as isize / 2;
        for i in 0..self.n as isize {
            let mut acc = 0.0;
            for d in -half..=half {
                let j = i + d;
                if j >= 0 && j < self.n as isize {
                    acc += self.k[(d + half) as usize] * input[j as usize * stride];
                }
            }
            out[i as usize * stride] = acc * self.inv_norm[i as usize];
        }
    }

    /// `out[j] = Σ_i K[i][j] in[i]`.
    fn apply_transpose(&self, input: &[f64], stride: usize, out: &mut [f64]) {
        let half = WINDOW as isize / 2;
        for j in 0..self.n as isize {
            let mut acc = 0.0;
            for d in -half..=half {
                let i = j - d;
                if i >= 0 && i < self.n as isize {
                    acc += self.k[(d + half) as usize]
                        * input[i as usize * stride]
                        * self.inv_norm[i as usize];
                }
            }
            out[j as usize * stride] = acc;
        }
    }
}

struct Filter {
    w: usize,
    h: usize,
    x: Axis,
    y: Axis,
}

impl Filter {
    fn new(w: usize, h: usize) -> Self {
        Filter { w, h, x: Axis::new(w), y: Axis::new(h) }
    }

    fn run(&self, plane: &[f64], transpose: bool) -> Vec<f64> {
        let (w, h) = (self.w, self.h);
        let mut tmp = vec![0.0; w * h];
        let mut out = vec![0.0; w * h];
        for row in 0..h {
            let (src, dst) = (&plane[row * w..], &mut tmp[row * w..]);
            if transpose {
                self.x.apply_transpose(src, 1, dst)
            } else {
                self.x.apply(src, 1, dst)
            }
        }
        for col in 0..w {
            let (src, dst) = (&tmp[col..], &mut out[col..]);
            if transpose {
                self.y.apply_transpose(src, w, dst)
            } else {
                self.y.apply(src, w, dst)
            }
        }
        out
    }
}

fn planes(img: &Image) -> Vec<Vec<f64>> {
    (0..img.channels)
        .map(|c| img.data.iter().skip(c).step_by(img.channels).copied().collect())
        .collect()
}

struct ChannelResult {
    sum: f64,
    /// d(Σ SSIM over the channel) / d(rendered plane).
    grad: Option<Vec<f64>>,
}

fn channel(f: &Filter, x: &[f64], y: &[f64], want_grad: bool) -> ChannelResult {
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    let mx = f.run(x, false);
    let my = f.run(y, false);
    let exx = f.run(&xx, false);
    let eyy = f.run(&yy, false);
    let exy = f.run(&xy, false);

    let n = x.len();
    let mut sum = 0.0;
    let (mut ga, mut gb, mut gc) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for i in 0..n {
        let (ux, uy) = (mx[i], my[i]);
        let sxx = exx[i] - ux * ux;
        let syy = eyy[i] - uy * uy;
        let sxy = exy[i] - ux * uy;
        let n1 = 2.0 * ux * uy + C1;
        let n2 = 2.0 * sxy + C2;
        let d1 = ux * ux + uy * uy + C1;
        let d2 = sxx + syy + C2;
        let s = n1 * n2 / (d1 * d2);
        sum += s;
        if want_grad {
            let ds_dux = 2.0 * uy * n2 / (d1 * d2) - s * 2.0 * ux / d1;
            let ds_dsxx = -s / d2;
            let ds_dsxy = 2.0 * n1 / (d1 * d2);
            // sxx = E[x²] − ux², sxy = E[xy] − ux uy
            ga[i] = ds_dux - 2.0 * ux * ds_dsxx - uy * ds_dsxy;
            gb[i] = ds_dsxx;
            gc[i] = ds_dsxy;
        }
    }
    let grad = want_grad.then(|| {
        let ta = f.run(&ga, true);
        let tb = f.run(&gb, true);
        let tc = f.run(&gc, true);
        (0..n).map(|p| ta[p] + 2.0 * x[p] * tb[p] + y[p] * tc[p]).collect()
    });
    ChannelResult { sum, grad }
}

/// Mean SSIM over pixels and channels, and optionally its gradient with
/// respect to `x` (interleaved like the image). Shapes must already match.
pub(crate) fn mean_ssim(x: &Image, y: &Image, want_grad: bool) -> (f64, Option<Vec<f64>>) {
    let f = Filter::new(x.width, x.height);
    let (px, py) = (planes(x), planes(y));
    let results: Vec<ChannelResult> = (0..x.channels)
        .into_par_iter()
        .map(|c| channel(&f, &px[c], &py[c], want_grad))
        .collect();
    let count = x.data.len() as f64;
    let mean = results.iter().map(|r| r.sum).sum::<f64>() / count;
    let grad = want_grad.then(|| {
        let mut g = vec![0.0; x.data.len()];
        for (c, r) in results.iter().enumerate() {
            for (p, v) in r.grad.as_ref().unwrap().iter().enumerate() {
                g[p * x.channels + c] = v / count;
            }
        }
        g
    });
    (mean, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transpose_is_adjoint() {
        let f = Filter::new(13, 7);
        let a: Vec<f64> = (0..91).map(|i| ((i * 17) % 23) as f64 / 23.0).collect();
        let b: Vec<f64> = (0..91).map(|i| ((i * 5) % 11) as f64 / 11.0 - 0.5).collect();
        let fa = f.run(&a, false);
        let ftb = f.run(&b, true);
        let lhs: f64 = fa.iter().zip(&b).map(|(p, q)| p * q).sum();
        let rhs: f64 = a.iter().zip(&ftb).map(|(p, q)| p * q).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn filter_preserves_constants() {
        let f = Filter::new(5, 20);
        let out = f.run(&[0.7; 100], false);
        assert!(out.iter().all(|v| (v - 0.7).abs() < 1e-15));
    }
}
