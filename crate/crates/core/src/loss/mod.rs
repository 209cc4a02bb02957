//! Training objective: photometric L1 and SSIM, opacity entropy, and 4D
//! velocity consistency between neighboring Gaussians.
//!
//! Every function returns the loss together with its gradient, so callers can
//! weight and superpose terms without re-evaluating anything.

mod knn;
mod ssim;

pub use knn::{build_knn4d, scene_scales, Knn4DIndex};
pub use ssim::{C1 as SSIM_C1, C2 as SSIM_C2, WINDOW as SSIM_WINDOW, WINDOW_SIGMA as SSIM_SIGMA};

use thiserror::Error;

use crate::gaussian::{GaussianGrad, GaussianStore};
use crate::math::Vec3;
use crate::render::Image;

/// Opacities are clamped into `[OPACITY_CLAMP, 1 − OPACITY_CLAMP]` before logs.
pub const OPACITY_CLAMP: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("image shapes differ: {a:?} vs {b:?}")]
    ShapeMismatch { a: (usize, usize, usize), b: (usize, usize, usize) },
    #[error("need more than {k} points for {k} neighbors, got {points}")]
    TooFewPoints { points: usize, k: usize },
    #[error("neighbor index built for {built} Gaussians, store has {now}")]
    StaleIndex { built: usize, now: usize },
    #[error("invalid loss weights: {0}")]
    InvalidWeights(String),
}

/// Mixing weights of the total objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    /// Share of SSIM in the photometric term; L1 gets `1 − ssim`.
    pub ssim: f64,
    pub entropy: f64,
    pub consistency: f64,
    /// Neighbors per Gaussian for the consistency term.
    pub k: usize,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { ssim: 0.2, entropy: 0.01, consistency: 0.05, k: 8 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), LossError> {
        if !(0.0..=1.0).contains(&self.ssim) {
            return Err(LossError::InvalidWeights(format!("ssim weight {} not in [0, 1]", self.ssim)));
        }
        if !(self.entropy >= 0.0 && self.consistency >= 0.0) {
            return Err(LossError::InvalidWeights("entropy and consistency must be >= 0".into()));
        }
        if self.k == 0 {
            return Err(LossError::InvalidWeights("k must be at least 1".into()));
        }
        Ok(())
    }

    /// Weighted sum of already evaluated terms.
    pub fn combine(&self, l1: f64, ssim: f64, entropy: f64, consistency: f64) -> f64 {
        (1.0 - self.ssim) * l1 + self.ssim * ssim + self.entropy * entropy + self.consistency * consistency
    }
}

fn check_shapes(a: &Image, b: &Image) -> Result<(), LossError> {
    if a.shape() != b.shape() {
        return Err(LossError::ShapeMismatch { a: a.shape(), b: b.shape() });
    }
    Ok(())
}

/// Mean absolute difference and its gradient with respect to `rendered`.
pub fn l1_loss(rendered: &Image, target: &Image) -> Result<(f64, Vec<f64>), LossError> {
    check_shapes(rendered, target)?;
    let n = rendered.data.len() as f64;
    let mut sum = 0.0;
    let grad = rendered
        .data
        .iter()
        .zip(&target.data)
        .map(|(a, b)| {
            let d = a - b;
            sum += d.abs();
            if d > 0.0 {
                1.0 / n
            } else if d < 0.0 {
                -1.0 / n
            } else {
                0.0
            }
        })
        .collect();
    Ok((sum / n, grad))
}

/// `1 − mean SSIM` and its gradient with respect to `rendered`.
pub fn ssim_loss(rendered: &Image, target: &Image) -> Result<(f64, Vec<f64>), LossError> {
    check_shapes(rendered, target)?;
    let (mean, grad) = ssim::mean_ssim(rendered, target, true);
    let grad = grad.unwrap().into_iter().map(|g| -g).collect();
    Ok((1.0 - mean, grad))
}

/// Mean SSIM without a gradient, for evaluation.
pub fn ssim(a: &Image, b: &Image) -> Result<f64, LossError> {
    check_shapes(a, b)?;
    Ok(ssim::mean_ssim(a, b, false).0)
}

/// `(1/N) Σ −o log o` and its gradient with respect to each opacity.
pub fn entropy_loss(opacities: &[f64]) -> (f64, Vec<f64>) {
    if opacities.is_empty() {
        return (0.0, Vec::new());
    }
    let n = opacities.len() as f64;
    let mut sum = 0.0;
    let grad = opacities
        .iter()
        .map(|&o| {
            let c = o.clamp(OPACITY_CLAMP, 1.0 - OPACITY_CLAMP);
            sum -= c * c.ln();
            if c == o {
                -(c.ln() + 1.0) / n
            } else {
                0.0
            }
        })
        .collect();
    (sum / n, grad)
}

/// Entropy term evaluated on the store, with the gradient on opacity logits.
pub fn entropy_loss_store(store: &GaussianStore) -> (f64, Vec<GaussianGrad>) {
    let opacities: Vec<f64> = store.gaussians().iter().map(|g| g.opacity()).collect();
    let (value, d_o) = entropy_loss(&opacities);
    let grads = opacities
        .iter()
        .zip(&d_o)
        .map(|(&o, &d)| GaussianGrad { opacity_logit: d * o * (1.0 - o), ..GaussianGrad::default() })
        .collect();
    (value, grads)
}

/// Neighbor index over the store's 4D means, normalized by their extents.
pub fn build_knn4d_store(store: &GaussianStore, k: usize) -> Result<Knn4DIndex, LossError> {
    let points: Vec<[f64; 4]> = store.gaussians().iter().map(|g| g.mean).collect();
    build_knn4d(&points, k, scene_scales(&points))
}

/// Mean over Gaussians of `‖sᵢ − mean of neighbor speeds‖₁` where
/// `s = V / W`, with the gradient on every Gaussian's rotor and log-scales.
/// Neighbor selection is treated as constant.
pub fn consistency_loss(
    store: &GaussianStore,
    index: &Knn4DIndex,
) -> Result<(f64, Vec<GaussianGrad>), LossError> {
    if index.len() != store.len() {
        return Err(LossError::StaleIndex { built: index.len(), now: store.len() });
    }
    let n = store.len();
    let speeds: Vec<Option<Vec3>> = store.gaussians().iter().map(|g| g.speed().ok()).collect();
    let speed = |i: usize| speeds[i].unwrap_or_else(Vec3::zeros);
    let k = index.k() as f64;
    let mut total = 0.0;
    let mut d_speed = vec![Vec3::zeros(); n];
    for i in 0..n {
        let nb = index.neighbors(i);
        let mean = nb.iter().fold(Vec3::zeros(), |acc, &j| acc + speed(j as usize)) / k;
        let r = speed(i) - mean;
        total += r.abs().sum();
        let sign = r.map(|v| if v > 0.0 { 1.0 } else if v < 0.0 { -1.0 } else { 0.0 }) / n as f64;
        d_speed[i] += sign;
        for &j in nb {
            d_speed[j as usize] -= sign / k;
        }
    }
    let grads = store
        .gaussians()
        .iter()
        .zip(&d_speed)
        .zip(&speeds)
        .map(|((g, d), s)| if s.is_some() { g.speed_vjp(d) } else { GaussianGrad::default() })
        .collect();
    Ok((total / n as f64, grads))
}

/// All four terms for one rendered view.
#[derive(Debug, Clone)]
pub struct TotalLoss {
    pub value: f64,
    pub l1: f64,
    pub ssim: f64,
    pub entropy: f64,
    pub consistency: f64,
    /// Gradient of `value` with respect to the rendered image.
    pub d_image: Image,
    /// Gradient of the entropy and consistency parts per Gaussian.
    pub d_store: Vec<GaussianGrad>,
}

/// The weighted objective for one view. `index` may be `None` when the
/// consistency weight is zero.
pub fn total_loss(
    rendered: &Image,
    target: &Image,
    store: &GaussianStore,
    index: Option<&Knn4DIndex>,
    weights: &LossWeights,
) -> Result<TotalLoss, LossError> {
    weights.validate()?;
    let (l1, g_l1) = l1_loss(rendered, target)?;
    let (ssim, g_ssim) = ssim_loss(rendered, target)?;
    let d_image: Vec<f64> = g_l1
        .iter()
        .zip(&g_ssim)
        .map(|(a, b)| (1.0 - weights.ssim) * a + weights.ssim * b)
        .collect();

    let mut d_store = vec![GaussianGrad::default(); store.len()];
    let (entropy, g_ent) = entropy_loss_store(store);
    for (d, g) in d_store.iter_mut().zip(&g_ent) {
        d.add_scaled(g, weights.entropy);
    }
    let mut consistency = 0.0;
    if weights.consistency > 0.0 {
        let index = match index {
            Some(i) => i,
            None => return Err(LossError::StaleIndex { built: 0, now: store.len() }),
        };
        let (c, g_c) = consistency_loss(store, index)?;
        consistency = c;
        for (d, g) in d_store.iter_mut().zip(&g_c) {
            d.add_scaled(g, weights.consistency);
        }
    }
    Ok(TotalLoss {
        value: weights.combine(l1, ssim, entropy, consistency),
        l1,
        ssim,
        entropy,
        consistency,
        d_image: Image::from_data(rendered.width, rendered.height, rendered.channels, d_image),
        d_store,
    })
}
