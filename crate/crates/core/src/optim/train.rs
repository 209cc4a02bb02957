use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::gaussian::{GaussianGrad, GaussianStore};
use crate::io::{psnr, Frame};
use crate::loss::{
    build_knn4d_store, consistency_loss, entropy_loss_store, l1_loss, ssim_loss, Knn4DIndex,
};
use crate::optim::adam::{adam_step, param_rates};
use crate::optim::density::{densify_and_prune, initialize_scene, reset_opacity, DensifyReport, InitSource};
use crate::optim::{OptimError, TrainConfig};
use crate::render::{render_frame, render_frame_backward, Image};

/// One line of the metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: usize,
    pub loss: f64,
    pub l1: f64,
    pub ssim: f64,
    pub entropy: f64,
    pub consistency: f64,
    /// Mean PSNR of the step's batch.
    pub psnr: f64,
    pub gaussians: usize,
}

/// Snapshot taken just before a densify-and-prune pass.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityEvent {
    pub step: usize,
    pub gaussians: usize,
    /// Gaussians with opacity below [`LOW_OPACITY`] at that moment.
    pub low_opacity: usize,
    pub report: DensifyReport,
}

/// Opacity under which a Gaussian counts as a pruning candidate in
/// [`DensityEvent::low_opacity`].
pub const LOW_OPACITY: f64 = 0.05;

pub struct TrainOutput {
    pub store: GaussianStore,
    pub log: Vec<StepMetrics>,
    pub density_events: Vec<DensityEvent>,
    pub extent: f64,
}

/// Radius of the camera rig around its centroid, padded by 10%.
pub fn camera_extent(frames: &[Frame]) -> f64 {
    let n = frames.len().max(1) as f64;
    let centers: Vec<_> = frames.iter().map(|f| f.camera.center()).collect();
    let mean = centers.iter().fold(crate::math::Vec3::zeros(), |a, c| a + c) / n;
    let radius = centers.iter().map(|c| (c - mean).norm()).fold(0.0, f64::max);
    if radius > 0.0 {
        1.1 * radius
    } else {
        1.0
    }
}

/// Initializes from `init` and optimizes against `frames`. `on_log` sees
/// every logged record as it is produced.
pub fn train(
    frames: &[Frame],
    config: &TrainConfig,
    init: &InitSource,
    on_log: impl FnMut(&StepMetrics),
) -> Result<TrainOutput, OptimError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let store = initialize_scene(init, config.init_count, config, &mut rng)?;
    train_store(store, frames, config, on_log)
}

fn refresh_index(store: &GaussianStore, config: &TrainConfig) -> Option<Knn4DIndex> {
    if config.loss.consistency > 0.0 && !config.static_mode {
        build_knn4d_store(store, config.loss.k).ok()
    } else {
        None
    }
}

/// Optimizes an existing store.
pub fn train_store(
    mut store: GaussianStore,
    frames: &[Frame],
    config: &TrainConfig,
    mut on_log: impl FnMut(&StepMetrics),
) -> Result<TrainOutput, OptimError> {
    config.validate()?;
    if frames.is_empty() {
        return Err(OptimError::EmptyDataset);
    }
    let extent = camera_extent(frames);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut index = refresh_index(&store, config);
    let mut log = Vec::new();
    let mut density_events = Vec::new();
    let batch = config.batch.min(frames.len());
    let w = config.loss;

    for s in 0..config.steps {
        let step = s + 1;
        let sh_degree = if config.sh_degree_interval == 0 { 3 } else { (s / config.sh_degree_interval).min(3) };
        let rates = param_rates(config, s, extent, sh_degree);

        let picks = sample(&mut rng, frames.len(), batch).into_vec();
        let mut grads = vec![GaussianGrad::default(); store.len()];
        let mut norm_sum = vec![0.0; store.len()];
        let mut norm_hits = vec![0u32; store.len()];
        let (mut l1_sum, mut ssim_sum, mut psnr_sum) = (0.0, 0.0, 0.0);
        let inv_b = 1.0 / batch as f64;
        for &fi in &picks {
            let frame = &frames[fi];
            let render = render_frame(&store, &frame.camera, config.background);
            let (l1, g1) = l1_loss(&render.image, &frame.image)?;
            let (ss, gs) = ssim_loss(&render.image, &frame.image)?;
            l1_sum += l1;
            ssim_sum += ss;
            psnr_sum += psnr(&render.image.clamped(), &frame.image).unwrap_or(0.0);
            let d: Vec<f64> =
                g1.iter().zip(&gs).map(|(a, b)| ((1.0 - w.ssim) * a + w.ssim * b) * inv_b).collect();
            let d_image = Image::from_data(frame.image.width, frame.image.height, 3, d);
            let fg = render_frame_backward(&store, &render, &d_image)?;
            for (acc, g) in grads.iter_mut().zip(&fg.grads) {
                acc.add_scaled(g, 1.0);
            }
            for (i, n) in fg.screen_grad_norms.iter().enumerate() {
                if let Some(n) = n {
                    // Undo the batch averaging so the statistic is per view.
                    norm_sum[i] += n * batch as f64;
                    norm_hits[i] += 1;
                }
            }
        }

        let mut entropy = 0.0;
        if w.entropy > 0.0 {
            let (e, ge) = entropy_loss_store(&store);
            entropy = e;
            for (acc, g) in grads.iter_mut().zip(&ge) {
                acc.add_scaled(g, w.entropy);
            }
        }
        let mut consistency = 0.0;
        if let Some(idx) = index.as_ref().filter(|i| i.len() == store.len()) {
            let (c, gc) = consistency_loss(&store, idx)?;
            consistency = c;
            for (acc, g) in grads.iter_mut().zip(&gc) {
                acc.add_scaled(g, w.consistency);
            }
        }

        let l1 = l1_sum * inv_b;
        let ssim = ssim_sum * inv_b;
        let loss = w.combine(l1, ssim, entropy, consistency);
        if !loss.is_finite() {
            return Err(OptimError::NonFiniteLoss { step });
        }

        adam_step(&mut store, &grads, &rates)?;

        if step <= config.densify_until {
            let norms: Vec<Option<f64>> = norm_sum
                .iter()
                .zip(&norm_hits)
                .map(|(&s, &h)| (h > 0).then(|| s / h as f64))
                .collect();
            store.accumulate_stats(&norms);
        }

        // Density control never runs on the last step, so the returned store
        // is always one that has just been optimized.
        let last = step == config.steps;
        let mut rebuilt = false;
        if !last && step > config.densify_from && step <= config.densify_until && step % config.densify_interval == 0 {
            let gaussians = store.len();
            let low_opacity = store.gaussians().iter().filter(|g| g.opacity() < LOW_OPACITY).count();
            let report = densify_and_prune(&mut store, config, extent, &mut rng);
            density_events.push(DensityEvent { step, gaussians, low_opacity, report });
            index = refresh_index(&store, config);
            rebuilt = true;
        }
        if !last && step % config.opacity_reset_interval == 0 && step <= config.densify_until {
            reset_opacity(&mut store);
        }
        if !rebuilt && step % config.knn_interval == 0 {
            index = refresh_index(&store, config);
        }

        if config.log_interval > 0 && (step % config.log_interval == 0 || step == config.steps) {
            let m = StepMetrics {
                step,
                loss,
                l1,
                ssim,
                entropy,
                consistency,
                psnr: psnr_sum * inv_b,
                gaussians: store.len(),
            };
            on_log(&m);
            log.push(m);
        }
    }
    Ok(TrainOutput { store, log, density_events, extent })
}
