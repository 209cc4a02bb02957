use rand::Rng;
use rand_distr::StandardNormal;

use crate::gaussian::{Gaussian4D, GaussianStore, OFFSET_OPACITY, SH_COEFFS};
use crate::loss::build_knn4d;
use crate::math::{logit, Vec4};
use crate::optim::{OptimError, TrainConfig};
use crate::render::sh::rgb_to_dc;
use crate::rotor::Rotor4;

/// Opacity ceiling applied by [`reset_opacity`].
pub const OPACITY_RESET: f64 = 0.01;
/// Floor for initial 3D scales when points coincide.
const MIN_INIT_SCALE: f64 = 1e-7;

/// One initialization point.
#[derive(Debug, Clone, PartialEq)]
pub struct InitPoint {
    pub position: [f64; 3],
    /// Drawn uniformly from `[0, 1]` when absent.
    pub time: Option<f64>,
    pub color: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitSource {
    /// Uniform samples in an axis-aligned `(x, y, z, t)` box.
    Box { min: [f64; 4], max: [f64; 4] },
    Points(Vec<InitPoint>),
}

/// Builds the starting store: identity rotors, 3D scales equal to the
/// nearest-neighbor distance, a constant temporal scale and opacity.
pub fn initialize_scene<R: Rng>(
    source: &InitSource,
    n: usize,
    config: &TrainConfig,
    rng: &mut R,
) -> Result<GaussianStore, OptimError> {
    let points: Vec<InitPoint> = match source {
        InitSource::Box { min, max } => {
            if n == 0 {
                return Err(OptimError::EmptySource);
            }
            (0..n)
                .map(|_| {
                    let mut p = [0.0; 4];
                    for a in 0..4 {
                        p[a] = if max[a] > min[a] { rng.random_range(min[a]..max[a]) } else { min[a] };
                    }
                    InitPoint { position: [p[0], p[1], p[2]], time: Some(p[3]), color: None }
                })
                .collect()
        }
        InitSource::Points(pts) => pts.clone(),
    };
    if points.is_empty() {
        return Err(OptimError::EmptySource);
    }

    let spatial: Vec<[f64; 4]> =
        points.iter().map(|p| [p.position[0], p.position[1], p.position[2], 0.0]).collect();
    let nearest: Vec<f64> = match build_knn4d(&spatial, 1, [1.0; 4]) {
        Ok(idx) => (0..points.len()).map(|i| idx.sq_distances(i)[0].sqrt()).collect(),
        Err(_) => vec![0.01; points.len()],
    };

    let temporal_scale =
        if config.static_mode { config.static_temporal_scale } else { config.init_temporal_scale };
    let gaussians = points
        .iter()
        .zip(&nearest)
        .map(|(p, &d)| {
            let t = if config.static_mode { 0.5 } else { p.time.unwrap_or_else(|| rng.random::<f64>()) };
            let s = d.max(MIN_INIT_SCALE).ln();
            let mut sh = [[0.0; SH_COEFFS]; 3];
            let color = p.color.unwrap_or([0.5; 3]);
            for c in 0..3 {
                sh[c][0] = rgb_to_dc(color[c]);
            }
            Gaussian4D::new(
                [p.position[0], p.position[1], p.position[2], t],
                [s, s, s, temporal_scale.ln()],
                Rotor4::IDENTITY,
                logit(config.init_opacity),
                sh,
            )
        })
        .collect();
    Ok(GaussianStore::new(gaussians))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DensifyReport {
    pub cloned: usize,
    pub split: usize,
    pub pruned: usize,
}

fn max_spatial_scale(g: &Gaussian4D) -> f64 {
    let s = g.scales();
    s[0].max(s[1]).max(s[2])
}

/// Clones or splits Gaussians whose mean screen-space gradient exceeds the
/// threshold, then prunes transparent, oversized and always-visible ones.
/// Resets the gradient statistics.
pub fn densify_and_prune<R: Rng>(
    store: &mut GaussianStore,
    config: &TrainConfig,
    extent: f64,
    rng: &mut R,
) -> DensifyReport {
    let mut report = DensifyReport::default();
    let norms = store.mean_grad_norms();
    let mut candidates: Vec<usize> =
        (0..store.len()).filter(|&i| norms[i] > config.densify_grad_threshold).collect();
    let room = config.max_gaussians.saturating_sub(store.len());
    if candidates.len() > room {
        candidates.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]).then(a.cmp(&b)));
        candidates.truncate(room);
        candidates.sort_unstable();
    }

    let n_before = store.len();
    let mut split_parents = vec![false; n_before];
    let shrink = config.split_factor.ln();
    for &i in &candidates {
        let parent = store.get(i).clone();
        if max_spatial_scale(&parent) <= config.clone_scale_fraction * extent {
            let mut child = parent.clone();
            if !config.static_mode {
                if let Ok(v) = parent.speed() {
                    let u: f64 = rng.sample(StandardNormal);
                    let dt = u * parent.scales()[3].min(1.0);
                    for a in 0..3 {
                        child.mean[a] += v[a] * dt;
                    }
                    child.mean[3] += dt;
                }
            }
            store.push(child);
            report.cloned += 1;
        } else {
            let rot = parent.rotation_matrix();
            let scales = parent.scales();
            for _ in 0..2 {
                let mut z = Vec4::zeros();
                for a in 0..4 {
                    z[a] = rng.sample::<f64, _>(StandardNormal) * scales[a];
                }
                if config.static_mode {
                    z[3] = 0.0;
                }
                let off = rot * z;
                let mut child = parent.clone();
                for a in 0..4 {
                    child.mean[a] += off[a];
                }
                let dims = if config.static_mode { 3 } else { 4 };
                for a in 0..dims {
                    child.log_scales[a] -= shrink;
                }
                store.push(child);
            }
            split_parents[i] = true;
            report.split += 1;
        }
    }

    let mut keep: Vec<bool> = (0..store.len())
        .map(|i| {
            if i < n_before && split_parents[i] {
                return false;
            }
            let g = store.get(i);
            let transparent = g.opacity() < config.prune_opacity;
            let too_big = max_spatial_scale(g) > config.max_scale_fraction * extent;
            let too_long = !config.static_mode && g.scales()[3] > 1.0;
            !(transparent || too_big || too_long)
        })
        .collect();
    let kept = keep.iter().filter(|&&k| k).count();
    if kept < config.min_gaussians {
        let mut dropped: Vec<usize> = (0..store.len()).filter(|&i| !keep[i]).collect();
        dropped.sort_by(|&a, &b| store.get(b).opacity().total_cmp(&store.get(a).opacity()).then(a.cmp(&b)));
        for &i in dropped.iter().take(config.min_gaussians - kept) {
            keep[i] = true;
        }
    }
    let removed = keep.iter().filter(|&&k| !k).count();
    report.pruned = removed - report.split;
    store.retain_mask(&keep);
    store.reset_stats();
    report
}

/// Caps every opacity at [`OPACITY_RESET`] and clears the opacity moments.
pub fn reset_opacity(store: &mut GaussianStore) {
    let cap = logit(OPACITY_RESET);
    let (params, moments) = store.params_and_moments_mut();
    for (g, m) in params.iter_mut().zip(moments.iter_mut()) {
        g.opacity_logit = g.opacity_logit.min(cap);
        m.first[OFFSET_OPACITY] = 0.0;
        m.second[OFFSET_OPACITY] = 0.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> TrainConfig {
        TrainConfig { min_gaussians: 1, ..TrainConfig::default() }
    }

    #[test]
    fn two_points_get_their_distance() {
        let pts = vec![
            InitPoint { position: [0.0, 0.0, 0.0], time: Some(0.2), color: None },
            InitPoint { position: [0.3, 0.4, 0.0], time: Some(0.7), color: Some([1.0, 0.0, 0.0]) },
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let store = initialize_scene(&InitSource::Points(pts), 0, &cfg(), &mut rng).unwrap();
        for g in store.gaussians() {
            for s in &g.scales()[..3] {
                assert!((s - 0.5).abs() < 1e-12);
            }
            assert!((g.opacity() - 0.1).abs() < 1e-12);
            assert_eq!(g.rotor, Rotor4::IDENTITY);
        }
        assert!((store.get(1).sh[0][0] - rgb_to_dc(1.0)).abs() < 1e-15);
    }

    #[test]
    fn single_box_sample() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let src = InitSource::Box { min: [-1.0; 4], max: [1.0; 4] };
        let store = initialize_scene(&src, 1, &cfg(), &mut rng).unwrap();
        assert_eq!(store.len(), 1);
        assert!(store.get(0).mean.iter().all(|v| (-1.0..=1.0).contains(v)));
        assert!(initialize_scene(&src, 0, &cfg(), &mut rng).is_err());
    }

    #[test]
    fn reset_caps_but_keeps_lower() {
        let mut store = GaussianStore::new(vec![
            Gaussian4D::new([0.0; 4], [0.0; 4], Rotor4::IDENTITY, logit(0.9), [[0.0; SH_COEFFS]; 3]),
            Gaussian4D::new([0.0; 4], [0.0; 4], Rotor4::IDENTITY, logit(0.005), [[0.0; SH_COEFFS]; 3]),
        ]);
        reset_opacity(&mut store);
        assert!((store.get(0).opacity() - 0.01).abs() < 1e-12);
        assert!((store.get(1).opacity() - 0.005).abs() < 1e-12);
    }

    #[test]
    fn small_hot_gaussian_clones() {
        let g = Gaussian4D::new([0.0; 4], [-6.0, -6.0, -6.0, -2.0], Rotor4::IDENTITY, 0.0, [[0.0; SH_COEFFS]; 3]);
        let mut store = GaussianStore::new(vec![g]);
        store.accumulate_stats(&[Some(1.0)]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let r = densify_and_prune(&mut store, &cfg(), 1.0, &mut rng);
        assert_eq!(r, DensifyReport { cloned: 1, split: 0, pruned: 0 });
        assert_eq!(store.len(), 2);
        assert_eq!(store.mean_grad_norms(), vec![0.0, 0.0]);
    }
}
