use rayon::prelude::*;

use crate::gaussian::{
    GaussianGrad, GaussianStore, OFFSET_LOG_SCALE, OFFSET_MEAN, OFFSET_OPACITY, OFFSET_ROTOR,
    OFFSET_SH, PARAM_COUNT, SH_COEFFS,
};
use crate::optim::{OptimError, TrainConfig};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-15;

/// Exponential interpolation from `lr_init` at step 0 to `lr_final` at
/// `total`.
pub fn lr_schedule(step: usize, total: usize, lr_init: f64, lr_final: f64) -> f64 {
    if total == 0 {
        return lr_init;
    }
    let f = (step.min(total) as f64) / total as f64;
    lr_init * (lr_final / lr_init).powf(f)
}

/// Number of SH coefficients per channel for a degree.
pub fn sh_coeff_count(degree: usize) -> usize {
    (degree.min(3) + 1).pow(2)
}

/// Per-parameter learning rate for one step. Zero marks a frozen parameter.
pub fn param_rates(config: &TrainConfig, step: usize, extent: f64, sh_degree: usize) -> [f64; PARAM_COUNT] {
    let mut r = [0.0; PARAM_COUNT];
    let space = if config.position_lr_scaled { extent } else { 1.0 };
    let pos = lr_schedule(step, config.steps, config.lr_position, config.lr_position_final) * space;
    let time = lr_schedule(step, config.steps, config.lr_time, config.lr_time_final);
    for k in 0..3 {
        r[OFFSET_MEAN + k] = pos;
        r[OFFSET_LOG_SCALE + k] = config.lr_scale;
    }
    r[OFFSET_MEAN + 3] = time;
    r[OFFSET_LOG_SCALE + 3] = config.lr_scale;
    for k in 0..8 {
        r[OFFSET_ROTOR + k] = config.lr_rotor;
    }
    r[OFFSET_OPACITY] = config.lr_opacity;
    let active = sh_coeff_count(sh_degree);
    for c in 0..3 {
        r[OFFSET_SH + c * SH_COEFFS] = config.lr_sh_dc;
        for k in 1..active {
            r[OFFSET_SH + c * SH_COEFFS + k] = config.lr_sh_rest;
        }
    }
    if config.static_mode {
        // Time mean, temporal scale and the four space-time rotor terms.
        r[OFFSET_MEAN + 3] = 0.0;
        r[OFFSET_LOG_SCALE + 3] = 0.0;
        for k in 4..8 {
            r[OFFSET_ROTOR + k] = 0.0;
        }
    }
    r
}

/// One bias-corrected Adam update of every Gaussian with per-parameter
/// `rates`, followed by rotor renormalization. Advances `store.adam_step`.
pub fn adam_step(
    store: &mut GaussianStore,
    grads: &[GaussianGrad],
    rates: &[f64; PARAM_COUNT],
) -> Result<(), OptimError> {
    if grads.len() != store.len() {
        return Err(OptimError::ShapeMismatch { expected: store.len(), got: grads.len() });
    }
    store.adam_step += 1;
    let t = store.adam_step as i32;
    let c1 = 1.0 - BETA1.powi(t);
    let c2 = 1.0 - BETA2.powi(t);
    let (params, moments) = store.params_and_moments_mut();
    params.par_iter_mut().zip(moments.par_iter_mut()).zip(grads.par_iter()).for_each(|((g, m), d)| {
        let mut p = g.to_flat();
        let d = d.to_flat();
        for k in 0..PARAM_COUNT {
            if rates[k] == 0.0 {
                continue;
            }
            m.first[k] = BETA1 * m.first[k] + (1.0 - BETA1) * d[k];
            m.second[k] = BETA2 * m.second[k] + (1.0 - BETA2) * d[k] * d[k];
            let mh = m.first[k] / c1;
            let vh = m.second[k] / c2;
            p[k] -= rates[k] * mh / (vh.sqrt() + ADAM_EPS);
        }
        let mut next = crate::gaussian::Gaussian4D::from_flat(&p);
        if let Ok(r) = next.rotor.normalize() {
            next.rotor = r;
        } else {
            next.rotor = g.rotor;
        }
        *g = next;
    });
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::Gaussian4D;
    use crate::rotor::Rotor4;

    fn one() -> GaussianStore {
        GaussianStore::new(vec![Gaussian4D::new(
            [0.1, 0.2, 0.3, 0.5],
            [-1.0; 4],
            Rotor4::IDENTITY,
            0.0,
            [[0.0; SH_COEFFS]; 3],
        )])
    }

    #[test]
    fn schedule_endpoints_and_midpoint() {
        assert_eq!(lr_schedule(0, 1000, 1.6e-4, 1.6e-6), 1.6e-4);
        assert!((lr_schedule(1000, 1000, 1.6e-4, 1.6e-6) - 1.6e-6).abs() < 1e-18);
        assert!((lr_schedule(500, 1000, 1.6e-4, 1.6e-6) - 1.6e-5).abs() < 1e-17);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut store = one();
        let mut rates = [0.0; PARAM_COUNT];
        rates[0] = 0.1;
        let mut g = GaussianGrad::default();
        g.mean[0] = 1.0;
        adam_step(&mut store, &[g], &rates).unwrap();
        assert!((store.get(0).mean[0] - (0.1 - 0.1)).abs() < 1e-12);
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut store = one();
        let before = store.get(0).clone();
        let rates = param_rates(&TrainConfig::default(), 0, 1.0, 3);
        adam_step(&mut store, &[GaussianGrad::default()], &rates).unwrap();
        assert_eq!(store.get(0), &before);
    }

    #[test]
    fn static_mode_freezes_temporal_entries() {
        let cfg = TrainConfig { static_mode: true, ..TrainConfig::default() };
        let r = param_rates(&cfg, 10, 1.0, 3);
        assert_eq!(r[3], 0.0);
        assert_eq!(r[7], 0.0);
        assert!(r[12..16].iter().all(|&v| v == 0.0));
        assert!(r[8..12].iter().all(|&v| v > 0.0));
    }
}
