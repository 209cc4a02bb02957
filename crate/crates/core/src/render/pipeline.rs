//! Store-level rendering: slice, project, rasterize, and the full chain rule
//! back to every 4D parameter.

use rayon::prelude::*;

use crate::gaussian::{GaussianGrad, GaussianStore, SlicedGaussian3D};
use crate::render::camera::Camera;
use crate::render::image::Image;
use crate::render::project::{project_traced, project_vjp, ProjectionTrace, Splat2D};
use crate::render::raster::{rasterize, rasterize_backward, BlendRecords};
use crate::render::RenderError;

/// One rendered view plus everything its backward pass needs.
pub struct FrameRender {
    /// RGB, not clamped.
    pub image: Image,
    /// Per-pixel transmittance left for the background.
    pub transmittance: Vec<f64>,
    pub splats: Vec<Splat2D>,
    pub background: [f64; 3],
    pub(crate) slices: Vec<SlicedGaussian3D>,
    pub(crate) traces: Vec<ProjectionTrace>,
    pub records: Option<BlendRecords>,
    camera: Camera,
}

impl FrameRender {
    pub fn camera(&self) -> &Camera {
        &self.camera
    }

    /// Drops the backward-pass state.
    pub fn discard_records(&mut self) {
        self.records = None;
        self.traces = Vec::new();
        self.slices = Vec::new();
    }
}

/// Per-Gaussian gradients of one view.
#[derive(Debug, Clone)]
pub struct FrameGrads {
    /// Indexed like the store; zero for Gaussians that did not reach the image.
    pub grads: Vec<GaussianGrad>,
    /// Norm of the loss gradient with respect to the projected center in
    /// normalized device coordinates, `None` when the Gaussian was culled.
    pub screen_grad_norms: Vec<Option<f64>>,
}

fn project_store(
    store: &GaussianStore,
    cam: &Camera,
) -> (Vec<SlicedGaussian3D>, Vec<Splat2D>, Vec<ProjectionTrace>) {
    let t = cam.time;
    let projected: Vec<(SlicedGaussian3D, Splat2D, ProjectionTrace)> = store
        .gaussians()
        .par_iter()
        .enumerate()
        .filter_map(|(i, g)| {
            if !g.is_visible(t) {
                return None;
            }
            let mut s = g.slice_at(t).ok()?;
            s.source_index = i;
            let (splat, trace) = project_traced(&s, cam, &g.sh, g.opacity_logit).ok()?;
            Some((s, splat, trace))
        })
        .collect();
    let mut slices = Vec::with_capacity(projected.len());
    let mut splats = Vec::with_capacity(projected.len());
    let mut traces = Vec::with_capacity(projected.len());
    for (s, sp, tr) in projected {
        slices.push(s);
        splats.push(sp);
        traces.push(tr);
    }
    (slices, splats, traces)
}

/// Renders the store from `cam` at `cam.time`, keeping blend records.
pub fn render_frame(store: &GaussianStore, cam: &Camera, background: [f64; 3]) -> FrameRender {
    let (slices, splats, traces) = project_store(store, cam);
    let colors: Vec<[f64; 3]> = splats.iter().map(|s| s.color).collect();
    let (data, records) = rasterize(&splats, &colors, background, cam.width, cam.height);
    FrameRender {
        image: Image::from_data(cam.width, cam.height, 3, data),
        transmittance: records.transmittance.clone(),
        splats,
        background,
        slices,
        traces,
        records: Some(records),
        camera: cam.clone(),
    }
}

/// Back-propagates `d_image` (gradient of a scalar loss with respect to the
/// unclamped RGB image) to every Gaussian parameter.
pub fn render_frame_backward(
    store: &GaussianStore,
    frame: &FrameRender,
    d_image: &Image,
) -> Result<FrameGrads, RenderError> {
    let records = frame.records.as_ref().ok_or(RenderError::MissingRecords)?;
    let expected = frame.image.shape();
    if d_image.shape() != expected {
        return Err(RenderError::ShapeMismatch { expected, got: d_image.shape() });
    }
    let cam = &frame.camera;
    let splat_grads = rasterize_backward(&frame.splats, records, frame.background, &d_image.data);

    let per_splat: Vec<GaussianGrad> = (0..frame.splats.len())
        .into_par_iter()
        .map(|k| {
            let s = &frame.slices[k];
            let g = store.get(s.source_index);
            let (slice_grad, d_sh, d_logit) =
                project_vjp(&frame.traces[k], s, cam, &g.sh, &splat_grads[k]);
            let mut out = g.slice_vjp(cam.time, &slice_grad);
            out.sh = d_sh;
            out.opacity_logit = d_logit;
            out
        })
        .collect();

    let mut grads = vec![GaussianGrad::default(); store.len()];
    let mut screen_grad_norms = vec![None; store.len()];
    let (half_w, half_h) = (0.5 * cam.width as f64, 0.5 * cam.height as f64);
    for (k, g) in per_splat.into_iter().enumerate() {
        let i = frame.slices[k].source_index;
        grads[i] = g;
        let m = splat_grads[k].mean;
        screen_grad_norms[i] = Some((m[0] * half_w).hypot(m[1] * half_h));
    }
    Ok(FrameGrads { grads, screen_grad_norms })
}

/// Screen-space optical flow (pixels per unit of scene time) at `cam.time`,
/// blended exactly like color over a zero background.
pub fn render_flow(store: &GaussianStore, cam: &Camera) -> Image {
    let (_, splats, _) = project_store(store, cam);
    let flows: Vec<[f64; 2]> = splats.iter().map(|s| s.flow).collect();
    let (data, _) = rasterize(&splats, &flows, [0.0; 2], cam.width, cam.height);
    Image::from_data(cam.width, cam.height, 2, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{Gaussian4D, SH_COEFFS};
    use crate::math::{logit, Mat4};
    use crate::render::sh::SH_C0;
    use crate::rotor::Rotor4;

    fn cam() -> Camera {
        Camera::new(16, 16, 20.0, 20.0, 8.0, 8.0, Mat4::identity(), 0.0).unwrap()
    }

    fn blob(x: f64, y: f64, z: f64, scale: f64, o: f64) -> Gaussian4D {
        Gaussian4D {
            mean: [x, y, z, 0.0],
            log_scales: [scale.ln(), scale.ln(), scale.ln(), 0.0],
            rotor: Rotor4::IDENTITY,
            opacity_logit: logit(o),
            sh: [[0.0; SH_COEFFS]; 3],
        }
    }

    #[test]
    fn opaque_splat_dc_gradient() {
        // A large near-opaque splat saturates the clamp at the center pixel.
        let store = GaussianStore::new(vec![blob(0.0, 0.0, 2.0, 1.0, 0.9999)]);
        let frame = render_frame(&store, &cam(), [0.0; 3]);
        let mut d = Image::new(16, 16, 3);
        d.pixel_mut(8, 8)[0] = 1.0;
        let g = render_frame_backward(&store, &frame, &d).unwrap();
        assert!((g.grads[0].sh[0][0] - 0.99 * SH_C0).abs() < 1e-9);
    }

    #[test]
    fn missing_records_is_an_error() {
        let store = GaussianStore::new(vec![blob(0.0, 0.0, 2.0, 0.2, 0.5)]);
        let mut frame = render_frame(&store, &cam(), [0.0; 3]);
        frame.discard_records();
        let d = Image::new(16, 16, 3);
        assert!(matches!(
            render_frame_backward(&store, &frame, &d),
            Err(RenderError::MissingRecords)
        ));
    }

    #[test]
    fn static_scene_has_zero_flow() {
        let store = GaussianStore::new(vec![blob(0.0, 0.0, 2.0, 0.3, 0.8), blob(0.2, 0.1, 3.0, 0.3, 0.8)]);
        let flow = render_flow(&store, &cam());
        assert!(flow.data.iter().all(|&v| v == 0.0));
    }

    fn random_scene(seed: u64, n: usize) -> GaussianStore {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let gs = (0..n)
            .map(|_| {
                let mut coeffs = [0.0; 8];
                coeffs[0] = 1.0;
                for c in coeffs.iter_mut().skip(1) {
                    *c = rng.random_range(-0.3..0.3);
                }
                let mut sh = [[0.0; SH_COEFFS]; 3];
                for ch in sh.iter_mut() {
                    for c in ch.iter_mut().take(9) {
                        *c = rng.random_range(-0.3..0.3);
                    }
                }
                Gaussian4D {
                    mean: [
                        rng.random_range(-0.6..0.6),
                        rng.random_range(-0.6..0.6),
                        rng.random_range(2.5..3.5),
                        rng.random_range(0.2..0.4),
                    ],
                    log_scales: [
                        rng.random_range(-1.8f64..-1.0),
                        rng.random_range(-1.8f64..-1.0),
                        rng.random_range(-1.8f64..-1.0),
                        rng.random_range(-1.5f64..-0.5),
                    ],
                    rotor: Rotor4::from_array(coeffs).normalize().unwrap(),
                    opacity_logit: rng.random_range(-1.0..0.5),
                    sh,
                }
            })
            .collect();
        GaussianStore::new(gs)
    }

    #[test]
    fn full_chain_matches_finite_differences() {
        let camera = cam().with_time(0.3);
        let store = random_scene(7, 5);
        let weights: Vec<f64> = (0..16 * 16 * 3).map(|i| ((i * 37 % 101) as f64 / 101.0) - 0.4).collect();
        let loss = |st: &GaussianStore| -> f64 {
            let f = render_frame(st, &camera, [0.1, 0.2, 0.3]);
            f.image.data.iter().zip(&weights).map(|(a, b)| a * b).sum()
        };
        let frame = render_frame(&store, &camera, [0.1, 0.2, 0.3]);
        assert_eq!(frame.splats.len(), 5);
        let d = Image::from_data(16, 16, 3, weights.clone());
        let grads = render_frame_backward(&store, &frame, &d).unwrap();
        let h = 1e-6;
        let (mut total, mut bad) = (0, 0);
        for i in 0..store.len() {
            let analytic = grads.grads[i].to_flat();
            let base = store.get(i).to_flat();
            for k in 0..base.len() {
                let mut plus = store.clone();
                let mut minus = store.clone();
                let mut p = base;
                p[k] += h;
                plus.gaussians_mut()[i] = Gaussian4D::from_flat(&p);
                p[k] -= 2.0 * h;
                minus.gaussians_mut()[i] = Gaussian4D::from_flat(&p);
                let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
                let err = (numeric - analytic[k]).abs();
                total += 1;
                if err > 1e-3 * numeric.abs().max(analytic[k].abs()) && err > 1e-6 {
                    bad += 1;
                    eprintln!("gaussian {i} param {k}: analytic {} numeric {numeric}", analytic[k]);
                }
            }
        }
        assert!(bad * 20 <= total, "{bad} of {total} coordinates off");
        assert!(bad <= 3, "{bad} coordinates off");
    }
}
