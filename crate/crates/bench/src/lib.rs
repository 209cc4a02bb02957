//! Scene generators shared by the benchmarks in `benches/`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rotorsplat::gaussian::SH_COEFFS;
use rotorsplat::{Camera, Gaussian4D, GaussianStore, Rotor4, Vec3};

/// `n` small random Gaussians filling a unit ball, all visible at t = 0.5.
pub fn random_scene(n: usize, seed: u64) -> GaussianStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gaussians = (0..n)
        .map(|_| {
            let mean = [
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(0.3..0.7),
            ];
            let s = rng.random_range(-4.5..-3.0);
            let log_scales = [s, s + rng.random_range(-0.3..0.3), s + rng.random_range(-0.3..0.3), -1.0];
            // Spatial rotations only, so every Gaussian survives slicing.
            let q: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            let n = q.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-6);
            let rotor = Rotor4::from_quaternion(q[0] / n, q[1] / n, q[2] / n, q[3] / n)
                .unwrap_or(Rotor4::IDENTITY);
            let mut sh = [[0.0; SH_COEFFS]; 3];
            for c in sh.iter_mut() {
                c[0] = rng.random_range(-1.5..1.5);
            }
            Gaussian4D::new(mean, log_scales, rotor, rng.random_range(-2.0..2.0), sh)
        })
        .collect();
    GaussianStore::new(gaussians)
}

pub fn bench_camera(width: usize, height: usize) -> Camera {
    Camera::look_at(Vec3::new(0.0, -3.5, 0.8), Vec3::zeros(), Vec3::z(), width, height, 0.8, 0.5)
        .expect("valid camera")
}
