use criterion::{criterion_group, criterion_main, Criterion};

use rotorsplat::render::render_frame;
use rotorsplat_bench::{bench_camera, random_scene};

fn forward(c: &mut Criterion) {
    let store = random_scene(100_000, 7);
    let camera = bench_camera(400, 400);
    let mut group = c.benchmark_group("forward_100k_400x400");
    group.sample_size(10);
    group.bench_function("all_threads", |b| b.iter(|| render_frame(&store, &camera, [0.0; 3])));
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    group.bench_function("one_thread", |b| {
        b.iter(|| single.install(|| render_frame(&store, &camera, [0.0; 3])))
    });
    group.finish();
}

criterion_group!(benches, forward);
criterion_main!(benches);
