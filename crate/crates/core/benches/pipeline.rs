//! Rasterization and meshing, each run on a one-thread pool and on the
//! global pool.
//!
//! Run with: cargo bench -p statica-core
//! For the purely sequential build: cargo bench -p statica-core --no-default-features

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use statica_core::families::{EscapeParams, FlowerParams};
use statica_core::mesher::{extract_isosurface, MeshConfig};
use statica_core::raster::{rasterize_escape, rasterize_polar, RasterConfig, FLOWER_WINDOW, JULIA_WINDOW};
use statica_core::{ParamInterval, VoxelVolume};

fn pools() -> Vec<(&'static str, rayon::ThreadPool)> {
    let global = rayon::current_num_threads();
    vec![
        (
            "1-thread",
            rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap(),
        ),
        (
            "global",
            rayon::ThreadPoolBuilder::new()
                .num_threads(global)
                .build()
                .unwrap(),
        ),
    ]
}

fn flower_stack(res: usize, frames: usize) -> VoxelVolume {
    let cfg = RasterConfig::new(res, FLOWER_WINDOW, 4).unwrap();
    let param = ParamInterval::new(0.2, 1.0, frames).unwrap();
    let layers = param
        .samples()
        .map(|t| rasterize_polar(&FlowerParams::coupled(t), &cfg).unwrap())
        .collect();
    VoxelVolume::new(layers, 0.2, param).unwrap()
}

fn rasterize(c: &mut Criterion) {
    let mut group = c.benchmark_group("rasterize");
    group.sample_size(10);
    let flower = RasterConfig::new(512, FLOWER_WINDOW, 4).unwrap();
    let julia = RasterConfig::new(256, JULIA_WINDOW, 4).unwrap();
    let c0 = EscapeParams::with_defaults(num_complex::Complex64::new(-0.12, 0.75));
    for (name, pool) in pools() {
        group.bench_with_input(BenchmarkId::new("flower_512", name), &pool, |b, pool| {
            b.iter(|| pool.install(|| rasterize_polar(black_box(&FlowerParams::coupled(0.6)), &flower)))
        });
        group.bench_with_input(BenchmarkId::new("julia_256", name), &pool, |b, pool| {
            b.iter(|| pool.install(|| rasterize_escape(black_box(&c0), &julia)))
        });
    }
    group.finish();
}

fn mesh(c: &mut Criterion) {
    let mut group = c.benchmark_group("mesh");
    group.sample_size(10);
    let volume = flower_stack(256, 41);
    let cfg = MeshConfig::default();
    for (name, pool) in pools() {
        group.bench_with_input(BenchmarkId::new("flower_256x41", name), &pool, |b, pool| {
            b.iter(|| pool.install(|| extract_isosurface(black_box(&volume), &cfg)))
        });
    }
    group.finish();
}

criterion_group!(benches, rasterize, mesh);
criterion_main!(benches);
