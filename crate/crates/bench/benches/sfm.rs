use std::hint::black_box;

use camloc::geometry::undistort_pixel;
use camloc::sfm::{detect_features, essential_ransac, match_features, reconstruct, RansacConfig, SfmConfig, DEFAULT_RATIO};
use camloc::synthetic::CubeScene;
use criterion::{criterion_group, criterion_main, Criterion};

fn sfm(c: &mut Criterion) {
    let scene = CubeScene::standard(0);
    let images = scene.render();
    let (k, d) = (scene.intrinsics, scene.distortion);
    let f0 = detect_features(&images[0], 2000).unwrap();
    let f1 = detect_features(&images[1], 2000).unwrap();
    let matches = match_features(&f0, &f1, DEFAULT_RATIO);
    let norm = |f: &camloc::sfm::Feature| undistort_pixel(f.position, &k, &d).unwrap();
    let x1: Vec<_> = matches.iter().map(|&(a, _)| norm(&f0[a])).collect();
    let x2: Vec<_> = matches.iter().map(|&(_, b)| norm(&f1[b])).collect();

    let mut group = c.benchmark_group("sfm");
    group.sample_size(10);
    group.bench_function("detect features", |b| b.iter(|| detect_features(black_box(&images[0]), 2000).unwrap()));
    group.bench_function("match features", |b| b.iter(|| match_features(black_box(&f0), &f1, DEFAULT_RATIO)));
    group.bench_function("essential ransac", |b| b.iter(|| essential_ransac(black_box(&x1), &x2, &RansacConfig::default()).unwrap()));
    group.bench_function("reconstruct cube", |b| b.iter(|| reconstruct(black_box(&images), &k, &d, &SfmConfig::default()).unwrap()));
    group.finish();
}

criterion_group!(benches, sfm);
criterion_main!(benches);
