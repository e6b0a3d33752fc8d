// SPDX-License-Identifier: Apache-2.0

use criterion::{black_box, criterion_group, criterion_main, Criterion};

use chipnet_bench::{random_input, random_network};
use chipnet_core::cnn::{block_forward, conv2d, fixed_forward, network_forward};
use chipnet_core::hw::simulate_frame;
use chipnet_core::postprocess::{rasterize, GridMapConfig, Polygon};
use chipnet_core::spherical::preprocess;
use chipnet_core::train::synth::{Scene, SceneConfig};
use chipnet_core::{GridConfig, Mode, QFormat, QuantizedNetwork, SimConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn layers(c: &mut Criterion) {
    let net = random_network(64, 1, 1);
    let x = random_input(64, 180, 2);
    let h = conv2d(&x, &net.encoder).unwrap();
    c.bench_function("encoder 5x5 14->64 @ 64x180", |b| b.iter(|| conv2d(black_box(&x), &net.encoder).unwrap()));
    c.bench_function("block 64ch @ 64x180", |b| b.iter(|| block_forward(black_box(&h), &net.blocks[0]).unwrap()));
}

fn networks(c: &mut Criterion) {
    let net = random_network(8, 2, 3);
    let x = random_input(64, 180, 4);
    let q = QuantizedNetwork::from_network(&net, QFormat::WEIGHTS_18, QFormat::ACTIVATIONS_18).unwrap();
    let mut g = c.benchmark_group("toy network 8ch x2 @ 64x180");
    g.bench_function("float", |b| b.iter(|| network_forward(black_box(&x), &net, Mode::Float).unwrap()));
    g.bench_function("fixed", |b| b.iter(|| fixed_forward(black_box(&x), &q).unwrap()));
    g.sample_size(10);
    g.bench_function("datapath sim", |b| b.iter(|| simulate_frame(black_box(&x), &q, &SimConfig::default()).unwrap()));
    g.finish();
}

fn front_and_back(c: &mut Criterion) {
    let cfg = SceneConfig { grid: GridConfig::default(), azimuth_step: 0.17, ..SceneConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let scene = Scene::random(&cfg, &mut rng);
    let cloud = scene.scan(&cfg, &mut rng);
    c.bench_function("spherical preprocess", |b| b.iter(|| preprocess(black_box(&cloud), &cfg.grid)));

    let poly = Polygon::new(vec![(6.0, -8.0), (40.0, -3.0), (45.0, 0.0), (40.0, 4.0), (6.0, 9.0)]).unwrap();
    let map = GridMapConfig::default();
    c.bench_function("rasterize 800x400", |b| b.iter(|| rasterize(black_box(&poly), &map)));
}

criterion_group!(benches, layers, networks, front_and_back);
criterion_main!(benches);
