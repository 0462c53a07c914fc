use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use walkcast_bench::{filled, noise_split};
use walkcast_core::classic::tree::{fit_tree, TreeParams};
use walkcast_core::features::{build_supervised, fit_scaler};
use walkcast_core::lstm::{backward, forward, ArchId, LstmArchitecture, Network};
use walkcast_core::numcore::matmul;

fn bench_matmul(c: &mut Criterion) {
    let mut g = c.benchmark_group("matmul");
    for n in [16, 64, 200] {
        let a = filled(n, n, 1);
        let b = filled(n, n, 2);
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |bench, _| bench.iter(|| matmul(black_box(&a), black_box(&b))));
    }
    g.finish();
}

fn bench_lstm(c: &mut Criterion) {
    let mut g = c.benchmark_group("lstm");
    g.sample_size(20);
    for id in ArchId::ALL {
        let arch = LstmArchitecture::standard(id);
        let net = Network::init(&arch, 0).unwrap();
        let window = filled(arch.input_steps, arch.input_features, 3).map(|v| v.abs());
        let target = [0.5; 5];
        g.bench_function(format!("{id}/forward"), |b| b.iter(|| forward(&arch, &net, black_box(&window))));
        g.bench_function(format!("{id}/backward"), |b| b.iter(|| backward(&arch, &net, black_box(&window), &target)));
    }
    g.finish();
}

fn bench_cart(c: &mut Criterion) {
    let split = noise_split(1460);
    let scaler = fit_scaler(&split.train).unwrap();
    let data = build_supervised(&split.train, &scaler, 1).unwrap();
    let params = TreeParams { max_depth: 0, min_leaf: 5 };
    c.bench_function("cart/fit_1460", |b| b.iter(|| fit_tree(black_box(&data.x), &data.y, params, None)));
}

criterion_group!(benches, bench_matmul, bench_lstm, bench_cart);
criterion_main!(benches);
