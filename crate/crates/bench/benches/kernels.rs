use chartmoe_bench::{moe_and_tokens, square};
use chartmoe_core::moe::AuxLossConfig;
use chartmoe_core::numkit::{matmul, Matrix};
use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

fn bench_matmul(c: &mut Criterion) {
    let mut g = c.benchmark_group("matmul");
    for n in [32, 64, 128, 256] {
        let (a, b) = (square(n, 1), square(n, 2));
        g.throughput(Throughput::Elements((2 * n * n * n) as u64));
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |bch, _| {
            bch.iter(|| matmul(black_box(&a), black_box(&b)).unwrap())
        });
    }
    g.finish();
}

fn bench_moe(c: &mut Criterion) {
    let mut g = c.benchmark_group("moe");
    for k in [1, 2, 4] {
        let (moe, v) = moe_and_tokens(16, k);
        g.throughput(Throughput::Elements(v.rows() as u64));
        g.bench_with_input(BenchmarkId::new("forward", k), &k, |b, _| {
            b.iter(|| moe.forward(black_box(&v)).unwrap())
        });
        let (y, cache) = moe.forward_cached(&v).unwrap();
        let dy = Matrix::zeros(y.rows(), y.cols()).map(|_| 1e-3);
        g.bench_with_input(BenchmarkId::new("backward", k), &k, |b, _| {
            b.iter(|| {
                moe.backward(&cache, black_box(&dy), &AuxLossConfig::on())
                    .unwrap()
            })
        });
    }
    g.finish();
}

criterion_group!(benches, bench_matmul, bench_moe);
criterion_main!(benches);
