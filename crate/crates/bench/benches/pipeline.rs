use chartmoe_core::chartsynth::{build_quadruple, parse_code, validate_quadruple};
use chartmoe_core::evalkit::{pot_eval, relaxed_match, DEFAULT_MARGINS};
use chartmoe_core::stack::ToyStack;
use criterion::{black_box, criterion_group, criterion_main, Criterion};

fn bench_synth(c: &mut Criterion) {
    let mut seed = 0u64;
    c.bench_function("quadruple/build", |b| {
        b.iter(|| {
            seed += 1;
            build_quadruple(black_box(seed)).unwrap()
        })
    });
    let q = build_quadruple(7).unwrap();
    c.bench_function("quadruple/validate", |b| {
        b.iter(|| validate_quadruple(black_box(&q)).is_ok())
    });
    c.bench_function("quadruple/parse_code", |b| {
        b.iter(|| parse_code(black_box(&q.code)).unwrap())
    });
    let stack = ToyStack::new(Default::default(), 0).unwrap();
    c.bench_function("encoder/encode", |b| {
        b.iter(|| stack.encoder.encode(black_box(&q.raster)).unwrap())
    });
}

fn bench_eval(c: &mut Criterion) {
    let pairs = [
        ("The answer is 1,234.5 million", "1234"),
        ("about 45%", "0.45"),
        ("It is between 2003 and 2005", "(2003, 2005)"),
        ("Blue.", "blue"),
    ];
    c.bench_function("relaxed_match/mixed", |b| {
        b.iter(|| {
            pairs
                .iter()
                .flat_map(|(p, g)| DEFAULT_MARGINS.map(|m| relaxed_match(black_box(p), g, m)))
                .filter(|&x| x)
                .count()
        })
    });
    let program =
        "v = [12, 7.5, 30.25, 4]\nspread = max(v) - min(v)\nanswer = round(spread / mean(v), 3)";
    c.bench_function("pot/eval", |b| {
        b.iter(|| pot_eval(black_box(program)).unwrap())
    });
}

criterion_group!(benches, bench_synth, bench_eval);
criterion_main!(benches);
