//! Values recorded once from seeded runs and frozen here. A change in any of
//! them means generated data or training numerics changed.

use chartmoe_core::chartsynth::build_quadruple;
use chartmoe_core::numkit::Matrix;
use chartmoe_core::stack::ToyStack;
use chartmoe_core::train::{
    align_connector, chart_align_task, evaluate, sft_run, AlignConfig, AlignKind, Fixture,
    FixtureConfig, InitStrategy,
};
use sha2::{Digest, Sha256};

/// Hash of the values printed to 9 significant digits, so kernels that fuse
/// multiply-adds differently still agree.
fn matrix_sha(m: &Matrix) -> String {
    let mut h = Sha256::new();
    for x in m.as_slice() {
        h.update(format!("{x:.8e};").as_bytes());
    }
    hex::encode(h.finalize())
}

fn close(got: f64, want: f64) -> bool {
    (got - want).abs() <= 1e-9 * want.abs()
}

#[test]
fn seed_zero_quadruple() {
    let q = build_quadruple(0).unwrap();
    assert_eq!(
        hex::encode(Sha256::digest(q.table.to_csv().as_bytes())),
        "5b2b948ced0e111c21280f73898dbd0fe54882d625587172d178698c324eb046"
    );
    assert_eq!(
        q.spec.canonical_json(),
        r##"{"chart_type":"scatter","fonts":{"label_size":12,"title_size":12},"grid":false,"legend":{"location":"lower-right","show":true},"palette":["#8c564b"],"title":{"position":"center","text":"Visits by Region"},"type_specific":{"kind":"scatter","marker":"triangle"}}"##
    );
    let stack = ToyStack::new(Default::default(), 0).unwrap();
    let tokens = stack.encoder.encode(&q.raster).unwrap();
    assert_eq!(
        matrix_sha(&tokens),
        "dc6a25946cd382430a8bf268472e51415ba909a394f5bd65a0ad0b599539fb7c"
    );
}

#[test]
fn table_alignment_fixture() {
    let stack = ToyStack::new(Default::default(), 0).unwrap();
    let task = chart_align_task(AlignKind::Table, 0, 64).unwrap();
    let (_, r) = align_connector(&task, &stack, 64, 0, &AlignConfig::default()).unwrap();
    assert!(r.final_loss < r.initial_loss);
    assert!(
        close(r.initial_loss, 3.5662939581252426e-2),
        "{}",
        r.initial_loss
    );
    assert!(
        close(r.final_loss, 2.9144584639129063e-2),
        "{}",
        r.final_loss
    );
}

#[test]
fn diverse_sft_fixture() {
    let fx = Fixture::build(FixtureConfig::default()).unwrap();
    let (vanilla, aligned, _) = fx.align_all(0).unwrap();
    let c = fx
        .init(InitStrategy::Diverse, &vanilla, &aligned, 0)
        .unwrap();
    let (c, h, log) = sft_run(&c, &fx.stack.head, &fx.data, &fx.config.sft, 0).unwrap();
    let pool = evaluate(&c, &h, &fx.data.pool, 64).unwrap();
    let held = evaluate(&c, &h, &fx.data.heldout, 64).unwrap();
    assert!(
        close(pool.task_loss, 3.6585914427505355e-2),
        "{}",
        pool.task_loss
    );
    let last = log.steps.last().unwrap().task_loss;
    assert!(close(last, 1.2517645605325556e-2), "{last}");
    let shares = [
        0.11408163265306122,
        0.5,
        0.08403061224489795,
        0.3018877551020408,
    ];
    for (g, w) in held.usage.shares.iter().zip(shares) {
        assert!((g - w).abs() < 1e-12, "{:?}", held.usage.shares);
    }
    assert!(close(held.usage.chi_square, 0.4448479175343607));
}
