use criterion::{criterion_group, criterion_main, Criterion};
use latchsim::cells::CellKind;
use latchsim::transient;
use latchsim_bench::{config, latch_bench, strike_plan};
use std::hint::black_box;

fn transients(c: &mut Criterion) {
    let mut g = c.benchmark_group("transient");
    g.sample_size(10);
    for kind in [CellKind::StandardLatch, CellKind::Loco] {
        let net = latch_bench(kind, 2);
        let cfg = config(1e-9);
        g.bench_function(format!("{kind}_1ns"), |b| b.iter(|| transient(black_box(&net), &cfg, &["q"]).unwrap()));
    }
    g.finish();
}

fn strikes(c: &mut Criterion) {
    let mut g = c.benchmark_group("strike");
    g.sample_size(10);
    let (plan, cfg) = strike_plan(CellKind::Loco, "n3", false);
    g.bench_function("loco_n3_2.5fC", |b| b.iter(|| plan.run(black_box(2.5e-15), &cfg).unwrap()));
    g.finish();
}

criterion_group!(benches, transients, strikes);
criterion_main!(benches);
