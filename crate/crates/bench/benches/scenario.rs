use criterion::{criterion_group, criterion_main, Criterion};

use circumnav_core::scenario::{builtin, run_scenario, BUILTIN_NAMES};

fn scenarios(c: &mut Criterion) {
    let mut group = c.benchmark_group("run_scenario");
    group.sample_size(10);
    for name in BUILTIN_NAMES {
        let cfg = builtin(name).unwrap();
        group.bench_function(name, |b| b.iter(|| run_scenario(&cfg).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, scenarios);
criterion_main!(benches);
