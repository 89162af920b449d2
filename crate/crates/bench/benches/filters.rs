use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use circumnav_core::geometry::{diag2, diag4, vec2};
use circumnav_core::relative::{
    step_classical_kf, step_modified_kf, RelativeInputs, RelativeParams,
};
use circumnav_core::sensors::{UwbPreprocessConfig, UwbStream};
use circumnav_core::target::{dkf_update, FusedMeasurement, FusionMode, TargetPrior};
use circumnav_core::Vec4;

fn relative(c: &mut Criterion) {
    let params = RelativeParams::default();
    let cfg = params.estimator_config(0.1);
    let est = params.initial_estimate();
    let inputs = RelativeInputs {
        d_k: 4.02,
        d_km1: 4.0,
        delta_ij: vec2(0.03, -0.01),
        u_ij_km1: vec2(0.2, 0.1),
    };
    c.bench_function("modified_kf_step", |b| {
        b.iter(|| step_modified_kf(black_box(&est), black_box(&inputs), 50, &cfg))
    });
    c.bench_function("classical_kf_step", |b| {
        b.iter(|| step_classical_kf(black_box(&est), black_box(&inputs), 50, &cfg))
    });
}

fn target(c: &mut Criterion) {
    let prior = TargetPrior {
        x_bar: Vec4::new(1.0, 2.0, 0.1, 0.0),
        p_minus: diag4([0.5, 0.5, 1.0, 1.0]),
    };
    let fused = FusedMeasurement {
        z: vec2(1.1, 1.9),
        sigma: diag2([4e-4, 4e-4]),
        mode: FusionMode::Direct,
    };
    let neighbours = [prior, prior];
    c.bench_function("dkf_update_two_neighbours", |b| {
        b.iter(|| {
            dkf_update(
                black_box(&prior),
                black_box(&fused),
                black_box(&neighbours),
                0.1,
            )
        })
    });
}

fn uwb(c: &mut Criterion) {
    let mut stream = UwbStream::new(&UwbPreprocessConfig::default(), 0.1).unwrap();
    let mut n = 0u64;
    c.bench_function("uwb_push", |b| {
        b.iter(|| {
            n += 1;
            stream.push(black_box(4.0 + (n % 7) as f64 * 1e-3))
        })
    });
}

criterion_group!(benches, relative, target, uwb);
criterion_main!(benches);
