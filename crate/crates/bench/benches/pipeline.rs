use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use spinboson::control::{Propagator, Pulse, Segment, StateVector};
use spinboson::fockmodel::{build_control, build_rabi};
use spinboson::spectral::{diagonalize, track_branches};
use spinboson::ModelParams;

fn bench_diagonalize(c: &mut Criterion) {
    let mut group = c.benchmark_group("diagonalize");
    for n in [16, 32, 64] {
        let h = build_rabi(&ModelParams::new(1.0, 1.1, 0.3, n).unwrap()).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &h, |b, h| b.iter(|| diagonalize(black_box(h)).unwrap()));
    }
    group.finish();
}

fn bench_track(c: &mut Criterion) {
    let base = ModelParams::new(1.0, 1.1, 0.0, 32).unwrap();
    let grid: Vec<f64> = (0..21).map(|i| -0.05 + 0.005 * i as f64).collect();
    c.bench_function("track_branches/n32x21", |b| b.iter(|| track_branches(black_box(&base), &grid).unwrap()));
}

fn bench_propagate(c: &mut Criterion) {
    let p = ModelParams::new(1.0, 1.05, 0.2, 64).unwrap();
    let h0 = build_rabi(&p).unwrap();
    let bx = build_control(&p).unwrap();
    let pulse = Pulse::new(
        (0..1000)
            .map(|i| Segment {
                duration: 3.0,
                amplitude: if i % 2 == 0 { 0.02 } else { 0.0 },
            })
            .collect(),
        0.02,
    )
    .unwrap();
    let psi0 = StateVector::basis(128, 0).unwrap();
    let mut prop = Propagator::new(&h0, &bx).unwrap();
    prop.propagate(&pulse, &psi0).unwrap();
    c.bench_function("propagate/n64x1000", |b| b.iter(|| prop.propagate(black_box(&pulse), &psi0).unwrap()));
}

criterion_group!(benches, bench_diagonalize, bench_track, bench_propagate);
criterion_main!(benches);
