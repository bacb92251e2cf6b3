use beamforge::channel::{build_dictionary, sample_channel, GridMode};
use beamforge::estimator::{omp_recover, synthesize_measurements};
use beamforge::hybrid_inf::{design_hybrid_inf, solve_digital_psd, InfDesignOptions, PsdOptions};
use beamforge::hybrid_low::{design_hybrid_low, LowDesignOptions};
use beamforge::linalg::random_phase_matrix;
use beamforge::{PhaseSet, Side};
use criterion::{criterion_group, criterion_main, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn designers(c: &mut Criterion) {
    let a = build_dictionary(8, 12, 0.5).unwrap().matrix;
    let mut group = c.benchmark_group("design_rx_desk");
    group.sample_size(10);
    group.bench_function("psd_subproblem", |b| {
        let analog = random_phase_matrix(8, 8, &mut ChaCha8Rng::seed_from_u64(1));
        b.iter(|| solve_digital_psd(&a, &analog, 2, &PsdOptions::default()).unwrap())
    });
    group.bench_function("continuous_phase", |b| {
        b.iter(|| {
            let mut rng = ChaCha8Rng::seed_from_u64(2);
            design_hybrid_inf(&a, 2, 4, 4, Side::Receiver, &InfDesignOptions::default(), &mut rng).unwrap()
        })
    });
    group.bench_function("two_bit", |b| {
        b.iter(|| {
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let set = PhaseSet::with_bits(2).unwrap();
            design_hybrid_low(&a, 2, 4, 4, set, Side::Receiver, &LowDesignOptions::default(), &mut rng).unwrap()
        })
    });
    group.finish();
}

fn estimation(c: &mut Criterion) {
    let dt = build_dictionary(16, 20, 0.5).unwrap();
    let dr = build_dictionary(8, 12, 0.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let tx = design_hybrid_inf(&dt.matrix, 3, 4, 4, Side::Transmitter, &InfDesignOptions::default(), &mut rng)
        .unwrap()
        .matrix;
    let rx = design_hybrid_inf(&dr.matrix, 2, 4, 4, Side::Receiver, &InfDesignOptions::default(), &mut rng)
        .unwrap()
        .matrix;
    let ch = sample_channel(&dt, &dr, 2, GridMode::OnGrid, &mut rng).unwrap();
    let m = synthesize_measurements(&ch, &tx, &rx, &dt, &dr, 10.0, 1.0, &mut rng).unwrap();
    c.bench_function("omp_desk", |b| {
        b.iter(|| omp_recover(&m.equivalent_dictionary, &m.observations, 2, 1e-6).unwrap())
    });
}

criterion_group!(benches, designers, estimation);
criterion_main!(benches);
