use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use gate_racer_core::dynamics::{QuadParams, QuadState};
use gate_racer_core::gate_sdf::{guide_sdf, GateGeometry, GatePose};
use gate_racer_core::mppi::{
    control_step, weighted_update, AnalyticOracle, ControlInput, ControlSequence, MppiConfig,
};
use gate_racer_core::{RngStream, StreamFamily, Vec3};
use rand::Rng;

fn bench_control_step(c: &mut Criterion) {
    let params = QuadParams::sim_platform();
    let cfg = MppiConfig::desk_profile();
    let gate = GatePose::identity();
    let provider = AnalyticOracle { pose: gate, geometry: GateGeometry::standard() };
    let state = QuadState::hover_at(Vec3::new(4.0, 0.0, 1.0), &params);
    let family = StreamFamily::new(7);
    let nominal = ControlSequence::zeros(cfg.horizon);

    let mut step = 0u64;
    c.bench_function("control_step_desk_m1024", |b| {
        b.iter(|| {
            step += 1;
            control_step(
                &state,
                &nominal,
                gate.center(),
                gate.center(),
                &provider,
                &cfg,
                &params,
                &family,
                step,
            )
        })
    });
}

fn bench_guide_sdf(c: &mut Criterion) {
    let g = GateGeometry::standard();
    let mut rng = RngStream::new(8, 0);
    let points: Vec<Vec3> = (0..4096)
        .map(|_| {
            Vec3::new(
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-5.0..5.0),
            )
        })
        .collect();
    c.bench_function("guide_sdf_4096_points", |b| {
        b.iter(|| points.iter().map(|&p| guide_sdf(p, &g)).sum::<f64>())
    });
}

fn bench_weighted_update(c: &mut Criterion) {
    let mut rng = RngStream::new(9, 0);
    let seqs: Vec<ControlSequence> = (0..1024)
        .map(|_| {
            ControlSequence(
                (0..20)
                    .map(|_| ControlInput(std::array::from_fn(|_| rng.gen_range(-5.0..5.0))))
                    .collect(),
            )
        })
        .collect();
    c.bench_function("weighted_update_m1024_k20", |b| {
        b.iter_batched(
            || (0..1024).map(|_| rng.gen_range(0.0..100.0)).collect::<Vec<f64>>(),
            |costs| weighted_update(&seqs, &costs, 0.05),
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, bench_control_step, bench_guide_sdf, bench_weighted_update);
criterion_main!(benches);
