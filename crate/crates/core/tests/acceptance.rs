//! End-to-end acceptance suite. Each test prints one pass/fail line; the
//! closed-loop batches are cached so the determinism check can re-run them
//! against the originals.

use std::sync::OnceLock;
use std::time::Instant;

use gate_racer_core::dynamics::{self, ControlInput, QuadParams, QuadState};
use gate_racer_core::gate_sdf::{
    guide_sdf, GateGeometry, GatePose, SampleClass, SampleCounts, SampleRegion,
};
use gate_racer_core::mppi::{
    control_step, weighted_update, AnalyticOracle, ControlSequence, MppiConfig, SdfQueryProvider,
};
use gate_racer_core::neural_sdf::{
    huber, huber_grad, mlp_backward, mlp_forward, train_stage1, train_stage2, Dense, GateSdfModel,
    MlpWeights, NetConfig, TrainConfig,
};
use gate_racer_core::perception::dataset::{
    generate_record, sample_camera_pose, DatasetRecord, PoseSampling,
};
use gate_racer_core::perception::{
    apply_noise, forward_camera_in_body, gate_visible, raycast_depth, AnalyticGateEncoder,
    CachedAnalyticDecoder, CachedSdfProvider, CameraModel, NoiseModel,
};
use gate_racer_core::sim_harness::{
    run_batch, BlackoutConfig, EpisodeResult, PerturbationKind, ProviderKind, ScenarioConfig,
    Track,
};
use gate_racer_core::{RigidTransform, RngStream, StreamFamily, UnitQuat, Vec3};
use ndarray::{Array1, Array2};
use rand::Rng;
use rayon::prelude::*;

const SEED: u64 = 42;

fn report(id: u32, label: &str, pass: bool, detail: &str) {
    println!("[acceptance] {id:02} {label}: {} ({detail})", if pass { "pass" } else { "FAIL" });
}

// -- 1: field oracle equivalence --------------------------------------------

#[test]
fn a01_field_matches_independent_oracle() {
    let g = GateGeometry::standard();
    let oracle = |p: Vec3| g.inner_half_width + p.x.abs() * g.cone_angle.tan() - p.y.abs().max(p.z.abs());

    let mut rng = RngStream::new(SEED, 1);
    let start = Instant::now();
    let mut worst = 0.0f64;
    for _ in 0..100_000 {
        let p = Vec3::new(
            rng.gen_range(-10.0..10.0),
            rng.gen_range(-10.0..10.0),
            rng.gen_range(-10.0..10.0),
        );
        worst = worst.max((guide_sdf(p, &g) - oracle(p)).abs());
    }
    let elapsed = start.elapsed().as_secs_f64();
    let pass = worst <= 1e-12 && elapsed < 1.0;
    report(1, "analytic field oracle equivalence", pass, &format!("max err {worst:.2e}, {elapsed:.3} s"));
    assert!(pass, "max err {worst}, elapsed {elapsed} s");
}

// -- 2: softmax weight suite ------------------------------------------------

#[test]
fn a02_softmax_weight_suite() {
    const M: usize = 8192;
    let seqs: Vec<ControlSequence> = (0..M)
        .map(|m| ControlSequence(vec![ControlInput([m as f64, 0.0, 0.0, 0.0])]))
        .collect();
    let mut rng = RngStream::new(SEED, 2);
    let start = Instant::now();

    let mut worst_sum = 0.0f64;
    for _ in 0..1000 {
        // dyadic costs: the +7.25 shift below is then exact in f64, so the
        // min-subtraction inside the update can cancel it bitwise
        let mut costs: Vec<f64> =
            (0..M).map(|_| (rng.gen_range(0.0f64..100.0) * 1024.0).round() / 1024.0).collect();
        // give the minimum a guaranteed gap above 1e-3 to the runner-up
        let argmin = costs
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        costs[argmin] -= 1.0 / 256.0;

        let base = weighted_update(&seqs, &costs, 0.05);
        worst_sum = worst_sum.max((base.weights.iter().sum::<f64>() - 1.0).abs());

        let shifted: Vec<f64> = costs.iter().map(|c| c + 7.25).collect();
        let moved = weighted_update(&seqs, &shifted, 0.05);
        assert_eq!(base.weights, moved.weights, "shift changed the weights");

        let sharp = weighted_update(&seqs, &costs, 1e-6);
        assert!(
            sharp.weights[argmin] >= 0.999,
            "cold softmax put only {} on the min-cost rollout",
            sharp.weights[argmin]
        );
    }
    let elapsed = start.elapsed().as_secs_f64();
    let pass = worst_sum <= 1e-9 && elapsed < 10.0;
    report(2, "mppi softmax suite", pass, &format!("sum err {worst_sum:.2e}, {elapsed:.2} s"));
    assert!(pass, "sum err {worst_sum}, elapsed {elapsed} s");
}

// -- 3: telescoping progress identity ---------------------------------------

#[test]
fn a03_progress_cost_telescopes() {
    let params = QuadParams::sim_platform();
    let mut rng = RngStream::new(SEED, 3);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let wp = Vec3::new(
            rng.gen_range(-10.0..10.0),
            rng.gen_range(-10.0..10.0),
            rng.gen_range(-10.0..10.0),
        );
        let traj: Vec<QuadState> = (0..21)
            .map(|_| {
                let p = Vec3::new(
                    rng.gen_range(-10.0..10.0),
                    rng.gen_range(-10.0..10.0),
                    rng.gen_range(-10.0..10.0),
                );
                QuadState { p, ..QuadState::hover_at(p, &params) }
            })
            .collect();
        let summed = gate_racer_core::mppi::gate_progress_cost(&traj, wp);
        let endpoint = (traj[20].p - wp).norm_squared() - (traj[0].p - wp).norm_squared();
        let rel = (summed - endpoint).abs() / endpoint.abs().max(1.0);
        worst = worst.max(rel);
    }
    let pass = worst <= 1e-9;
    report(3, "telescoping progress identity", pass, &format!("max rel err {worst:.2e}"));
    assert!(pass, "max rel err {worst}");
}

// -- 4: dynamics sanity -----------------------------------------------------

#[test]
fn a04_dynamics_sanity() {
    let params = QuadParams::sim_platform();

    // hover equilibrium
    let start = Vec3::new(0.0, 0.0, 1.0);
    let mut x = QuadState::hover_at(start, &params);
    for _ in 0..100 {
        x = dynamics::step(&x, &ControlInput::ZERO, &params, 0.01);
    }
    let drift = x.p.distance(start);

    // 1 s free fall from zero thrust
    let mut f = QuadState { thrusts: [0.0; 4], ..QuadState::hover_at(Vec3::ZERO, &params) };
    for _ in 0..100 {
        f = dynamics::step(&f, &ControlInput::ZERO, &params, 0.01);
    }
    let drop = -f.p.z;

    // quaternion normalization under random tumbling
    let mut rng = RngStream::new(SEED, 4);
    let mut t = QuadState::hover_at(Vec3::ZERO, &params);
    for _ in 0..10_000 {
        let u = ControlInput(std::array::from_fn(|_| {
            rng.gen_range(-params.thrust_rate_max..params.thrust_rate_max)
        }));
        t = dynamics::step(&t, &u, &params, 0.03);
    }
    let q = t.q;
    let norm_err = ((q.w * q.w + q.x * q.x + q.y * q.y + q.z * q.z).sqrt() - 1.0).abs();

    let pass = drift < 1e-6 && (drop - 4.905).abs() <= 1e-3 && norm_err <= 1e-9;
    report(
        4,
        "dynamics sanity",
        pass,
        &format!("hover drift {drift:.2e} m, drop {drop:.4} m, |q| err {norm_err:.2e}"),
    );
    assert!(pass, "drift {drift}, drop {drop}, norm err {norm_err}");
}

// -- closed-loop scenario plumbing ------------------------------------------

fn track() -> Track {
    Track::circular(4, 5.0, 1.0, 3)
}

fn desk_scenario(provider: ProviderKind) -> ScenarioConfig {
    let mut s = ScenarioConfig::baseline(provider, SEED);
    s.speed_cap = 3.5;
    s.record_log = true;
    s
}

fn nominal_scenario() -> ScenarioConfig {
    desk_scenario(ProviderKind::Analytic)
}

fn position_scenario(magnitude: f64) -> ScenarioConfig {
    let mut s = desk_scenario(ProviderKind::Perturbed);
    s.perturbation = PerturbationKind::Position;
    s.magnitude = magnitude;
    s
}

fn yaw_scenario(degrees: f64) -> ScenarioConfig {
    let mut s = desk_scenario(ProviderKind::Perturbed);
    s.perturbation = PerturbationKind::Yaw;
    s.magnitude = degrees.to_radians();
    s
}

fn blackout_scenario() -> ScenarioConfig {
    let mut s = desk_scenario(ProviderKind::CachedAnalytic);
    s.blackout = Some(BlackoutConfig { radius: 2.0, steps: 10 });
    s
}

static NOMINAL: OnceLock<Vec<EpisodeResult>> = OnceLock::new();
static POS_03: OnceLock<Vec<EpisodeResult>> = OnceLock::new();
static POS_09: OnceLock<Vec<EpisodeResult>> = OnceLock::new();
static YAW_30: OnceLock<Vec<EpisodeResult>> = OnceLock::new();
static YAW_60: OnceLock<Vec<EpisodeResult>> = OnceLock::new();
static BLACKOUT: OnceLock<Vec<EpisodeResult>> = OnceLock::new();

fn batch(cell: &OnceLock<Vec<EpisodeResult>>, scenario: ScenarioConfig) -> &Vec<EpisodeResult> {
    cell.get_or_init(|| run_batch(&track(), &scenario, None))
}

fn successes(results: &[EpisodeResult]) -> usize {
    results.iter().filter(|r| r.success).count()
}

// -- 5-8: closed-loop sweeps ------------------------------------------------

#[test]
fn a05_closed_loop_nominal() {
    let results = batch(&NOMINAL, nominal_scenario());
    let ok = successes(results);
    let peak = results.iter().map(|r| r.max_speed).fold(0.0f64, f64::max);
    let pass = ok >= 19 && peak >= 4.0;
    report(5, "closed loop nominal", pass, &format!("{ok}/20, peak {peak:.2} m/s"));
    assert!(pass, "{ok}/20 succeeded, peak speed {peak}");
}

#[test]
fn a06_closed_loop_position_noise() {
    let ok = successes(batch(&POS_03, position_scenario(0.3)));
    let pass = ok >= 18;
    report(6, "closed loop +-0.3 m gate displacement", pass, &format!("{ok}/20"));
    assert!(pass, "{ok}/20 succeeded");
}

#[test]
fn a07_closed_loop_yaw_noise() {
    let ok = successes(batch(&YAW_30, yaw_scenario(30.0)));
    let pass = ok >= 18;
    report(7, "closed loop +-30 deg gate yaw", pass, &format!("{ok}/20"));
    assert!(pass, "{ok}/20 succeeded");
}

#[test]
fn a08_degradation_ordering() {
    let pos_small = successes(batch(&POS_03, position_scenario(0.3)));
    let pos_large = successes(batch(&POS_09, position_scenario(0.9)));
    let yaw_small = successes(batch(&YAW_30, yaw_scenario(30.0)));
    let yaw_large = successes(batch(&YAW_60, yaw_scenario(60.0)));
    // one-trial slack for sampling noise
    let pass = pos_large <= pos_small + 1 && yaw_large <= yaw_small + 1;
    report(
        8,
        "degradation ordering",
        pass,
        &format!("pos {pos_large}/20 <= {pos_small}/20, yaw {yaw_large}/20 <= {yaw_small}/20"),
    );
    assert!(pass, "pos {pos_large} vs {pos_small}, yaw {yaw_large} vs {yaw_small}");
}

// -- 9: learned field training properties -----------------------------------

fn training_dataset(records: usize) -> Vec<DatasetRecord> {
    let g = GateGeometry::standard();
    let gate = GatePose::identity();
    let cam = CameraModel::low_res_default();
    let counts =
        SampleCounts { near_surface: 96, interior: 48, collision_prone: 48, global_uniform: 64 };
    let family = StreamFamily::new(SEED).child(9);
    (0..records as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = family.stream(i);
            let cam_pose = sample_camera_pose(&gate, &PoseSampling::default(), &mut rng);
            generate_record(
                &g,
                &gate,
                &cam_pose,
                &cam,
                &NoiseModel::sensor_default(),
                &counts,
                &SampleRegion::default(),
                &mut rng,
            )
        })
        .collect()
}

#[test]
fn a09_training_properties() {
    let dataset = training_dataset(2048);
    let cfg = TrainConfig {
        epochs: 8,
        batch_size: 16,
        points_per_image: 128,
        val_fraction: 0.15,
        seed: SEED,
        ..TrainConfig::default()
    };
    let mut model = GateSdfModel::init(NetConfig::desk(64), &mut RngStream::new(SEED, 90));
    let report9 = train_stage1(&mut model, &dataset, &cfg);
    assert!(!report9.diverged, "stage 1 diverged");

    let first = report9.history.first().unwrap().val_sdf;
    let last = report9.history.last().unwrap().val_sdf;
    let loss_ok = last <= 0.5 * first;

    // held-out split mirrors the trainer: the trailing val_fraction slice
    let n_val = ((dataset.len() as f64 * cfg.val_fraction).round() as usize).min(dataset.len() - 1);
    let val = &dataset[dataset.len() - n_val..];

    let mut agree = 0usize;
    let mut near_total = 0usize;
    let mut recon_err = 0.0f64;
    let mut noise_err = 0.0f64;
    for rec in val {
        let cam_pose = rec.world_to_camera.inverse();
        let within = rec.gate_in_camera.translation.norm() <= 6.0;
        if within && gate_visible(&cam_pose, &rec.camera, &GatePose::identity()) {
            let z = model.encode(&rec.clean);
            let near: Vec<_> =
                rec.points.iter().filter(|pt| pt.class == SampleClass::NearSurface).collect();
            let preds = model.decode_batch(&z, &near.iter().map(|pt| pt.p).collect::<Vec<_>>());
            for (pt, s) in near.iter().zip(&preds) {
                near_total += 1;
                if (pt.s >= 0.0) == (*s >= 0.0) {
                    agree += 1;
                }
            }
        }
        let z_noisy = model.encode(&rec.noisy);
        recon_err += model.reconstruct(&z_noisy).l1_distance(&rec.clean);
        noise_err += rec.noisy.l1_distance(&rec.clean);
    }
    let agreement = agree as f64 / near_total.max(1) as f64;
    let sign_ok = near_total > 0 && agreement >= 0.90;
    let denoise_ok = recon_err < noise_err;

    // stage 2 on harsher noise must leave both decoders bitwise frozen
    let mut harsh_rng = RngStream::new(SEED, 91);
    let harsh: Vec<DatasetRecord> = dataset[..64]
        .iter()
        .map(|rec| DatasetRecord {
            noisy: apply_noise(&rec.clean, &NoiseModel::sensor_harsh(), &mut harsh_rng),
            ..rec.clone()
        })
        .collect();
    let mut tuned = model.clone();
    train_stage2(&mut tuned, &harsh, &TrainConfig { epochs: 1, ..cfg });
    let frozen_ok = tuned.sdf == model.sdf && tuned.recon == model.recon;

    let grad_err = toy_mlp_gradient_error();
    let grad_ok = grad_err < 1e-3;

    let pass = loss_ok && sign_ok && denoise_ok && frozen_ok && grad_ok;
    report(
        9,
        "learned field training",
        pass,
        &format!(
            "val L1 {first:.4}->{last:.4}, sign {agreement:.3} over {near_total}, \
             denoise {:.4}<{:.4}, frozen {frozen_ok}, grad err {grad_err:.2e}",
            recon_err / val.len() as f64,
            noise_err / val.len() as f64
        ),
    );
    assert!(pass, "loss {loss_ok}, sign {agreement}, denoise {denoise_ok}, frozen {frozen_ok}, grad {grad_err}");
}

/// Max relative error between analytic and central-difference gradients on
/// a small dense network with a smoothed-L1 head.
fn toy_mlp_gradient_error() -> f64 {
    let mut rng = RngStream::new(SEED, 92);
    let mlp = MlpWeights {
        layers: vec![Dense::init(5, 8, &mut rng), Dense::init(8, 8, &mut rng), Dense::init(8, 1, &mut rng)],
    };
    let x = Array2::from_shape_fn((4, 5), |_| rng.gen_range(-1.0..1.0));
    let targets: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let knee = 0.5;

    let loss_of = |m: &MlpWeights| {
        let (out, _) = mlp_forward(m, &x);
        out.iter().zip(&targets).map(|(o, t)| huber(o - t, knee)).sum::<f64>()
    };

    let (out, trace) = mlp_forward(&mlp, &x);
    let grad_out =
        Array1::from_iter(out.iter().zip(&targets).map(|(o, t)| huber_grad(o - t, knee)));
    let (grads, _) = mlp_backward(&mlp, &trace, &grad_out);

    let eps = 1e-5;
    let mut worst = 0.0f64;
    for (li, layer) in mlp.layers.iter().enumerate() {
        let entries = layer.w.len() + layer.b.len();
        for e in 0..entries {
            let analytic = if e < layer.w.len() {
                grads[li].w.as_slice().unwrap()[e]
            } else {
                grads[li].b[e - layer.w.len()]
            };
            let probe = |delta: f64| {
                let mut m = mlp.clone();
                if e < layer.w.len() {
                    m.layers[li].w.as_slice_mut().unwrap()[e] += delta;
                } else {
                    m.layers[li].b[e - layer.w.len()] += delta;
                }
                loss_of(&m)
            };
            let numeric = (probe(eps) - probe(-eps)) / (2.0 * eps);
            let denom = analytic.abs().max(numeric.abs());
            if denom < 1e-6 {
                continue;
            }
            worst = worst.max((analytic - numeric).abs() / denom);
        }
    }
    worst
}

// -- 10: object permanence --------------------------------------------------

fn camera_pose_at(position: Vec3, yaw: f64) -> RigidTransform {
    RigidTransform::new(
        UnitQuat::from_yaw(yaw).mul(forward_camera_in_body().rotation),
        position,
    )
}

#[test]
fn a10_object_permanence() {
    // scripted part: cached outputs for fixed world points must not change
    // while the gate is out of view
    let gate = GatePose::identity();
    let g = GateGeometry::standard();
    let cam = CameraModel::low_res_default();
    let encoder = AnalyticGateEncoder { gate };
    let mut provider = CachedSdfProvider::new(CachedAnalyticDecoder { geometry: g });

    let eye = Vec3::new(3.0, 0.4, 0.2);
    let to_gate = gate.center() - eye;
    let look = camera_pose_at(eye, to_gate.y.atan2(to_gate.x));
    let img = raycast_depth(&gate, &g, &look, &cam);
    provider.observe(&img, &look, &cam, &gate, &encoder, 8, 0.0);
    assert!(provider.ready(), "cache did not populate from a visible gate");

    let points = [
        Vec3::new(0.5, 0.1, 0.0),
        Vec3::new(-0.5, -0.2, 0.1),
        Vec3::new(1.5, 0.8, -0.3),
        Vec3::new(0.0, 0.0, 0.0),
        Vec3::new(2.0, -1.0, 0.5),
    ];
    let frozen = provider.query(&points);
    let mut constant = true;
    for step in 1..=20 {
        // face away: the gate leaves the FOV entirely
        let away = camera_pose_at(eye, to_gate.y.atan2(to_gate.x) + std::f64::consts::PI);
        let img = raycast_depth(&gate, &g, &away, &cam);
        provider.observe(&img, &away, &cam, &gate, &encoder, 8, step as f64);
        if provider.query(&points) != frozen {
            constant = false;
        }
    }

    // closed-loop part: forced 0.3 s blackouts near every gate
    let ok = successes(batch(&BLACKOUT, blackout_scenario()));
    let pass = constant && ok >= 16;
    report(10, "object permanence", pass, &format!("cache constant {constant}, blackout {ok}/20"));
    assert!(pass, "constant {constant}, blackout {ok}/20");
}

// -- 11: control step throughput --------------------------------------------

#[test]
fn a11_control_step_throughput() {
    let params = QuadParams::sim_platform();
    let cfg = MppiConfig::desk_profile();
    let gate = GatePose::identity();
    let provider = AnalyticOracle { pose: gate, geometry: GateGeometry::standard() };
    let family = StreamFamily::new(SEED).child(11);

    let mut x = QuadState::hover_at(Vec3::new(4.0, 0.0, 1.0), &params);
    let mut nominal = ControlSequence::zeros(cfg.horizon);
    let mut times = Vec::with_capacity(41);
    for step in 0..41u64 {
        let start = Instant::now();
        let r = control_step(
            &x,
            &nominal,
            gate.center(),
            gate.center(),
            &provider,
            &cfg,
            &params,
            &family,
            step,
        );
        times.push(start.elapsed().as_secs_f64() * 1e3);
        x = dynamics::step(&x, &r.applied, &params, cfg.dt);
        nominal = r.next_sequence;
    }
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = times[times.len() / 2];
    let pass = median < 20.0;
    report(11, "control step throughput", pass, &format!("median {median:.2} ms over 41 steps"));
    assert!(pass, "median {median} ms");
}

// -- 12: determinism --------------------------------------------------------

#[test]
fn a12_determinism() {
    let cases: [(&str, &OnceLock<Vec<EpisodeResult>>, ScenarioConfig); 6] = [
        ("nominal", &NOMINAL, nominal_scenario()),
        ("pos 0.3", &POS_03, position_scenario(0.3)),
        ("pos 0.9", &POS_09, position_scenario(0.9)),
        ("yaw 30", &YAW_30, yaw_scenario(30.0)),
        ("yaw 60", &YAW_60, yaw_scenario(60.0)),
        ("blackout", &BLACKOUT, blackout_scenario()),
    ];
    let track = track();
    let mut pass = true;
    let mut mismatches = Vec::new();
    for (name, cell, scenario) in cases {
        let first = batch(cell, scenario.clone());
        let rerun = run_batch(&track, &scenario, None);
        let a = serde_json::to_string(first).unwrap();
        let b = serde_json::to_string(&rerun).unwrap();
        if a != b {
            pass = false;
            mismatches.push(name);
        }
    }
    report(
        12,
        "determinism",
        pass,
        &if mismatches.is_empty() { "all 6 batches bitwise identical".to_string() } else { format!("mismatch in {mismatches:?}") },
    );
    assert!(pass, "non-deterministic batches: {mismatches:?}");
}
