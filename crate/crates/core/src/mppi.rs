//! Sampling-based MPPI controller: Gaussian perturbation of the nominal
//! control sequence, batched dynamics rollouts, the racing cost terms, the
//! exponentially weighted update, and receding-horizon shifting.

use crate::dynamics::{self, ControlInput, QuadParams, QuadState};
use crate::gate_sdf::{world_guide_sdf, GateGeometry, GatePose};
use crate::geometry::{StreamFamily, Vec3};
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// MPPI hyperparameters and cost weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MppiConfig {
    /// Rollout count M.
    pub rollouts: usize,
    /// Horizon steps K.
    pub horizon: usize,
    /// Control / integration interval (s).
    pub dt: f64,
    /// Softmax temperature.
    pub lambda: f64,
    /// Per-channel thrust-rate noise std (N/s).
    pub noise_std: [f64; 4],
    pub q_gate: f64,
    pub q_vis: f64,
    pub q_sdf: f64,
    /// Desired SDF clearance (m).
    pub d_safe: f64,
    /// Weight of the soft speed-cap penalty.
    pub q_speed: f64,
    /// Soft speed cap (m/s); `None` disables the penalty.
    pub speed_cap: Option<f64>,
    /// Evaluate rollouts across threads. Costs are bitwise identical
    /// either way.
    pub parallel: bool,
}

impl MppiConfig {
    /// Headline simulation profile: M=8192, K=20, dt=0.03. The clearance
    /// target is below the inner half-width, leaving a penalty-free
    /// corridor through the opening; larger values make hovering on the
    /// shortfall shell cheaper than crossing and the vehicle stalls at
    /// the gate.
    pub fn sim_profile() -> Self {
        Self {
            rollouts: 8192,
            horizon: 20,
            dt: 0.03,
            lambda: 0.05,
            noise_std: [3.0; 4],
            q_gate: 1.0,
            q_vis: 2.0,
            q_sdf: 100.0,
            d_safe: 0.3,
            q_speed: 10.0,
            speed_cap: None,
            parallel: true,
        }
    }

    /// Desk profile with M=1024 rollouts (the onboard configuration).
    pub fn desk_profile() -> Self {
        Self { rollouts: 1024, ..Self::sim_profile() }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.rollouts < 1 || self.horizon < 1 {
            return Err("rollouts and horizon must be >= 1".into());
        }
        if self.lambda <= 0.0 {
            return Err("lambda must be positive".into());
        }
        if self.noise_std.iter().any(|&s| s <= 0.0) {
            return Err("noise std must be positive per channel".into());
        }
        if self.d_safe < 0.0 {
            return Err("d_safe must be non-negative".into());
        }
        Ok(())
    }
}

/// A K-step sequence of thrust-rate inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSequence(pub Vec<ControlInput>);

impl ControlSequence {
    pub fn zeros(horizon: usize) -> Self {
        Self(vec![ControlInput::ZERO; horizon])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Receding-horizon shift: drop the first action, repeat the last.
    pub fn shifted(&self) -> Self {
        let mut v = self.0.clone();
        if v.len() >= 2 {
            v.rotate_left(1);
            let last = v.len() - 1;
            v[last] = v[last - 1];
        }
        Self(v)
    }
}

/// Batched SDF evaluation over world-frame points.
///
/// Implementations must be deterministic for a fixed provider state and
/// safe for concurrent read-only queries.
pub trait SdfQueryProvider: Sync {
    fn query(&self, points: &[Vec3]) -> Vec<f64>;

    /// False while the provider has no valid observation yet (cold start);
    /// the SDF cost term then contributes zero.
    fn ready(&self) -> bool {
        true
    }
}

/// Ground-truth oracle: the analytic field at the true gate pose.
#[derive(Debug, Clone)]
pub struct AnalyticOracle {
    pub pose: GatePose,
    pub geometry: GateGeometry,
}

impl SdfQueryProvider for AnalyticOracle {
    fn query(&self, points: &[Vec3]) -> Vec<f64> {
        points.iter().map(|&p| world_guide_sdf(p, &self.pose, &self.geometry)).collect()
    }
}

/// The analytic field evaluated at a corrupted pose; models perception
/// error without a learned model in the loop.
#[derive(Debug, Clone)]
pub struct PerturbedOracle {
    pub corrupted_pose: GatePose,
    pub geometry: GateGeometry,
}

impl SdfQueryProvider for PerturbedOracle {
    fn query(&self, points: &[Vec3]) -> Vec<f64> {
        points
            .iter()
            .map(|&p| world_guide_sdf(p, &self.corrupted_pose, &self.geometry))
            .collect()
    }
}

/// Draw M candidate sequences around the nominal one.
///
/// Rollout 0 is reserved as the unperturbed nominal (elite retention).
/// Each rollout draws from its own counter-based stream, so the batch is
/// independent of evaluation order.
pub fn sample_sequences(
    nominal: &ControlSequence,
    cfg: &MppiConfig,
    family: &StreamFamily,
    step_index: u64,
    rate_limit: f64,
) -> Vec<ControlSequence> {
    let mut out = Vec::with_capacity(cfg.rollouts);
    let clamped_nominal =
        ControlSequence(nominal.0.iter().map(|u| u.clamped(rate_limit)).collect());
    out.push(clamped_nominal.clone());
    let normals: [Normal<f64>; 4] =
        std::array::from_fn(|c| Normal::new(0.0, cfg.noise_std[c]).expect("positive std"));
    for m in 1..cfg.rollouts {
        let mut rng = family.rollout_stream(step_index, m as u64);
        let seq = clamped_nominal
            .0
            .iter()
            .map(|u| {
                ControlInput(std::array::from_fn(|c| u.0[c] + normals[c].sample(&mut rng)))
                    .clamped(rate_limit)
            })
            .collect();
        out.push(ControlSequence(seq));
    }
    out
}

/// Progress toward the active waypoint: the summed squared-distance
/// decrement over the horizon.
pub fn gate_progress_cost(traj: &[QuadState], wp: Vec3) -> f64 {
    let mut total = 0.0;
    for pair in traj.windows(2) {
        total += (pair[1].p - wp).norm_squared() - (pair[0].p - wp).norm_squared();
    }
    total
}

/// Yaw alignment with the line of sight to the gate center, summed over
/// k = 0..K-1. Steps where the position coincides with the gate center are
/// degenerate: they contribute zero and are counted.
pub fn perception_cost(traj: &[QuadState], gate_center: Vec3) -> (f64, usize) {
    let mut total = 0.0;
    let mut degenerate = 0;
    for state in &traj[..traj.len() - 1] {
        let dx = gate_center.x - state.p.x;
        let dy = gate_center.y - state.p.y;
        if dx.abs() < 1e-12 && dy.abs() < 1e-12 {
            degenerate += 1;
            continue;
        }
        let los = dy.atan2(dx);
        total += 1.0 - (state.q.yaw() - los).cos();
    }
    (total, degenerate)
}

/// Clearance shortfall below `d_safe`, summed over k = 0..K-1.
///
/// A provider that is not ready (cache warm-up) contributes zero and
/// raises the warm-up flag.
pub fn sdf_cost(traj: &[QuadState], provider: &dyn SdfQueryProvider, d_safe: f64) -> (f64, bool) {
    if !provider.ready() {
        return (0.0, true);
    }
    let points: Vec<Vec3> = traj[..traj.len() - 1].iter().map(|s| s.p).collect();
    let values = provider.query(&points);
    let total = values.iter().map(|&s| (d_safe - s).max(0.0)).sum();
    (total, false)
}

/// Quadratic penalty on speed above the cap, summed over all states.
pub fn speed_cost(traj: &[QuadState], cap: f64) -> f64 {
    traj.iter()
        .map(|s| {
            let over = (s.v.norm() - cap).max(0.0);
            over * over
        })
        .sum()
}

/// Per-rollout cost decomposition.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub gate: f64,
    pub vis: f64,
    pub sdf: f64,
    pub speed: f64,
    pub total: f64,
    pub sdf_warmup: bool,
    pub degenerate_yaw_steps: usize,
}

/// Weighted sum of the racing cost terms for one trajectory.
pub fn total_cost(
    traj: &[QuadState],
    wp: Vec3,
    gate_center: Vec3,
    provider: &dyn SdfQueryProvider,
    cfg: &MppiConfig,
) -> CostBreakdown {
    let gate = gate_progress_cost(traj, wp);
    let (vis, degenerate) = perception_cost(traj, gate_center);
    let (sdf, warmup) = sdf_cost(traj, provider, cfg.d_safe);
    let speed = cfg.speed_cap.map_or(0.0, |cap| speed_cost(traj, cap));
    CostBreakdown {
        gate,
        vis,
        sdf,
        speed,
        total: cfg.q_gate * gate + cfg.q_vis * vis + cfg.q_sdf * sdf + cfg.q_speed * speed,
        sdf_warmup: warmup,
        degenerate_yaw_steps: degenerate,
    }
}

/// Outcome of the exponentially weighted average.
#[derive(Debug, Clone)]
pub struct UpdateResult {
    pub sequence: ControlSequence,
    pub weights: Vec<f64>,
    /// Effective sample size 1 / sum(w^2).
    pub ess: f64,
    /// All costs were non-finite; the unperturbed sequence was returned.
    pub degenerate: bool,
}

/// Cost-weighted average of the candidate sequences.
///
/// Costs are shifted by their minimum before exponentiation; by softmax
/// algebra the weights are invariant under that shift.
pub fn weighted_update(
    sequences: &[ControlSequence],
    costs: &[f64],
    lambda: f64,
) -> UpdateResult {
    assert_eq!(sequences.len(), costs.len());
    assert!(!sequences.is_empty() && lambda > 0.0);

    let min_cost = costs.iter().copied().filter(|c| c.is_finite()).fold(f64::INFINITY, f64::min);
    if !min_cost.is_finite() {
        return UpdateResult {
            sequence: sequences[0].clone(),
            weights: vec![0.0; costs.len()],
            ess: 0.0,
            degenerate: true,
        };
    }

    let mut weights: Vec<f64> = costs
        .iter()
        .map(|&c| if c.is_finite() { (-(c - min_cost) / lambda).exp() } else { 0.0 })
        .collect();
    let norm: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= norm;
    }

    let horizon = sequences[0].len();
    let mut avg = vec![[0.0f64; 4]; horizon];
    for (seq, &w) in sequences.iter().zip(&weights) {
        if w == 0.0 {
            continue;
        }
        for (acc, u) in avg.iter_mut().zip(&seq.0) {
            for c in 0..4 {
                acc[c] += w * u.0[c];
            }
        }
    }
    let ess = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();

    UpdateResult {
        sequence: ControlSequence(avg.into_iter().map(ControlInput).collect()),
        weights,
        ess,
        degenerate: false,
    }
}

/// Per-control-step diagnostics, one JSONL record per step.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub step: u64,
    pub applied: [f64; 4],
    pub min_cost: f64,
    pub mean_cost: f64,
    pub ess: f64,
    pub best: CostBreakdown,
    pub solve_time_ms: f64,
}

/// Result of one receding-horizon control cycle.
#[derive(Debug, Clone)]
pub struct ControlStepResult {
    pub applied: ControlInput,
    pub next_sequence: ControlSequence,
    pub diagnostics: StepDiagnostics,
}

fn evaluate_rollouts(
    x: &QuadState,
    sequences: &[ControlSequence],
    wp: Vec3,
    gate_center: Vec3,
    provider: &dyn SdfQueryProvider,
    cfg: &MppiConfig,
    params: &QuadParams,
) -> Vec<CostBreakdown> {
    let eval = |seq: &ControlSequence| {
        let traj = dynamics::rollout_trajectory(x, &seq.0, params, cfg.dt);
        total_cost(&traj, wp, gate_center, provider, cfg)
    };
    if cfg.parallel {
        sequences.par_iter().map(eval).collect()
    } else {
        sequences.iter().map(eval).collect()
    }
}

/// One full MPPI cycle: sample, roll out, score, average, shift.
///
/// Returns the first action of the updated sequence, the shifted sequence
/// that seeds the next cycle, and diagnostics. Never panics on degenerate
/// costs.
pub fn control_step(
    x: &QuadState,
    nominal: &ControlSequence,
    wp: Vec3,
    gate_center: Vec3,
    provider: &dyn SdfQueryProvider,
    cfg: &MppiConfig,
    params: &QuadParams,
    family: &StreamFamily,
    step_index: u64,
) -> ControlStepResult {
    let start = std::time::Instant::now();
    let sequences = sample_sequences(nominal, cfg, family, step_index, params.thrust_rate_max);
    let breakdowns = evaluate_rollouts(x, &sequences, wp, gate_center, provider, cfg, params);
    let costs: Vec<f64> = breakdowns.iter().map(|b| b.total).collect();
    let update = weighted_update(&sequences, &costs, cfg.lambda);

    let (best_idx, min_cost) = costs
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))
        .map(|(i, &c)| (i, c))
        .unwrap_or((0, f64::INFINITY));
    let mean_cost = costs.iter().copied().filter(|c| c.is_finite()).sum::<f64>()
        / costs.len().max(1) as f64;

    let applied = update.sequence.0[0];
    let next_sequence = update.sequence.shifted();
    let diagnostics = StepDiagnostics {
        step: step_index,
        applied: applied.0,
        min_cost,
        mean_cost,
        ess: update.ess,
        best: breakdowns[best_idx],
        solve_time_ms: start.elapsed().as_secs_f64() * 1e3,
    };
    ControlStepResult { applied, next_sequence, diagnostics }
}

/// Serial-path twin of [`control_step`]'s rollout evaluation; used by tests
/// to check bitwise serial/parallel agreement.
pub fn evaluate_costs(
    x: &QuadState,
    sequences: &[ControlSequence],
    wp: Vec3,
    gate_center: Vec3,
    provider: &dyn SdfQueryProvider,
    cfg: &MppiConfig,
    params: &QuadParams,
) -> Vec<f64> {
    evaluate_rollouts(x, sequences, wp, gate_center, provider, cfg, params)
        .into_iter()
        .map(|b| b.total)
        .collect()
}
