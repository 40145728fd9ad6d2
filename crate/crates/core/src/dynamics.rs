//! Quadrotor rigid-body dynamics with per-rotor thrust states and
//! thrust-rate inputs, integrated with fixed-step RK4. Used both as the
//! simulator ground truth and by the MPPI rollout engine.

use crate::geometry::{UnitQuat, Vec3};
use serde::{Deserialize, Serialize};

/// Full vehicle state: position, velocity, attitude, body rates, and the
/// four rotor thrusts (thrusts live in the state because the control input
/// is their derivative).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadState {
    pub p: Vec3,
    pub v: Vec3,
    pub q: UnitQuat,
    pub omega: Vec3,
    pub thrusts: [f64; 4],
}

impl QuadState {
    /// Level hover at a position, rotors balanced against gravity.
    pub fn hover_at(p: Vec3, params: &QuadParams) -> Self {
        let t = params.mass * params.gravity / 4.0;
        Self {
            p,
            v: Vec3::ZERO,
            q: UnitQuat::IDENTITY,
            omega: Vec3::ZERO,
            thrusts: [t; 4],
        }
    }

    pub fn total_thrust(&self) -> f64 {
        self.thrusts.iter().sum()
    }
}

/// Thrust-rate input, N/s per rotor.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput(pub [f64; 4]);

impl ControlInput {
    pub const ZERO: ControlInput = ControlInput([0.0; 4]);

    pub fn clamped(self, limit: f64) -> Self {
        ControlInput(self.0.map(|u| u.clamp(-limit, limit)))
    }
}

/// Physical and limit parameters of the vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadParams {
    pub mass: f64,
    pub inertia: Vec3,
    pub arm_length: f64,
    /// Yaw moment per unit thrust (m).
    pub torque_coeff: f64,
    pub gravity: f64,
    /// Per-rotor thrust bound [0, T_max] (N).
    pub thrust_max: f64,
    /// Thrust-rate bound per rotor (N/s).
    pub thrust_rate_max: f64,
    /// Body-rate bound per axis (rad/s).
    pub omega_max: f64,
    /// X-configuration layout: per-rotor (x-sign, y-sign, spin direction).
    pub rotor_layout: [[f64; 3]; 4],
}

/// Diagonal-pair X layout: rotors 1,2 on one diagonal spinning one way,
/// rotors 3,4 on the other. Entries are (x-sign, y-sign, spin).
const X_LAYOUT: [[f64; 3]; 4] = [
    [1.0, -1.0, 1.0],
    [-1.0, 1.0, 1.0],
    [1.0, 1.0, -1.0],
    [-1.0, -1.0, -1.0],
];

impl QuadParams {
    /// The simulation platform profile: 370 g frame with the bounds used
    /// for the headline simulation runs (thrust-rate +-10 N/s, per-rotor
    /// thrust [0, 10] N, body rates +-10 rad/s).
    pub fn sim_platform() -> Self {
        Self {
            mass: 0.37,
            inertia: Vec3::new(0.0009, 0.0009, 0.0016),
            arm_length: 0.08,
            torque_coeff: 0.012,
            gravity: 9.81,
            thrust_max: 10.0,
            thrust_rate_max: 10.0,
            omega_max: 10.0,
            rotor_layout: X_LAYOUT,
        }
    }

    /// Hardware profile: 370 g racer with thrust-to-weight ratio 3, so
    /// total max thrust ~10.9 N (~2.72 N per rotor).
    pub fn racer_370g() -> Self {
        let mass = 0.37;
        let gravity = 9.81;
        Self {
            thrust_max: 3.0 * mass * gravity / 4.0,
            ..Self::sim_platform()
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "sim" | "sim_platform" => Some(Self::sim_platform()),
            "racer370" | "racer_370g" => Some(Self::racer_370g()),
            _ => None,
        }
    }

    /// Torque produced by the rotor thrusts (body frame).
    #[inline]
    pub fn torque(&self, thrusts: &[f64; 4]) -> Vec3 {
        let a = self.arm_length / std::f64::consts::SQRT_2;
        let mut tau = Vec3::ZERO;
        for (i, t) in thrusts.iter().enumerate() {
            let [sx, sy, spin] = self.rotor_layout[i];
            // tau = r x (0,0,T) + yaw drag, with r = (sx*a, sy*a, 0)
            tau.x += sy * a * t;
            tau.y += -sx * a * t;
            tau.z += spin * self.torque_coeff * t;
        }
        tau
    }
}

/// Time derivative of a [`QuadState`].
#[derive(Debug, Clone, Copy)]
pub struct StateDerivative {
    pub dp: Vec3,
    pub dv: Vec3,
    pub dq: [f64; 4],
    pub domega: Vec3,
    pub dthrust: [f64; 4],
}

/// Rigid-body derivative: gravity, body-z thrust, Euler rotation equation,
/// quaternion kinematics, thrust integration.
#[inline]
pub fn derivative(x: &QuadState, u: &ControlInput, params: &QuadParams) -> StateDerivative {
    let total = x.total_thrust();
    let thrust_world = x.q.rotate(Vec3::new(0.0, 0.0, total / params.mass));
    let dv = thrust_world - Vec3::new(0.0, 0.0, params.gravity);

    // qdot = 1/2 q ⊗ (0, omega)
    let (w, qx, qy, qz) = (x.q.w, x.q.x, x.q.y, x.q.z);
    let (ox, oy, oz) = (x.omega.x, x.omega.y, x.omega.z);
    let dq = [
        0.5 * (-qx * ox - qy * oy - qz * oz),
        0.5 * (w * ox + qy * oz - qz * oy),
        0.5 * (w * oy - qx * oz + qz * ox),
        0.5 * (w * oz + qx * oy - qy * ox),
    ];

    let j = params.inertia;
    let jw = Vec3::new(j.x * ox, j.y * oy, j.z * oz);
    let tau = params.torque(&x.thrusts);
    let gyro = x.omega.cross(jw);
    let domega = Vec3::new(
        (tau.x - gyro.x) / j.x,
        (tau.y - gyro.y) / j.y,
        (tau.z - gyro.z) / j.z,
    );

    StateDerivative { dp: x.v, dv, dq, domega, dthrust: u.0 }
}

#[inline]
fn advance(x: &QuadState, d: &StateDerivative, dt: f64) -> QuadState {
    QuadState {
        p: x.p + d.dp * dt,
        v: x.v + d.dv * dt,
        q: UnitQuat {
            w: x.q.w + d.dq[0] * dt,
            x: x.q.x + d.dq[1] * dt,
            y: x.q.y + d.dq[2] * dt,
            z: x.q.z + d.dq[3] * dt,
        },
        omega: x.omega + d.domega * dt,
        thrusts: [
            x.thrusts[0] + d.dthrust[0] * dt,
            x.thrusts[1] + d.dthrust[1] * dt,
            x.thrusts[2] + d.dthrust[2] * dt,
            x.thrusts[3] + d.dthrust[3] * dt,
        ],
    }
}

/// One RK4 step. The quaternion is renormalized and thrusts / body rates
/// are clamped to their bounds after integration.
pub fn step(x: &QuadState, u: &ControlInput, params: &QuadParams, dt: f64) -> QuadState {
    debug_assert!(dt > 0.0);
    let u = u.clamped(params.thrust_rate_max);

    let k1 = derivative(x, &u, params);
    let x2 = advance(x, &k1, dt * 0.5);
    let k2 = derivative(&x2, &u, params);
    let x3 = advance(x, &k2, dt * 0.5);
    let k3 = derivative(&x3, &u, params);
    let x4 = advance(x, &k3, dt);
    let k4 = derivative(&x4, &u, params);

    let combined = StateDerivative {
        dp: (k1.dp + 2.0 * k2.dp + 2.0 * k3.dp + k4.dp) / 6.0,
        dv: (k1.dv + 2.0 * k2.dv + 2.0 * k3.dv + k4.dv) / 6.0,
        dq: std::array::from_fn(|i| {
            (k1.dq[i] + 2.0 * k2.dq[i] + 2.0 * k3.dq[i] + k4.dq[i]) / 6.0
        }),
        domega: (k1.domega + 2.0 * k2.domega + 2.0 * k3.domega + k4.domega) / 6.0,
        dthrust: std::array::from_fn(|i| {
            (k1.dthrust[i] + 2.0 * k2.dthrust[i] + 2.0 * k3.dthrust[i] + k4.dthrust[i]) / 6.0
        }),
    };

    let mut next = advance(x, &combined, dt);
    next.q = next.q.renormalized();
    next.omega = Vec3::new(
        next.omega.x.clamp(-params.omega_max, params.omega_max),
        next.omega.y.clamp(-params.omega_max, params.omega_max),
        next.omega.z.clamp(-params.omega_max, params.omega_max),
    );
    for t in &mut next.thrusts {
        *t = t.clamp(0.0, params.thrust_max);
    }
    next
}

/// Roll a control sequence forward; returns K+1 states starting at `x0`.
pub fn rollout_trajectory(
    x0: &QuadState,
    controls: &[ControlInput],
    params: &QuadParams,
    dt: f64,
) -> Vec<QuadState> {
    let mut out = Vec::with_capacity(controls.len() + 1);
    out.push(*x0);
    let mut x = *x0;
    for u in controls {
        x = step(&x, u, params, dt);
        out.push(x);
    }
    out
}
