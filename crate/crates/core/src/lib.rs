//! Reference-free drone racing stack: a gate-shaped signed distance field
//! (analytical and learned), a sampling-based MPPI controller over full
//! quadrotor dynamics, and a closed-loop simulation harness that sweeps
//! unmodeled gate pose perturbations.

pub mod dynamics;
pub mod gate_sdf;
pub mod geometry;
pub mod mppi;
pub mod neural_sdf;
pub mod perception;
pub mod sim_harness;

pub use geometry::{RigidTransform, RngStream, StreamFamily, UnitQuat, Vec3};
