use super::camera::{CameraModel, DepthImage};
use crate::gate_sdf::{frame_boxes, GateGeometry, GatePose};
use crate::geometry::{RigidTransform, Vec3};

/// Ray / axis-aligned box intersection (slab method). Returns the entry
/// distance along the ray, or `None` if the box is missed or behind.
#[inline]
fn ray_box(origin: Vec3, dir: Vec3, lo: Vec3, hi: Vec3) -> Option<f64> {
    let mut tmin = 0.0f64;
    let mut tmax = f64::INFINITY;
    for axis in 0..3 {
        let (o, d, l, h) = match axis {
            0 => (origin.x, dir.x, lo.x, hi.x),
            1 => (origin.y, dir.y, lo.y, hi.y),
            _ => (origin.z, dir.z, lo.z, hi.z),
        };
        if d.abs() < 1e-15 {
            if o < l || o > h {
                return None;
            }
        } else {
            let inv = 1.0 / d;
            let (t0, t1) = if inv >= 0.0 { ((l - o) * inv, (h - o) * inv) } else { ((h - o) * inv, (l - o) * inv) };
            tmin = tmin.max(t0);
            tmax = tmax.min(t1);
            if tmin > tmax {
                return None;
            }
        }
    }
    Some(tmin)
}

/// Distance along a world-space ray to the gate's solid frame, if hit
/// within `max_range`.
pub fn ray_gate_distance(
    origin_world: Vec3,
    dir_world: Vec3,
    gate: &GatePose,
    g: &GateGeometry,
    max_range: f64,
) -> Option<f64> {
    let to_gate = gate.world_to_gate();
    let origin = to_gate.transform_point(origin_world);
    let dir = to_gate.transform_vector(dir_world);
    let mut best = f64::INFINITY;
    for (lo, hi) in frame_boxes(g, 0.0) {
        if let Some(t) = ray_box(origin, dir, lo, hi) {
            best = best.min(t);
        }
    }
    (best.is_finite() && best <= max_range).then_some(best)
}

/// Render a synthetic depth frame of the gate. Per pixel: nearest
/// intersection distance along the ray with the frame solid, 0 where no
/// hit within range. The background is empty (no return).
pub fn raycast_depth(
    gate: &GatePose,
    g: &GateGeometry,
    cam_pose: &RigidTransform,
    cam: &CameraModel,
) -> DepthImage {
    let mut img = DepthImage::zeros(cam.width, cam.height);
    let origin = cam_pose.translation;
    for v in 0..cam.height {
        for u in 0..cam.width {
            let dir = cam_pose.transform_vector(cam.pixel_ray(u, v));
            if let Some(t) = ray_gate_distance(origin, dir, gate, g, cam.max_range) {
                img.set(u, v, t as f32);
            }
        }
    }
    img
}
