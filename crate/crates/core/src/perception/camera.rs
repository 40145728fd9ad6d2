use crate::gate_sdf::GatePose;
use crate::geometry::{RigidTransform, UnitQuat, Vec3};
use serde::{Deserialize, Serialize};

/// Pinhole depth camera. The camera frame is z forward, x right, y down;
/// `body_to_camera` places that frame on the vehicle body (x forward,
/// z up).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub max_range: f64,
    pub body_to_camera: RigidTransform,
}

/// Rotation taking camera coordinates into body coordinates for a
/// forward-looking camera: camera z -> body x, camera x -> -body y,
/// camera y -> -body z. This is a 120 degree turn about (-1, 1, -1)/sqrt 3.
pub fn forward_camera_in_body() -> RigidTransform {
    let axis = Vec3::new(-1.0, 1.0, -1.0);
    RigidTransform::from_rotation(UnitQuat::from_axis_angle(axis, 2.0 * std::f64::consts::FRAC_PI_3))
}

impl CameraModel {
    /// Square-pixel camera from a horizontal field of view.
    pub fn with_hfov(width: usize, height: usize, hfov: f64, max_range: f64) -> Self {
        let fx = width as f64 * 0.5 / (hfov * 0.5).tan();
        Self {
            width,
            height,
            fx,
            fy: fx,
            cx: width as f64 * 0.5,
            cy: height as f64 * 0.5,
            max_range,
            body_to_camera: forward_camera_in_body(),
        }
    }

    /// 64x48 @ 90 degree horizontal FOV default sensor.
    pub fn low_res_default() -> Self {
        Self::with_hfov(64, 48, std::f64::consts::FRAC_PI_2, 10.0)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err("focal lengths must be positive".into());
        }
        if !(0.0..=self.width as f64).contains(&self.cx)
            || !(0.0..=self.height as f64).contains(&self.cy)
        {
            return Err("principal point must lie inside the image".into());
        }
        Ok(())
    }

    /// Unit ray direction (camera frame) through the center of pixel (u, v).
    #[inline]
    pub fn pixel_ray(&self, u: usize, v: usize) -> Vec3 {
        let x = (u as f64 + 0.5 - self.cx) / self.fx;
        let y = (v as f64 + 0.5 - self.cy) / self.fy;
        Vec3::new(x, y, 1.0).normalized().expect("pinhole ray")
    }

    /// Camera pose in the world given the body pose.
    pub fn camera_pose(&self, body_pose: &RigidTransform) -> RigidTransform {
        body_pose.compose(self.body_to_camera)
    }
}

/// Row-major depth frame in meters; 0 encodes invalid / no return.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl DepthImage {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![0.0; width * height] }
    }

    #[inline]
    pub fn at(&self, u: usize, v: usize) -> f32 {
        self.data[v * self.width + u]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, d: f32) {
        self.data[v * self.width + u] = d;
    }

    pub fn valid_pixel_count(&self) -> usize {
        self.data.iter().filter(|&&d| d > 0.0).count()
    }

    /// Mean absolute difference against another frame of equal dimensions.
    pub fn l1_distance(&self, other: &DepthImage) -> f64 {
        assert_eq!(self.data.len(), other.data.len());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs() as f64)
            .sum::<f64>()
            / self.data.len() as f64
    }
}

/// Whether the gate center projects inside the image with positive depth.
/// Bounds are inclusive, so a gate exactly at the FOV edge still counts.
pub fn gate_visible(cam_pose: &RigidTransform, cam: &CameraModel, gate: &GatePose) -> bool {
    let p_cam = cam_pose.inverse().transform_point(gate.center());
    if p_cam.z <= 0.0 {
        return false;
    }
    let u = cam.fx * p_cam.x / p_cam.z + cam.cx;
    let v = cam.fy * p_cam.y / p_cam.z + cam.cy;
    (0.0..=cam.width as f64).contains(&u) && (0.0..=cam.height as f64).contains(&v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn forward_camera_axes_map_correctly() {
        let r = forward_camera_in_body();
        let fwd = r.transform_vector(Vec3::Z); // camera z in body coords
        assert_relative_eq!(fwd.x, 1.0, epsilon = 1e-12);
        let right = r.transform_vector(Vec3::X);
        assert_relative_eq!(right.y, -1.0, epsilon = 1e-12);
        let down = r.transform_vector(Vec3::Y);
        assert_relative_eq!(down.z, -1.0, epsilon = 1e-12);
    }

    #[test]
    fn hfov_focal_length() {
        let cam = CameraModel::with_hfov(64, 48, std::f64::consts::FRAC_PI_2, 10.0);
        assert_relative_eq!(cam.fx, 32.0, epsilon = 1e-12);
        cam.validate().unwrap();
    }

    #[test]
    fn gate_ahead_is_visible_behind_is_not() {
        let cam = CameraModel::low_res_default();
        // camera at origin looking along +z (identity camera pose)
        let pose = RigidTransform::IDENTITY;
        let ahead = GatePose::new(RigidTransform::from_translation(Vec3::new(0.0, 0.0, 3.0)));
        let behind = GatePose::new(RigidTransform::from_translation(Vec3::new(0.0, 0.0, -3.0)));
        assert!(gate_visible(&pose, &cam, &ahead));
        assert!(!gate_visible(&pose, &cam, &behind));
    }

    #[test]
    fn gate_at_exact_fov_edge_is_inclusive() {
        let cam = CameraModel::low_res_default();
        let pose = RigidTransform::IDENTITY;
        // 90 degree hfov: edge at x = z; u = fx * 1 + cx = 64 exactly
        let edge = GatePose::new(RigidTransform::from_translation(Vec3::new(3.0, 0.0, 3.0)));
        assert!(gate_visible(&pose, &cam, &edge));
        let outside = GatePose::new(RigidTransform::from_translation(Vec3::new(3.01, 0.0, 3.0)));
        assert!(!gate_visible(&pose, &cam, &outside));
    }
}
