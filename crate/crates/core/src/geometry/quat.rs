use super::Vec3;
use serde::{Deserialize, Serialize};

/// Unit quaternion representing a 3D rotation. Kept normalized to within
/// 1e-9 after every public operation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitQuat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Default for UnitQuat {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl UnitQuat {
    pub const IDENTITY: UnitQuat = UnitQuat { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    /// Build from raw components, renormalizing.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }.renormalized()
    }

    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        let axis = axis.normalized().unwrap_or(Vec3::Z);
        let (s, c) = (angle * 0.5).sin_cos();
        Self { w: c, x: axis.x * s, y: axis.y * s, z: axis.z * s }
    }

    /// Pure yaw rotation about world z.
    pub fn from_yaw(yaw: f64) -> Self {
        Self::from_axis_angle(Vec3::Z, yaw)
    }

    pub fn norm(self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn renormalized(self) -> Self {
        let n = self.norm();
        debug_assert!(n > 1e-12, "degenerate quaternion");
        Self { w: self.w / n, x: self.x / n, y: self.y / n, z: self.z / n }
    }

    pub fn conjugate(self) -> Self {
        Self { w: self.w, x: -self.x, y: -self.y, z: -self.z }
    }

    /// Inverse rotation; for a unit quaternion this is the conjugate.
    pub fn inverse(self) -> Self {
        self.conjugate()
    }

    /// Hamilton product.
    pub fn mul(self, r: UnitQuat) -> UnitQuat {
        let q = self;
        UnitQuat {
            w: q.w * r.w - q.x * r.x - q.y * r.y - q.z * r.z,
            x: q.w * r.x + q.x * r.w + q.y * r.z - q.z * r.y,
            y: q.w * r.y - q.x * r.z + q.y * r.w + q.z * r.x,
            z: q.w * r.z + q.x * r.y - q.y * r.x + q.z * r.w,
        }
        .renormalized()
    }

    /// Rotate a vector by this quaternion.
    #[inline]
    pub fn rotate(self, v: Vec3) -> Vec3 {
        // q v q* expanded via the double-cross identity
        let u = Vec3::new(self.x, self.y, self.z);
        let t = 2.0 * u.cross(v);
        v + self.w * t + u.cross(t)
    }

    /// Yaw (ZYX intrinsic convention, world z up) in (-pi, pi].
    ///
    /// Near gimbal-degenerate orientations (body x-axis close to vertical)
    /// this is the yaw of the projected body x-axis; `yaw_is_degenerate`
    /// flags that regime.
    pub fn yaw(self) -> f64 {
        // atan2 of the rotated body x-axis projected onto the world xy plane
        let siny = 2.0 * (self.w * self.z + self.x * self.y);
        let cosy = 1.0 - 2.0 * (self.y * self.y + self.z * self.z);
        siny.atan2(cosy)
    }

    /// True when the body x-axis is within ~1 degree of vertical, where yaw
    /// extraction is ill-conditioned.
    pub fn yaw_is_degenerate(self) -> bool {
        let bx = self.rotate(Vec3::X);
        (bx.x * bx.x + bx.y * bx.y).sqrt() < 0.02
    }

    /// Draw a uniformly distributed random rotation.
    pub fn random(rng: &mut impl rand::Rng) -> Self {
        // Shoemake's method
        let u1: f64 = rng.gen();
        let u2: f64 = rng.gen();
        let u3: f64 = rng.gen();
        let tau = std::f64::consts::TAU;
        Self::new(
            (1.0 - u1).sqrt() * (tau * u2).sin(),
            (1.0 - u1).sqrt() * (tau * u2).cos(),
            u1.sqrt() * (tau * u3).sin(),
            u1.sqrt() * (tau * u3).cos(),
        )
    }
}
