use super::{UnitQuat, Vec3};
use serde::{Deserialize, Serialize};

/// Rigid transform (rotation then translation): `p' = R p + t`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RigidTransform {
    pub rotation: UnitQuat,
    pub translation: Vec3,
}

impl RigidTransform {
    pub const IDENTITY: RigidTransform =
        RigidTransform { rotation: UnitQuat::IDENTITY, translation: Vec3::ZERO };

    pub fn new(rotation: UnitQuat, translation: Vec3) -> Self {
        Self { rotation, translation }
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self { rotation: UnitQuat::IDENTITY, translation }
    }

    pub fn from_rotation(rotation: UnitQuat) -> Self {
        Self { rotation, translation: Vec3::ZERO }
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(self, other: RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation.mul(other.rotation),
            translation: self.rotation.rotate(other.translation) + self.translation,
        }
    }

    pub fn inverse(self) -> RigidTransform {
        let rot_inv = self.rotation.inverse();
        RigidTransform {
            rotation: rot_inv,
            translation: -rot_inv.rotate(self.translation),
        }
    }

    #[inline]
    pub fn transform_point(self, p: Vec3) -> Vec3 {
        self.rotation.rotate(p) + self.translation
    }

    /// Rotate a direction without translating it.
    #[inline]
    pub fn transform_vector(self, v: Vec3) -> Vec3 {
        self.rotation.rotate(v)
    }
}
