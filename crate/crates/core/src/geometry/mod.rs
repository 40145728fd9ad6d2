//! Shared 3D math: vectors, unit quaternions, rigid transforms, positional
//! encoding, and counter-based random streams.

mod encoding;
mod quat;
mod rng;
mod transform;
mod vec3;

pub use encoding::{positional_encoding, positional_encoding_into, encoding_len};
pub use quat::UnitQuat;
pub use rng::{RngStream, StreamFamily};
pub use transform::RigidTransform;
pub use vec3::Vec3;
