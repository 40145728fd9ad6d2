//! Synthetic depth sensing: pinhole raycasting against the gate frame,
//! sensor-noise synthesis, visibility testing, and the latent cache that
//! gives the SDF provider object permanence under occlusion.

mod cache;
mod camera;
pub mod dataset;
mod noise;
mod raycast;

pub use cache::{
    cache_update, cached_query, AnalyticGateEncoder, CachedAnalyticDecoder, CachedSdfProvider,
    DepthEncoder, LatentCache, LatentDecoder,
};
pub use camera::{forward_camera_in_body, gate_visible, CameraModel, DepthImage};
pub use noise::{apply_noise, NoiseModel};
pub use raycast::raycast_depth;
