use super::camera::{gate_visible, CameraModel, DepthImage};
use crate::gate_sdf::{guide_sdf, GateGeometry, GatePose};
use crate::geometry::{RigidTransform, UnitQuat, Vec3};
use crate::mppi::SdfQueryProvider;
use crate::neural_sdf::LatentCode;

/// Maps a depth frame (and the transform it was captured under) to a
/// latent code.
pub trait DepthEncoder {
    fn encode(&self, img: &DepthImage, world_to_camera: &RigidTransform) -> LatentCode;
}

/// Maps (latent, camera-frame point) to a predicted SDF value.
pub trait LatentDecoder: Sync {
    fn decode_batch(&self, z: &LatentCode, points_cam: &[Vec3]) -> Vec<f64>;
}

/// The latest valid latent and the world-to-camera transform active when
/// it was encoded. Queries through the cache are frozen in that frame,
/// which is what gives the provider object permanence under occlusion.
#[derive(Debug, Clone)]
pub struct LatentCache {
    pub z: LatentCode,
    pub world_to_camera: RigidTransform,
    pub timestamp: f64,
}

/// Refresh the cache from a new observation.
///
/// The cache is replaced only when the gate center is in view and the
/// frame carries at least `min_valid_pixels` returns; otherwise the old
/// cache (possibly `None` during cold start) is kept.
#[allow(clippy::too_many_arguments)]
pub fn cache_update(
    cache: Option<LatentCache>,
    img: &DepthImage,
    cam_pose: &RigidTransform,
    cam: &CameraModel,
    gate: &GatePose,
    encoder: &dyn DepthEncoder,
    min_valid_pixels: usize,
    timestamp: f64,
) -> Option<LatentCache> {
    if gate_visible(cam_pose, cam, gate) && img.valid_pixel_count() >= min_valid_pixels {
        let world_to_camera = cam_pose.inverse();
        Some(LatentCache {
            z: encoder.encode(img, &world_to_camera),
            world_to_camera,
            timestamp,
        })
    } else {
        cache
    }
}

/// Evaluate world-frame points through the cached latent: each point is
/// moved into the capture-time camera frame and decoded.
pub fn cached_query(cache: &LatentCache, points_world: &[Vec3], decoder: &dyn LatentDecoder) -> Vec<f64> {
    let points_cam: Vec<Vec3> =
        points_world.iter().map(|&p| cache.world_to_camera.transform_point(p)).collect();
    decoder.decode_batch(&cache.z, &points_cam)
}

/// SDF provider backed by a latent cache and a decoder. `ready` is false
/// until the first valid observation has been cached.
pub struct CachedSdfProvider<D: LatentDecoder> {
    pub cache: Option<LatentCache>,
    pub decoder: D,
}

impl<D: LatentDecoder> CachedSdfProvider<D> {
    pub fn new(decoder: D) -> Self {
        Self { cache: None, decoder }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn observe(
        &mut self,
        img: &DepthImage,
        cam_pose: &RigidTransform,
        cam: &CameraModel,
        gate: &GatePose,
        encoder: &dyn DepthEncoder,
        min_valid_pixels: usize,
        timestamp: f64,
    ) {
        self.cache = cache_update(
            self.cache.take(),
            img,
            cam_pose,
            cam,
            gate,
            encoder,
            min_valid_pixels,
            timestamp,
        );
    }
}

impl<D: LatentDecoder> SdfQueryProvider for CachedSdfProvider<D> {
    fn query(&self, points: &[Vec3]) -> Vec<f64> {
        match &self.cache {
            Some(cache) => cached_query(cache, points, &self.decoder),
            None => vec![0.0; points.len()],
        }
    }

    fn ready(&self) -> bool {
        self.cache.is_some()
    }
}

/// "Encoder" that packs the gate's capture-time camera-frame pose into the
/// latent. Paired with [`CachedAnalyticDecoder`] it exercises the cache
/// bookkeeping with the analytic field standing in for the network.
pub struct AnalyticGateEncoder {
    pub gate: GatePose,
}

impl DepthEncoder for AnalyticGateEncoder {
    fn encode(&self, _img: &DepthImage, world_to_camera: &RigidTransform) -> LatentCode {
        let gate_in_cam = world_to_camera.compose(self.gate.pose);
        let q = gate_in_cam.rotation;
        let t = gate_in_cam.translation;
        vec![q.w, q.x, q.y, q.z, t.x, t.y, t.z]
    }
}

/// Decoder counterpart: unpack the gate-in-camera pose and evaluate the
/// analytic guidance field.
pub struct CachedAnalyticDecoder {
    pub geometry: GateGeometry,
}

impl LatentDecoder for CachedAnalyticDecoder {
    fn decode_batch(&self, z: &LatentCode, points_cam: &[Vec3]) -> Vec<f64> {
        assert_eq!(z.len(), 7, "analytic latent is a packed pose");
        let gate_in_cam = RigidTransform::new(
            UnitQuat::new(z[0], z[1], z[2], z[3]),
            Vec3::new(z[4], z[5], z[6]),
        );
        let cam_from_gate = gate_in_cam.inverse();
        points_cam
            .iter()
            .map(|&p| guide_sdf(cam_from_gate.transform_point(p), &self.geometry))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gate_sdf::world_guide_sdf;
    use crate::geometry::RngStream;
    use crate::perception::raycast_depth;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn looking_at_gate(cam_position: Vec3, gate: &GatePose) -> RigidTransform {
        // point the camera z-axis at the gate center (yaw only)
        let to_gate = gate.center() - cam_position;
        let yaw = to_gate.y.atan2(to_gate.x);
        RigidTransform::new(
            UnitQuat::from_yaw(yaw).mul(super::super::camera::forward_camera_in_body().rotation),
            cam_position,
        )
    }

    fn observed_provider(
        gate: &GatePose,
        g: &GateGeometry,
        cam_pose: &RigidTransform,
    ) -> CachedSdfProvider<CachedAnalyticDecoder> {
        let cam = CameraModel::low_res_default();
        let img = raycast_depth(gate, g, cam_pose, &cam);
        let mut provider = CachedSdfProvider::new(CachedAnalyticDecoder { geometry: *g });
        provider.observe(&img, cam_pose, &cam, gate, &AnalyticGateEncoder { gate: *gate }, 20, 0.0);
        provider
    }

    #[test]
    fn visible_gate_populates_cache() {
        let gate = GatePose::identity();
        let g = GateGeometry::standard();
        let cam_pose = looking_at_gate(Vec3::new(-3.0, 0.5, 0.2), &gate);
        let provider = observed_provider(&gate, &g, &cam_pose);
        assert!(provider.ready());
    }

    #[test]
    fn occluded_gate_keeps_old_cache() {
        let gate = GatePose::identity();
        let g = GateGeometry::standard();
        let cam = CameraModel::low_res_default();
        let visible_pose = looking_at_gate(Vec3::new(-3.0, 0.0, 0.0), &gate);
        let mut provider = observed_provider(&gate, &g, &visible_pose);
        let t0 = provider.cache.as_ref().unwrap().timestamp;

        // look away: gate leaves the image, cache must persist unchanged
        let away_pose = RigidTransform::new(
            UnitQuat::from_yaw(std::f64::consts::PI)
                .mul(super::super::camera::forward_camera_in_body().rotation),
            Vec3::new(-3.0, 0.0, 0.0),
        );
        let img = raycast_depth(&gate, &g, &away_pose, &cam);
        provider.observe(&img, &away_pose, &cam, &gate, &AnalyticGateEncoder { gate }, 20, 1.0);
        assert_eq!(provider.cache.as_ref().unwrap().timestamp, t0);
    }

    #[test]
    fn alternating_visibility_tracks_last_visible_step() {
        let gate = GatePose::identity();
        let g = GateGeometry::standard();
        let cam = CameraModel::low_res_default();
        let encoder = AnalyticGateEncoder { gate };
        let mut provider = CachedSdfProvider::new(CachedAnalyticDecoder { geometry: g });
        let mut last_visible_w2c = None;
        for step in 0..10u64 {
            let visible = step % 3 != 2;
            let cam_pose = if visible {
                looking_at_gate(Vec3::new(-3.0 - step as f64 * 0.1, 0.3, 0.0), &gate)
            } else {
                RigidTransform::new(
                    UnitQuat::from_yaw(std::f64::consts::PI)
                        .mul(super::super::camera::forward_camera_in_body().rotation),
                    Vec3::new(-3.0, 0.0, 0.0),
                )
            };
            let img = raycast_depth(&gate, &g, &cam_pose, &cam);
            provider.observe(&img, &cam_pose, &cam, &gate, &encoder, 20, step as f64);
            if visible {
                last_visible_w2c = Some(cam_pose.inverse());
            }
            let cached = provider.cache.as_ref().unwrap();
            let expect = last_visible_w2c.unwrap();
            assert_relative_eq!(
                cached.world_to_camera.translation.distance(expect.translation),
                0.0,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn cached_query_matches_analytic_field() {
        let gate = GatePose::new(RigidTransform::new(
            UnitQuat::from_yaw(0.4),
            Vec3::new(2.0, -1.0, 0.5),
        ));
        let g = GateGeometry::standard();
        let cam_pose = looking_at_gate(Vec3::new(-2.0, 0.0, 0.3), &gate);
        let provider = observed_provider(&gate, &g, &cam_pose);
        let mut rng = RngStream::new(51, 0);
        let points: Vec<Vec3> = (0..200)
            .map(|_| {
                Vec3::new(
                    rng.gen_range(-4.0..4.0),
                    rng.gen_range(-4.0..4.0),
                    rng.gen_range(-2.0..2.0),
                )
            })
            .collect();
        let through_cache = provider.query(&points);
        for (p, s) in points.iter().zip(&through_cache) {
            assert_relative_eq!(*s, world_guide_sdf(*p, &gate, &g), epsilon = 1e-9);
        }
    }

    #[test]
    fn cache_freezes_the_frame_after_capture() {
        // moving the vehicle after capture must not change outputs for
        // fixed world points (object permanence)
        let gate = GatePose::identity();
        let g = GateGeometry::standard();
        let cam_pose = looking_at_gate(Vec3::new(-3.0, 0.2, 0.0), &gate);
        let provider = observed_provider(&gate, &g, &cam_pose);
        let points = [Vec3::new(0.5, 0.2, 0.1), Vec3::new(-1.0, 0.0, 0.0)];
        let before = provider.query(&points);
        // vehicle "moves": nothing about the provider changes
        let after = provider.query(&points);
        assert_eq!(before, after);
    }

    #[test]
    fn unready_provider_reports_warmup() {
        let provider =
            CachedSdfProvider::new(CachedAnalyticDecoder { geometry: GateGeometry::standard() });
        assert!(!provider.ready());
        assert_eq!(provider.query(&[Vec3::ZERO]), vec![0.0]);
    }
}
