//! On-disk dataset container: a directory of records, each holding a clean
//! and a noisy depth frame (flat little-endian f32, row-major, with a text
//! header carrying dimensions, intrinsics, and poses) plus its point-SDF
//! pairs as CSV.

use super::camera::{CameraModel, DepthImage};
use super::noise::{apply_noise, NoiseModel};
use super::raycast::raycast_depth;
use crate::gate_sdf::{
    guide_sdf, read_points_csv, sample_training_points, write_points_csv, GateGeometry, GatePose,
    LabeledPoint, SampleClass, SampleCounts, SampleRegion,
};
use crate::geometry::{RigidTransform, RngStream, UnitQuat, Vec3};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed record: {0}")]
    Format(String),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// One training record: a clean/noisy depth pair and its labeled query
/// points in the camera frame.
#[derive(Debug, Clone)]
pub struct DatasetRecord {
    pub clean: DepthImage,
    pub noisy: DepthImage,
    /// Camera-frame points with analytic SDF labels.
    pub points: Vec<LabeledPoint>,
    pub camera: CameraModel,
    pub world_to_camera: RigidTransform,
    /// Gate-local frame expressed in camera coordinates at capture time.
    pub gate_in_camera: RigidTransform,
}

/// Dataset-level bookkeeping written once per generation run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub records: usize,
    pub points_per_record: usize,
    pub seed: u64,
    pub config_fingerprint: String,
    pub geometry: GateGeometry,
}

fn record_dir(root: &Path, index: usize) -> PathBuf {
    root.join(format!("{index:06}"))
}

fn write_transform(w: &mut impl Write, name: &str, t: &RigidTransform) -> std::io::Result<()> {
    let q = t.rotation;
    let p = t.translation;
    writeln!(w, "{name} {} {} {} {} {} {} {}", q.w, q.x, q.y, q.z, p.x, p.y, p.z)
}

fn parse_transform(fields: &[&str]) -> Result<RigidTransform, DatasetError> {
    if fields.len() != 7 {
        return Err(DatasetError::Format("transform needs 7 numbers".into()));
    }
    let nums: Vec<f64> = fields
        .iter()
        .map(|f| f.parse().map_err(|_| DatasetError::Format(format!("bad number {f}"))))
        .collect::<Result<_, _>>()?;
    Ok(RigidTransform::new(
        UnitQuat::new(nums[0], nums[1], nums[2], nums[3]),
        Vec3::new(nums[4], nums[5], nums[6]),
    ))
}

fn write_depth(path: &Path, img: &DepthImage) -> std::io::Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    for d in &img.data {
        w.write_all(&d.to_le_bytes())?;
    }
    Ok(())
}

fn read_depth(path: &Path, width: usize, height: usize) -> Result<DepthImage, DatasetError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() != width * height * 4 {
        return Err(DatasetError::Format(format!(
            "depth payload {} bytes, expected {}",
            bytes.len(),
            width * height * 4
        )));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(DepthImage { width, height, data })
}

/// Persist one record under `root/<index padded to 6 digits>/`.
pub fn write_record(root: &Path, index: usize, rec: &DatasetRecord) -> Result<(), DatasetError> {
    let dir = record_dir(root, index);
    std::fs::create_dir_all(&dir)?;

    let mut header = BufWriter::new(std::fs::File::create(dir.join("header.txt"))?);
    writeln!(header, "width {}", rec.camera.width)?;
    writeln!(header, "height {}", rec.camera.height)?;
    writeln!(
        header,
        "intrinsics {} {} {} {} {}",
        rec.camera.fx, rec.camera.fy, rec.camera.cx, rec.camera.cy, rec.camera.max_range
    )?;
    write_transform(&mut header, "world_to_camera", &rec.world_to_camera)?;
    write_transform(&mut header, "gate_in_camera", &rec.gate_in_camera)?;
    header.flush()?;

    write_depth(&dir.join("clean.f32"), &rec.clean)?;
    write_depth(&dir.join("noisy.f32"), &rec.noisy)?;

    let mut points = BufWriter::new(std::fs::File::create(dir.join("points.csv"))?);
    write_points_csv(&rec.points, &mut points)?;
    points.flush()?;
    Ok(())
}

/// Load the record stored under `root/<index>/`.
pub fn read_record(root: &Path, index: usize) -> Result<DatasetRecord, DatasetError> {
    let dir = record_dir(root, index);
    let header = BufReader::new(std::fs::File::open(dir.join("header.txt"))?);
    let mut width = 0usize;
    let mut height = 0usize;
    let mut camera = CameraModel::low_res_default();
    let mut world_to_camera = RigidTransform::IDENTITY;
    let mut gate_in_camera = RigidTransform::IDENTITY;
    for line in header.lines() {
        let line = line?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields.first().copied() {
            Some("width") => {
                width = fields[1].parse().map_err(|_| DatasetError::Format("width".into()))?
            }
            Some("height") => {
                height = fields[1].parse().map_err(|_| DatasetError::Format("height".into()))?
            }
            Some("intrinsics") => {
                let nums: Vec<f64> = fields[1..]
                    .iter()
                    .map(|f| f.parse().map_err(|_| DatasetError::Format("intrinsics".into())))
                    .collect::<Result<_, _>>()?;
                if nums.len() != 5 {
                    return Err(DatasetError::Format("intrinsics needs 5 numbers".into()));
                }
                camera.fx = nums[0];
                camera.fy = nums[1];
                camera.cx = nums[2];
                camera.cy = nums[3];
                camera.max_range = nums[4];
            }
            Some("world_to_camera") => world_to_camera = parse_transform(&fields[1..])?,
            Some("gate_in_camera") => gate_in_camera = parse_transform(&fields[1..])?,
            _ => {}
        }
    }
    if width == 0 || height == 0 {
        return Err(DatasetError::Format("missing image dimensions".into()));
    }
    camera.width = width;
    camera.height = height;

    let clean = read_depth(&dir.join("clean.f32"), width, height)?;
    let noisy = read_depth(&dir.join("noisy.f32"), width, height)?;
    let points = read_points_csv(BufReader::new(std::fs::File::open(dir.join("points.csv"))?))?;

    Ok(DatasetRecord { clean, noisy, points, camera, world_to_camera, gate_in_camera })
}

pub fn write_manifest(root: &Path, manifest: &DatasetManifest) -> Result<(), DatasetError> {
    let f = std::fs::File::create(root.join("manifest.json"))?;
    serde_json::to_writer_pretty(BufWriter::new(f), manifest)?;
    Ok(())
}

pub fn read_manifest(root: &Path) -> Result<DatasetManifest, DatasetError> {
    let f = std::fs::File::open(root.join("manifest.json"))?;
    Ok(serde_json::from_reader(BufReader::new(f))?)
}

/// Pose-sampling envelope for dataset generation: where the camera may sit
/// relative to the gate.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PoseSampling {
    pub min_distance: f64,
    pub max_distance: f64,
    /// Max bearing of the camera position off the gate axis (rad).
    pub max_offset_angle: f64,
    /// Max vertical offset (m).
    pub max_height_offset: f64,
    /// Jitter of the look-at direction (rad).
    pub aim_jitter: f64,
}

impl Default for PoseSampling {
    fn default() -> Self {
        Self {
            min_distance: 1.5,
            max_distance: 6.0,
            max_offset_angle: 0.6,
            max_height_offset: 1.0,
            aim_jitter: 0.12,
        }
    }
}

/// Draw a camera pose looking roughly at the gate from the front.
pub fn sample_camera_pose(
    gate: &GatePose,
    sampling: &PoseSampling,
    rng: &mut RngStream,
) -> RigidTransform {
    let dist = rng.gen_range(sampling.min_distance..sampling.max_distance);
    let bearing = rng.gen_range(-sampling.max_offset_angle..sampling.max_offset_angle);
    let height = rng.gen_range(-sampling.max_height_offset..sampling.max_height_offset);
    // position in the gate frame, on the +x side
    let pos_gate =
        Vec3::new(dist * bearing.cos(), dist * bearing.sin(), height * (dist / sampling.max_distance));
    let pos_world = gate.pose.transform_point(pos_gate);

    let to_gate = gate.center() - pos_world;
    let yaw = to_gate.y.atan2(to_gate.x) + rng.gen_range(-sampling.aim_jitter..sampling.aim_jitter);
    let pitch = (-to_gate.z).atan2((to_gate.x * to_gate.x + to_gate.y * to_gate.y).sqrt())
        + rng.gen_range(-sampling.aim_jitter..sampling.aim_jitter);
    let body = UnitQuat::from_yaw(yaw).mul(UnitQuat::from_axis_angle(Vec3::Y, pitch));
    RigidTransform::new(body.mul(super::camera::forward_camera_in_body().rotation), pos_world)
}

/// Render, corrupt, and label one record.
pub fn generate_record(
    g: &GateGeometry,
    gate: &GatePose,
    cam_pose: &RigidTransform,
    cam: &CameraModel,
    noise: &NoiseModel,
    counts: &SampleCounts,
    region: &SampleRegion,
    rng: &mut RngStream,
) -> DatasetRecord {
    let clean = raycast_depth(gate, g, cam_pose, cam);
    let noisy = apply_noise(&clean, noise, rng);
    let world_to_camera = cam_pose.inverse();
    let gate_in_camera = world_to_camera.compose(gate.pose);

    // gate-anchored classes, moved into the camera frame
    let anchored = SampleCounts { global_uniform: 0, ..*counts };
    let mut points: Vec<LabeledPoint> = sample_training_points(g, rng, &anchored, region)
        .into_iter()
        .map(|pt| LabeledPoint { p: gate_in_camera.transform_point(pt.p), ..pt })
        .collect();

    // global uniform context drawn in the camera frustum
    let cam_from_gate = gate_in_camera.inverse();
    for _ in 0..counts.global_uniform {
        let z = rng.gen_range(0.3..cam.max_range);
        let u = rng.gen_range(0.0..cam.width as f64);
        let v = rng.gen_range(0.0..cam.height as f64);
        let p_cam = Vec3::new(z * (u - cam.cx) / cam.fx, z * (v - cam.cy) / cam.fy, z);
        let s = guide_sdf(cam_from_gate.transform_point(p_cam), g);
        points.push(LabeledPoint { p: p_cam, s, class: SampleClass::GlobalUniform });
    }

    DatasetRecord { clean, noisy, points, camera: *cam, world_to_camera, gate_in_camera }
}
