//! Analytical gate-shaped signed distance field, the physical-frame
//! occupancy model, and the hybrid point-sampling strategy used to build
//! training datasets.
//!
//! The field is positive inside an hourglass-shaped frustum that funnels
//! toward the gate opening and negative outside it. The gate plane lies at
//! local x = 0.

use crate::geometry::{RigidTransform, RngStream, Vec3};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Parametric square racing gate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateGeometry {
    /// Half-width of the inner opening (m).
    pub inner_half_width: f64,
    /// Half-width of the outer frame edge (m).
    pub outer_half_width: f64,
    /// Frame extrusion depth along local x (m).
    pub thickness: f64,
    /// Cone expansion angle of the safety frustum (rad).
    pub cone_angle: f64,
}

impl GateGeometry {
    /// 1.0 m inner / 1.5 m outer diameter gate, 20 degree cone.
    pub fn standard() -> Self {
        Self {
            inner_half_width: 0.5,
            outer_half_width: 0.75,
            thickness: 0.1,
            cone_angle: 20f64.to_radians(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.inner_half_width > 0.0 && self.inner_half_width < self.outer_half_width) {
            return Err("require 0 < inner_half_width < outer_half_width".into());
        }
        if self.thickness <= 0.0 {
            return Err("thickness must be positive".into());
        }
        if !(self.cone_angle > 0.0 && self.cone_angle < std::f64::consts::FRAC_PI_2) {
            return Err("cone_angle must lie in (0, pi/2)".into());
        }
        Ok(())
    }
}

/// Rigid placement of a gate's local frame in the world.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GatePose {
    pub pose: RigidTransform,
}

impl GatePose {
    pub fn new(pose: RigidTransform) -> Self {
        Self { pose }
    }

    pub fn identity() -> Self {
        Self { pose: RigidTransform::IDENTITY }
    }

    /// World -> gate-local transform.
    pub fn world_to_gate(&self) -> RigidTransform {
        self.pose.inverse()
    }

    pub fn center(&self) -> Vec3 {
        self.pose.translation
    }
}

/// Sampling class a training point was drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleClass {
    NearSurface,
    Interior,
    CollisionProne,
    GlobalUniform,
}

impl SampleClass {
    pub fn as_str(self) -> &'static str {
        match self {
            SampleClass::NearSurface => "near-surface",
            SampleClass::Interior => "interior",
            SampleClass::CollisionProne => "collision-prone",
            SampleClass::GlobalUniform => "global-uniform",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "near-surface" => Some(SampleClass::NearSurface),
            "interior" => Some(SampleClass::Interior),
            "collision-prone" => Some(SampleClass::CollisionProne),
            "global-uniform" => Some(SampleClass::GlobalUniform),
            _ => None,
        }
    }
}

/// A query point with its ground-truth field value and sampling class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledPoint {
    pub p: Vec3,
    pub s: f64,
    pub class: SampleClass,
}

/// Per-class sample counts for dataset generation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleCounts {
    pub near_surface: usize,
    pub interior: usize,
    pub collision_prone: usize,
    pub global_uniform: usize,
}

impl SampleCounts {
    pub fn total(&self) -> usize {
        self.near_surface + self.interior + self.collision_prone + self.global_uniform
    }
}

/// Axis-aligned sampling region in the gate frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleRegion {
    pub min: Vec3,
    pub max: Vec3,
    /// Half-width of the near-surface band around the zero level set (m).
    pub surface_band: f64,
    /// Dilation of the frame solid for collision-prone samples (m).
    pub frame_dilation: f64,
}

impl Default for SampleRegion {
    fn default() -> Self {
        Self {
            min: Vec3::new(-5.0, -5.0, -5.0),
            max: Vec3::new(5.0, 5.0, 5.0),
            surface_band: 0.05,
            frame_dilation: 0.1,
        }
    }
}

/// ℓ∞ radial distance in the transverse (y, z) plane.
#[inline]
pub fn radial_distance(p: Vec3) -> f64 {
    p.y.abs().max(p.z.abs())
}

/// Guidance SDF of the hourglass frustum, gate-local frame.
///
/// Positive inside the safe funnel, zero on its boundary, negative outside.
#[inline]
pub fn guide_sdf(p: Vec3, g: &GateGeometry) -> f64 {
    g.inner_half_width + p.x.abs() * g.cone_angle.tan() - radial_distance(p)
}

/// Guidance SDF for a world-frame query against a placed gate.
#[inline]
pub fn world_guide_sdf(p_world: Vec3, pose: &GatePose, g: &GateGeometry) -> f64 {
    guide_sdf(pose.world_to_gate().transform_point(p_world), g)
}

/// Whether a gate-frame point lies inside the solid frame material
/// (a square annulus extruded along x).
#[inline]
pub fn frame_occupancy(p: Vec3, g: &GateGeometry) -> bool {
    let r = radial_distance(p);
    p.x.abs() <= g.thickness * 0.5 && r >= g.inner_half_width && r <= g.outer_half_width
}

/// The four axis-aligned boxes (gate frame) making up the solid frame,
/// optionally dilated. Used by the raycaster and collision checks.
pub fn frame_boxes(g: &GateGeometry, dilation: f64) -> [(Vec3, Vec3); 4] {
    let ht = g.thickness * 0.5 + dilation;
    let c = g.inner_half_width;
    let o = g.outer_half_width;
    [
        // left / right posts span the full outer height
        (Vec3::new(-ht, -o - dilation, -o - dilation), Vec3::new(ht, -c + dilation, o + dilation)),
        (Vec3::new(-ht, c - dilation, -o - dilation), Vec3::new(ht, o + dilation, o + dilation)),
        // top / bottom bars fill the opening width between the posts
        (Vec3::new(-ht, -c - dilation, c - dilation), Vec3::new(ht, c + dilation, o + dilation)),
        (Vec3::new(-ht, -c - dilation, -o - dilation), Vec3::new(ht, c + dilation, -c + dilation)),
    ]
}

/// Euclidean distance from a gate-frame point to the frame solid (0 inside).
pub fn frame_distance(p: Vec3, g: &GateGeometry) -> f64 {
    frame_boxes(g, 0.0)
        .iter()
        .map(|(lo, hi)| {
            let dx = (lo.x - p.x).max(0.0).max(p.x - hi.x);
            let dy = (lo.y - p.y).max(0.0).max(p.y - hi.y);
            let dz = (lo.z - p.z).max(0.0).max(p.z - hi.z);
            (dx * dx + dy * dy + dz * dz).sqrt()
        })
        .fold(f64::INFINITY, f64::min)
}

fn uniform_in(rng: &mut RngStream, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

fn uniform_in_box(rng: &mut RngStream, min: Vec3, max: Vec3) -> Vec3 {
    Vec3::new(
        uniform_in(rng, min.x, max.x),
        uniform_in(rng, min.y, max.y),
        uniform_in(rng, min.z, max.z),
    )
}

/// Draw labeled training points with the four-class hybrid strategy.
///
/// Every returned point carries `s = guide_sdf(p)` and the class that
/// produced it. Near-surface points satisfy |s| < `region.surface_band`,
/// interior points s > 0, collision-prone points lie within the dilated
/// frame solid, and global points are uniform in the region box.
pub fn sample_training_points(
    g: &GateGeometry,
    rng: &mut RngStream,
    counts: &SampleCounts,
    region: &SampleRegion,
) -> Vec<LabeledPoint> {
    let mut out = Vec::with_capacity(counts.total());
    let tan_a = g.cone_angle.tan();

    // Near-surface: construct points on the hourglass boundary square and
    // perturb radially within the band, so |s| < band by construction.
    for _ in 0..counts.near_surface {
        let x = uniform_in(rng, region.min.x, region.max.x);
        let half = g.inner_half_width + x.abs() * tan_a;
        let delta = uniform_in(rng, -region.surface_band, region.surface_band);
        let r = (half + delta).max(1e-6);
        // walk the square perimeter of half-width r
        let t = uniform_in(rng, -r, r);
        let (y, z) = match rng.gen_range(0..4u32) {
            0 => (r, t),
            1 => (-r, t),
            2 => (t, r),
            _ => (t, -r),
        };
        let p = Vec3::new(x, y, z);
        out.push(LabeledPoint { p, s: guide_sdf(p, g), class: SampleClass::NearSurface });
    }

    // Interior: rejection-sample inside the safe funnel.
    let mut produced = 0;
    while produced < counts.interior {
        let p = uniform_in_box(rng, region.min, region.max);
        let s = guide_sdf(p, g);
        if s > 0.0 {
            out.push(LabeledPoint { p, s, class: SampleClass::Interior });
            produced += 1;
        }
    }

    // Collision-prone: uniform inside the dilated frame boxes.
    let boxes = frame_boxes(g, region.frame_dilation);
    for _ in 0..counts.collision_prone {
        let (lo, hi) = boxes[rng.gen_range(0..4) as usize];
        let p = uniform_in_box(rng, lo, hi);
        out.push(LabeledPoint { p, s: guide_sdf(p, g), class: SampleClass::CollisionProne });
    }

    // Global uniform background context.
    for _ in 0..counts.global_uniform {
        let p = uniform_in_box(rng, region.min, region.max);
        out.push(LabeledPoint { p, s: guide_sdf(p, g), class: SampleClass::GlobalUniform });
    }

    out
}

/// Write labeled points as `class,x,y,z,s` CSV.
pub fn write_points_csv<W: std::io::Write>(
    points: &[LabeledPoint],
    w: &mut W,
) -> std::io::Result<()> {
    writeln!(w, "class,x,y,z,s")?;
    for pt in points {
        writeln!(w, "{},{},{},{},{}", pt.class.as_str(), pt.p.x, pt.p.y, pt.p.z, pt.s)?;
    }
    Ok(())
}

/// Parse the CSV written by [`write_points_csv`].
pub fn read_points_csv<R: std::io::BufRead>(r: R) -> std::io::Result<Vec<LabeledPoint>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let parse = |f: Option<&str>| -> std::io::Result<f64> {
            f.and_then(|v| v.parse().ok()).ok_or_else(|| {
                std::io::Error::new(std::io::ErrorKind::InvalidData, format!("bad csv line: {line}"))
            })
        };
        let mut fields = line.split(',');
        let class = fields
            .next()
            .and_then(SampleClass::parse)
            .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::InvalidData, "bad class"))?;
        let x = parse(fields.next())?;
        let y = parse(fields.next())?;
        let z = parse(fields.next())?;
        let s = parse(fields.next())?;
        out.push(LabeledPoint { p: Vec3::new(x, y, z), s, class });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::UnitQuat;
    use approx::assert_relative_eq;

    #[test]
    fn radial_distance_examples() {
        assert_eq!(radial_distance(Vec3::new(5.0, 0.0, 0.0)), 0.0);
        assert_eq!(radial_distance(Vec3::new(0.0, 0.3, -0.7)), 0.7);
        for a in [-2.0, -0.1, 0.0, 0.4, 3.0] {
            assert_eq!(radial_distance(Vec3::new(9.0, a, a)), a.abs());
            assert_eq!(radial_distance(Vec3::new(9.0, -a, a)), a.abs());
        }
    }

    #[test]
    fn guide_sdf_at_gate_center_is_inner_half_width() {
        let g = GateGeometry::standard();
        assert_relative_eq!(guide_sdf(Vec3::ZERO, &g), 0.5);
    }

    #[test]
    fn guide_sdf_zero_at_opening_edge() {
        let g = GateGeometry::standard();
        assert_relative_eq!(guide_sdf(Vec3::new(0.0, 0.5, 0.0), &g), 0.0);
    }

    #[test]
    fn guide_sdf_on_axis_two_meters_out() {
        let g = GateGeometry::standard();
        // independent tan evaluation
        let expected = 0.5 + 2.0 * (20f64 * std::f64::consts::PI / 180.0).tan();
        assert_relative_eq!(guide_sdf(Vec3::new(2.0, 0.0, 0.0), &g), expected, epsilon = 1e-12);
        assert!((expected - 1.2279).abs() < 1e-3);
    }

    #[test]
    fn guide_sdf_symmetries() {
        let g = GateGeometry::standard();
        let mut rng = RngStream::new(5, 0);
        for _ in 0..1000 {
            let p = uniform_in_box(&mut rng, Vec3::new(-4.0, -4.0, -4.0), Vec3::new(4.0, 4.0, 4.0));
            let s = guide_sdf(p, &g);
            assert_eq!(s, guide_sdf(Vec3::new(-p.x, p.y, p.z), &g));
            assert_eq!(s, guide_sdf(Vec3::new(p.x, -p.y, p.z), &g));
            assert_eq!(s, guide_sdf(Vec3::new(p.x, p.y, -p.z), &g));
        }
    }

    #[test]
    fn funneling_monotonicity_in_x() {
        let g = GateGeometry::standard();
        let mut rng = RngStream::new(6, 0);
        for _ in 0..1000 {
            let y = rng.gen_range(-3.0..3.0);
            let z = rng.gen_range(-3.0..3.0);
            let x1: f64 = rng.gen_range(-5.0..5.0);
            let x2: f64 = rng.gen_range(-5.0..5.0);
            let (near, far) = if x1.abs() <= x2.abs() { (x1, x2) } else { (x2, x1) };
            assert!(
                guide_sdf(Vec3::new(near, y, z), &g) <= guide_sdf(Vec3::new(far, y, z), &g) + 1e-12
            );
        }
    }

    #[test]
    fn zero_level_set_is_exact() {
        let g = GateGeometry::standard();
        for x in [-3.0, -0.5, 0.0, 1.2, 4.0] {
            let r = g.inner_half_width + (x as f64).abs() * g.cone_angle.tan();
            assert_relative_eq!(guide_sdf(Vec3::new(x, r, 0.1), &g), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn world_guide_sdf_identity_pose_matches_local() {
        let g = GateGeometry::standard();
        let pose = GatePose::identity();
        let p = Vec3::new(1.0, 0.2, -0.4);
        assert_eq!(world_guide_sdf(p, &pose, &g), guide_sdf(p, &g));
    }

    #[test]
    fn world_guide_sdf_translated_gate() {
        let g = GateGeometry::standard();
        let pose = GatePose::new(RigidTransform::from_translation(Vec3::X));
        assert_relative_eq!(world_guide_sdf(Vec3::X, &pose, &g), g.inner_half_width);
    }

    #[test]
    fn world_guide_sdf_matches_two_path_evaluation() {
        let g = GateGeometry::standard();
        let mut rng = RngStream::new(8, 0);
        for _ in 0..500 {
            let pose = GatePose::new(RigidTransform::new(
                UnitQuat::random(&mut rng),
                uniform_in_box(&mut rng, Vec3::new(-3.0, -3.0, -3.0), Vec3::new(3.0, 3.0, 3.0)),
            ));
            let p = uniform_in_box(&mut rng, Vec3::new(-6.0, -6.0, -6.0), Vec3::new(6.0, 6.0, 6.0));
            // oracle: compose the inverse explicitly, then evaluate locally
            let local = pose.pose.inverse().transform_point(p);
            assert_relative_eq!(
                world_guide_sdf(p, &pose, &g),
                guide_sdf(local, &g),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn frame_occupancy_examples() {
        let g = GateGeometry::standard();
        assert!(!frame_occupancy(Vec3::ZERO, &g));
        assert!(frame_occupancy(Vec3::new(0.0, 0.6, 0.0), &g));
        assert!(!frame_occupancy(Vec3::new(1.0, 0.6, 0.0), &g));
    }

    #[test]
    fn frame_boxes_union_equals_occupancy() {
        let g = GateGeometry::standard();
        let boxes = frame_boxes(&g, 0.0);
        let mut rng = RngStream::new(9, 0);
        for _ in 0..5000 {
            let p = uniform_in_box(&mut rng, Vec3::new(-0.2, -1.0, -1.0), Vec3::new(0.2, 1.0, 1.0));
            let in_union = boxes.iter().any(|(lo, hi)| {
                p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y && p.z >= lo.z && p.z <= hi.z
            });
            assert_eq!(in_union, frame_occupancy(p, &g), "at {p:?}");
        }
    }

    #[test]
    fn occupancy_implies_nonpositive_sdf_at_gate_plane() {
        let g = GateGeometry::standard();
        let mut rng = RngStream::new(10, 0);
        for _ in 0..2000 {
            let p = uniform_in_box(&mut rng, Vec3::new(-0.05, -1.0, -1.0), Vec3::new(0.05, 1.0, 1.0));
            if frame_occupancy(p, &g) {
                assert!(guide_sdf(p, &g) <= p.x.abs() * g.cone_angle.tan() + 1e-12);
            }
        }
    }

    #[test]
    fn sampling_classes_satisfy_their_posts() {
        let g = GateGeometry::standard();
        let region = SampleRegion::default();
        let mut rng = RngStream::new(11, 0);
        let counts = SampleCounts {
            near_surface: 500,
            interior: 500,
            collision_prone: 500,
            global_uniform: 500,
        };
        let pts = sample_training_points(&g, &mut rng, &counts, &region);
        assert_eq!(pts.len(), 2000);
        for pt in &pts {
            // every point's label re-derives from the analytic field
            assert_relative_eq!(pt.s, guide_sdf(pt.p, &g), epsilon = 1e-12);
            match pt.class {
                SampleClass::NearSurface => assert!(pt.s.abs() < region.surface_band + 1e-9),
                SampleClass::Interior => assert!(pt.s > 0.0),
                SampleClass::CollisionProne => {
                    // chebyshev distance to the frame solid (box dilation metric)
                    let cheb = frame_boxes(&g, 0.0)
                        .iter()
                        .map(|(lo, hi)| {
                            let dx = (lo.x - pt.p.x).max(0.0).max(pt.p.x - hi.x);
                            let dy = (lo.y - pt.p.y).max(0.0).max(pt.p.y - hi.y);
                            let dz = (lo.z - pt.p.z).max(0.0).max(pt.p.z - hi.z);
                            dx.max(dy).max(dz)
                        })
                        .fold(f64::INFINITY, f64::min);
                    assert!(cheb <= region.frame_dilation + 1e-9);
                }
                SampleClass::GlobalUniform => {
                    assert!(pt.p.x >= region.min.x && pt.p.x <= region.max.x);
                }
            }
        }
    }

    #[test]
    fn zero_counts_give_empty_output() {
        let g = GateGeometry::standard();
        let mut rng = RngStream::new(12, 0);
        let counts =
            SampleCounts { near_surface: 0, interior: 0, collision_prone: 0, global_uniform: 0 };
        assert!(sample_training_points(&g, &mut rng, &counts, &SampleRegion::default()).is_empty());
    }

    #[test]
    fn points_csv_round_trip() {
        let g = GateGeometry::standard();
        let mut rng = RngStream::new(13, 0);
        let counts =
            SampleCounts { near_surface: 5, interior: 5, collision_prone: 5, global_uniform: 5 };
        let pts = sample_training_points(&g, &mut rng, &counts, &SampleRegion::default());
        let mut buf = Vec::new();
        write_points_csv(&pts, &mut buf).unwrap();
        let back = read_points_csv(std::io::BufReader::new(&buf[..])).unwrap();
        assert_eq!(pts.len(), back.len());
        for (a, b) in pts.iter().zip(&back) {
            assert_eq!(a.class, b.class);
            assert_relative_eq!(a.s, b.s, epsilon = 1e-12);
        }
    }
}
