//! Procedural stereo depth scenes with exact ground truth.
//!
//! Scenes are unions of analytic primitives, ray cast from the left camera
//! through every pixel center. Stored depth is z-depth: camera rays are
//! parametrized with a unit z component, so the ray parameter of a hit is its
//! depth along the optical axis.

use std::f64::consts::{FRAC_PI_4, PI};
use std::path::Path;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::depthmap::{DepthMap, INVALID_DEPTH};
use crate::error::{Error, Result};
use crate::geometry::{Point3D, StereoRig};
use crate::io;
use crate::rect::PixelRect;

const HIT_EPS: f64 = 1e-9;

/// Smallest depth a speckle may take.
pub const MIN_SPECKLE_DEPTH: f64 = 0.05;

type Vec3 = Vector3<f64>;

fn v3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

/// Rotation about the camera y axis (vertical, pointing down).
fn rotate_yaw(p: Vec3, yaw: f64) -> Vec3 {
    let (s, c) = yaw.sin_cos();
    Vec3::new(c * p.x + s * p.z, p.y, -s * p.x + c * p.z)
}

/// Analytic scene primitive. Coordinates in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Primitive {
    /// Box with half extents along its local axes, rotated by `yaw` about the vertical.
    Cuboid {
        center: [f64; 3],
        half_extents: [f64; 3],
        #[serde(default)]
        yaw: f64,
    },
    Sphere {
        center: [f64; 3],
        radius: f64,
    },
    /// Infinite plane through `point`.
    Plane {
        point: [f64; 3],
        normal: [f64; 3],
    },
    /// Flat vertical-axis cylinder (rotor disc).
    Disc {
        center: [f64; 3],
        radius: f64,
        thickness: f64,
    },
}

impl Primitive {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            Primitive::Cuboid {
                center,
                half_extents,
                yaw,
            } => {
                finite(center)
                    && yaw.is_finite()
                    && half_extents.iter().all(|h| *h > 0.0 && h.is_finite())
            }
            Primitive::Sphere { center, radius } => {
                finite(center) && *radius > 0.0 && radius.is_finite()
            }
            Primitive::Plane { point, normal } => {
                finite(point) && finite(normal) && v3(*normal).norm() > 0.0
            }
            Primitive::Disc {
                center,
                radius,
                thickness,
            } => {
                finite(center)
                    && *radius > 0.0
                    && radius.is_finite()
                    && *thickness > 0.0
                    && thickness.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidScene(format!("invalid primitive {self:?}")))
        }
    }

    /// Nearest hit parameter `t > 0` along `origin + t * dir`.
    pub fn intersect(&self, origin: Vec3, dir: Vec3) -> Option<f64> {
        match self {
            Primitive::Cuboid {
                center,
                half_extents,
                yaw,
            } => {
                let o = rotate_yaw(origin - v3(*center), -yaw);
                let d = rotate_yaw(dir, -yaw);
                intersect_slabs(o, d, v3(*half_extents))
            }
            Primitive::Sphere { center, radius } => {
                let oc = origin - v3(*center);
                let a = dir.dot(&dir);
                let b = oc.dot(&dir);
                let c = oc.dot(&oc) - radius * radius;
                let disc = b * b - a * c;
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                nearest_positive((-b - sq) / a, (-b + sq) / a)
            }
            Primitive::Plane { point, normal } => {
                let n = v3(*normal);
                let denom = dir.dot(&n);
                if denom.abs() < 1e-15 {
                    return None;
                }
                let t = (v3(*point) - origin).dot(&n) / denom;
                (t > HIT_EPS).then_some(t)
            }
            Primitive::Disc {
                center,
                radius,
                thickness,
            } => intersect_disc(origin - v3(*center), dir, *radius, 0.5 * thickness),
        }
    }

    /// Apply a yaw rotation about the origin followed by a translation.
    pub fn transformed(&self, translation: Vec3, yaw: f64) -> Primitive {
        let place = |c: &[f64; 3]| -> [f64; 3] {
            let p = rotate_yaw(v3(*c), yaw) + translation;
            [p.x, p.y, p.z]
        };
        match self {
            Primitive::Cuboid {
                center,
                half_extents,
                yaw: own,
            } => Primitive::Cuboid {
                center: place(center),
                half_extents: *half_extents,
                yaw: own + yaw,
            },
            Primitive::Sphere { center, radius } => Primitive::Sphere {
                center: place(center),
                radius: *radius,
            },
            Primitive::Plane { point, normal } => {
                let n = rotate_yaw(v3(*normal), yaw);
                Primitive::Plane {
                    point: place(point),
                    normal: [n.x, n.y, n.z],
                }
            }
            Primitive::Disc {
                center,
                radius,
                thickness,
            } => Primitive::Disc {
                center: place(center),
                radius: *radius,
                thickness: *thickness,
            },
        }
    }

    /// Range of z covered by the primitive; planes are unbounded unless
    /// they are fronto-parallel.
    pub fn z_range(&self) -> (f64, f64) {
        match self {
            Primitive::Cuboid {
                center,
                half_extents,
                yaw,
            } => {
                let h = v3(*half_extents);
                let (s, c) = yaw.sin_cos();
                // z of a rotated corner: -s*x + c*z
                let reach = (s * h.x).abs() + (c * h.z).abs();
                (center[2] - reach, center[2] + reach)
            }
            Primitive::Sphere { center, radius } => (center[2] - radius, center[2] + radius),
            Primitive::Disc { center, radius, .. } => (center[2] - radius, center[2] + radius),
            Primitive::Plane { point, normal } => {
                let n = v3(*normal).normalize();
                if n.x.abs() < 1e-12 && n.y.abs() < 1e-12 {
                    (point[2], point[2])
                } else {
                    (f64::NEG_INFINITY, f64::INFINITY)
                }
            }
        }
    }

    /// Radius of a sphere about the origin enclosing the primitive.
    fn enclosing_radius(&self) -> f64 {
        match self {
            Primitive::Cuboid {
                center,
                half_extents,
                ..
            } => v3(*center).norm() + v3(*half_extents).norm(),
            Primitive::Sphere { center, radius } => v3(*center).norm() + radius,
            Primitive::Disc {
                center,
                radius,
                thickness,
            } => {
                let c = v3(*center);
                let horizontal = (c.x * c.x + c.z * c.z).sqrt() + radius;
                let vertical = c.y.abs() + 0.5 * thickness;
                (horizontal * horizontal + vertical * vertical).sqrt()
            }
            Primitive::Plane { .. } => f64::INFINITY,
        }
    }
}

fn finite(a: &[f64; 3]) -> bool {
    a.iter().all(|v| v.is_finite())
}

fn nearest_positive(t0: f64, t1: f64) -> Option<f64> {
    let (lo, hi) = if t0 <= t1 { (t0, t1) } else { (t1, t0) };
    if lo > HIT_EPS {
        Some(lo)
    } else if hi > HIT_EPS {
        Some(hi)
    } else {
        None
    }
}

fn intersect_slabs(o: Vec3, d: Vec3, h: Vec3) -> Option<f64> {
    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    for axis in 0..3 {
        if d[axis].abs() < 1e-15 {
            if o[axis].abs() > h[axis] {
                return None;
            }
            continue;
        }
        let t0 = (-h[axis] - o[axis]) / d[axis];
        let t1 = (h[axis] - o[axis]) / d[axis];
        let (t0, t1) = if t0 <= t1 { (t0, t1) } else { (t1, t0) };
        t_near = t_near.max(t0);
        t_far = t_far.min(t1);
        if t_near > t_far {
            return None;
        }
    }
    nearest_positive(t_near, t_far)
}

/// Ray against a y-axis cylinder of `radius` spanning `[-half, half]` in y.
fn intersect_disc(o: Vec3, d: Vec3, radius: f64, half: f64) -> Option<f64> {
    let r2 = radius * radius;
    let inside_radial = |t: f64| {
        let x = o.x + t * d.x;
        let z = o.z + t * d.z;
        x * x + z * z <= r2
    };
    let inside_height = |t: f64| (o.y + t * d.y).abs() <= half;
    let mut best: Option<f64> = None;
    let mut consider = |t: f64| {
        if t > HIT_EPS && best.is_none_or(|b| t < b) {
            best = Some(t);
        }
    };
    let a = d.x * d.x + d.z * d.z;
    if a > 1e-15 {
        let b = o.x * d.x + o.z * d.z;
        let c = o.x * o.x + o.z * o.z - r2;
        let disc = b * b - a * c;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            for t in [(-b - sq) / a, (-b + sq) / a] {
                if inside_height(t) {
                    consider(t);
                }
            }
        }
    }
    if d.y.abs() > 1e-15 {
        for cap in [-half, half] {
            let t = (cap - o.y) / d.y;
            if inside_radial(t) {
                consider(t);
            }
        }
    }
    best
}

/// A drone approximated by a union of primitives in its body frame
/// (origin at the body center, y down).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DroneModelFile")]
pub struct DroneModel {
    pub name: String,
    pub parts: Vec<Primitive>,
}

/// A preset name, or an object with a name and optional explicit parts.
#[derive(Deserialize)]
#[serde(untagged)]
enum DroneModelFile {
    Preset(String),
    Full {
        name: String,
        #[serde(default)]
        parts: Option<Vec<Primitive>>,
    },
}

impl TryFrom<DroneModelFile> for DroneModel {
    type Error = Error;

    fn try_from(f: DroneModelFile) -> Result<Self> {
        let model = match f {
            DroneModelFile::Full {
                name,
                parts: Some(parts),
            } => DroneModel { name, parts },
            DroneModelFile::Full { name, parts: None } | DroneModelFile::Preset(name) => {
                DroneModel::preset(&name)?
            }
        };
        model.validate()?;
        Ok(model)
    }
}

pub const PRESET_MODELS: [&str; 3] = ["ar_drone", "solo", "s800"];

struct MultirotorLayout {
    arms: usize,
    arm_length: f64,
    first_arm_angle: f64,
    body_half: [f64; 3],
    arm_width: f64,
    rotor_radius: f64,
    rotor_thickness: f64,
}

impl DroneModel {
    /// Quadrotor resembling a Parrot AR Drone, about 0.41 m across.
    pub fn ar_drone() -> Self {
        Self::multirotor(
            "ar_drone",
            MultirotorLayout {
                arms: 4,
                arm_length: 0.16,
                first_arm_angle: FRAC_PI_4,
                body_half: [0.07, 0.03, 0.07],
                arm_width: 0.04,
                rotor_radius: 0.09,
                rotor_thickness: 0.04,
            },
        )
    }

    /// Quadrotor resembling a 3DR Solo, about 0.54 m across.
    pub fn solo() -> Self {
        Self::multirotor(
            "solo",
            MultirotorLayout {
                arms: 4,
                arm_length: 0.205,
                first_arm_angle: FRAC_PI_4,
                body_half: [0.08, 0.04, 0.10],
                arm_width: 0.045,
                rotor_radius: 0.125,
                rotor_thickness: 0.04,
            },
        )
    }

    /// Hexrotor resembling a DJI S800, about 0.8 m across.
    pub fn s800() -> Self {
        Self::multirotor(
            "s800",
            MultirotorLayout {
                arms: 6,
                arm_length: 0.28,
                first_arm_angle: 0.0,
                body_half: [0.10, 0.05, 0.10],
                arm_width: 0.05,
                rotor_radius: 0.12,
                rotor_thickness: 0.05,
            },
        )
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "ar_drone" => Ok(Self::ar_drone()),
            "solo" => Ok(Self::solo()),
            "s800" => Ok(Self::s800()),
            other => Err(Error::InvalidScene(format!(
                "unknown drone model '{other}' (presets: {})",
                PRESET_MODELS.join(", ")
            ))),
        }
    }

    fn multirotor(name: &str, l: MultirotorLayout) -> Self {
        let mut parts = vec![Primitive::Cuboid {
            center: [0.0; 3],
            half_extents: l.body_half,
            yaw: 0.0,
        }];
        let half_w = 0.5 * l.arm_width;
        for i in 0..l.arms {
            let angle = l.first_arm_angle + i as f64 * 2.0 * PI / l.arms as f64;
            let (s, c) = angle.sin_cos();
            parts.push(Primitive::Cuboid {
                center: [0.5 * l.arm_length * c, 0.0, 0.5 * l.arm_length * s],
                half_extents: [0.5 * l.arm_length, half_w, half_w],
                yaw: -angle,
            });
            // rotor sits on top of the arm tip, overlapping it
            parts.push(Primitive::Disc {
                center: [l.arm_length * c, -half_w, l.arm_length * s],
                radius: l.rotor_radius,
                thickness: l.rotor_thickness,
            });
        }
        DroneModel {
            name: name.to_string(),
            parts,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.parts.is_empty() {
            return Err(Error::InvalidScene(format!(
                "model '{}' has no parts",
                self.name
            )));
        }
        for p in &self.parts {
            p.validate()?;
            if matches!(p, Primitive::Plane { .. }) {
                return Err(Error::InvalidScene(
                    "drone models cannot contain planes".into(),
                ));
            }
        }
        let d = self.bounding_diameter();
        if !(0.2..=1.5).contains(&d) {
            return Err(Error::InvalidScene(format!(
                "model '{}' bounding diameter {d:.3} m outside [0.2, 1.5]",
                self.name
            )));
        }
        Ok(())
    }

    /// Diameter of a sphere about the body center enclosing every part.
    pub fn bounding_diameter(&self) -> f64 {
        2.0 * self
            .parts
            .iter()
            .map(Primitive::enclosing_radius)
            .fold(0.0, f64::max)
    }

    /// Extent along the optical axis when the model is rotated by `yaw`.
    pub fn depth_extent(&self, yaw: f64) -> f64 {
        let (lo, hi) = self
            .parts
            .iter()
            .map(|p| p.transformed(Vec3::zeros(), yaw).z_range())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (a, b)| {
                (lo.min(a), hi.max(b))
            });
        hi - lo
    }

    /// Parts placed in the camera frame.
    pub fn placed(&self, pose: &Pose) -> Vec<Primitive> {
        let t = Vec3::new(pose.position.x, pose.position.y, pose.position.z);
        self.parts
            .iter()
            .map(|p| p.transformed(t, pose.yaw))
            .collect()
    }
}

/// Target position (meters, left-camera frame) and yaw (radians).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Point3D,
    #[serde(default)]
    pub yaw: f64,
}

impl Pose {
    pub fn new(position: Point3D, yaw: f64) -> Self {
        Self { position, yaw }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub model: DroneModel,
    pub pose: Pose,
}

/// Stereo matching noise applied after rendering.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    /// Constant per-pixel depth noise, meters.
    pub gaussian_sigma: f64,
    /// Disparity noise in pixels; adds `z^2 * sigma_d / (f * T)` meters of
    /// depth noise, growing quadratically with depth.
    pub disparity_sigma_px: f64,
    /// Probability a pixel loses its depth.
    pub dropout_rate: f64,
    /// Probability a pixel is replaced by a spurious nearer depth.
    pub speckle_rate: f64,
    /// Speckles sit up to this far in front of the true surface.
    pub speckle_depth_range: f64,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        let rate = |r: f64| (0.0..=1.0).contains(&r);
        let nonneg = |v: f64| v >= 0.0 && v.is_finite();
        if !(rate(self.dropout_rate)
            && rate(self.speckle_rate)
            && nonneg(self.gaussian_sigma)
            && nonneg(self.disparity_sigma_px)
            && nonneg(self.speckle_depth_range))
        {
            return Err(Error::InvalidScene(format!("invalid noise spec {self:?}")));
        }
        Ok(())
    }

    pub fn is_noiseless(&self) -> bool {
        self.gaussian_sigma == 0.0
            && self.disparity_sigma_px == 0.0
            && self.dropout_rate == 0.0
            && self.speckle_rate == 0.0
    }

    /// Depth noise standard deviation at depth `z`.
    pub fn sigma_at(&self, z: f64, rig: &StereoRig) -> f64 {
        self.gaussian_sigma + z * z * self.disparity_sigma_px / (rig.focal() * rig.baseline())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub rig: StereoRig,
    #[serde(default)]
    pub background: Vec<Primitive>,
    #[serde(default)]
    pub target: Option<Target>,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub seed: u64,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        for p in &self.background {
            p.validate()?;
        }
        if let Some(t) = &self.target {
            t.model.validate()?;
            if !t.pose.position.is_finite() || !t.pose.yaw.is_finite() {
                return Err(Error::InvalidScene("non-finite target pose".into()));
            }
        }
        self.noise.validate()
    }

    pub fn with_target_pose(&self, pose: Pose) -> Result<SceneSpec> {
        let mut spec = self.clone();
        let target = spec
            .target
            .as_mut()
            .ok_or_else(|| Error::InvalidScene("trajectory requires a target".into()))?;
        target.pose = pose;
        Ok(spec)
    }
}

/// Per-pixel target membership.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentationMask {
    width: u32,
    height: u32,
    data: Vec<bool>,
}

impl SegmentationMask {
    pub fn new(width: u32, height: u32, data: Vec<bool>) -> Result<Self> {
        let expected = width as usize * height as usize;
        if data.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                actual: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.data[y as usize * self.width as usize + x as usize]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|m| **m).count()
    }

    /// Tight bounding rectangle; `None` for an empty mask.
    pub fn bounding_box(&self) -> Option<PixelRect> {
        let w = self.width as usize;
        let mut bounds: Option<(u32, u32, u32, u32)> = None;
        for (i, _) in self.data.iter().enumerate().filter(|(_, m)| **m) {
            let (x, y) = ((i % w) as u32, (i / w) as u32);
            bounds = Some(match bounds {
                None => (x, y, x, y),
                Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
            });
        }
        bounds.map(|(x0, y0, x1, y1)| PixelRect::from_corners(x0, y0, x1, y1))
    }
}

/// Ground truth for one rendered frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub frame_id: u32,
    /// Tight box around the segmentation mask; `None` when the target is not visible.
    pub gt_box: Option<PixelRect>,
    pub target_position: Option<Point3D>,
    pub occlusion_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub depth: DepthMap,
    pub mask: SegmentationMask,
    pub annotation: Annotation,
}

/// Render frame 0 of `spec`.
pub fn render(spec: &SceneSpec) -> Result<Frame> {
    render_frame(spec, 0)
}

/// Render with the noise stream seeded by `spec.seed + frame_id`.
pub fn render_frame(spec: &SceneSpec, frame_id: u32) -> Result<Frame> {
    spec.validate()?;
    let target_parts = spec
        .target
        .as_ref()
        .map(|t| t.model.placed(&t.pose))
        .unwrap_or_default();
    let in_front = spec
        .background
        .iter()
        .chain(&target_parts)
        .any(|p| p.z_range().1 > 0.0);
    if !in_front {
        return Err(Error::EmptyScene);
    }

    let rig = &spec.rig;
    let (w, h) = (rig.width(), rig.height());
    let (cx, cy) = rig.principal_left();
    let f = rig.focal();
    let origin = Vec3::zeros();
    let nearest = |parts: &[Primitive], dir: Vec3| {
        parts
            .iter()
            .filter_map(|p| p.intersect(origin, dir))
            .fold(None, |best: Option<f64>, t| {
                Some(best.map_or(t, |b| b.min(t)))
            })
    };

    // (depth, visible target, target hit ignoring occluders)
    let samples: Vec<(f64, bool, bool)> = (0..h)
        .into_par_iter()
        .flat_map_iter(|row| {
            let bg = &spec.background;
            let tg = &target_parts;
            (0..w).map(move |col| {
                let dir = Vec3::new((col as f64 - cx) / f, (row as f64 - cy) / f, 1.0);
                let t_bg = nearest(bg, dir);
                let t_tg = nearest(tg, dir);
                match (t_bg, t_tg) {
                    (None, None) => (INVALID_DEPTH, false, false),
                    (Some(b), None) => (b, false, false),
                    (None, Some(t)) => (t, true, true),
                    (Some(b), Some(t)) => {
                        if t <= b {
                            (t, true, true)
                        } else {
                            (b, false, true)
                        }
                    }
                }
            })
        })
        .collect();

    let mut depth: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let mask: Vec<bool> = samples.iter().map(|s| s.1).collect();
    let unoccluded = samples.iter().filter(|s| s.2).count();
    let visible = mask.iter().filter(|m| **m).count();

    apply_noise(
        &mut depth,
        &spec.noise,
        rig,
        spec.seed.wrapping_add(frame_id as u64),
    )?;

    let depth = DepthMap::from_raw(w, h, depth)?;
    let mask = SegmentationMask::new(w, h, mask)?;
    let occlusion_fraction = if unoccluded == 0 {
        0.0
    } else {
        1.0 - visible as f64 / unoccluded as f64
    };
    let annotation = Annotation {
        frame_id,
        gt_box: mask.bounding_box(),
        target_position: spec.target.as_ref().map(|t| t.pose.position),
        occlusion_fraction,
    };
    Ok(Frame {
        depth,
        mask,
        annotation,
    })
}

fn apply_noise(depth: &mut [f64], noise: &NoiseSpec, rig: &StereoRig, seed: u64) -> Result<()> {
    if noise.is_noiseless() {
        return Ok(());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).map_err(|e| Error::Invariant(e.to_string()))?;
    let gaussian = noise.gaussian_sigma > 0.0 || noise.disparity_sigma_px > 0.0;
    for z in depth.iter_mut() {
        if !z.is_finite() {
            continue;
        }
        let truth = *z;
        let mut out = truth;
        if gaussian {
            out += noise.sigma_at(truth, rig) * unit.sample(&mut rng);
        }
        if noise.dropout_rate > 0.0 && rng.random::<f64>() < noise.dropout_rate {
            out = INVALID_DEPTH;
        } else if noise.speckle_rate > 0.0 && rng.random::<f64>() < noise.speckle_rate {
            let offset = noise.speckle_depth_range * rng.random::<f64>();
            out = (truth - offset).max(MIN_SPECKLE_DEPTH);
        }
        *z = out;
    }
    Ok(())
}

/// A scene plus the target poses to render, one frame per pose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceSpec {
    pub scene: SceneSpec,
    pub trajectory: Vec<Pose>,
}

/// Render one frame per pose. Frames are rendered in parallel; frame `i`
/// uses noise seed `seed + i`, so output does not depend on thread count.
pub fn generate_sequence(spec: &SceneSpec, trajectory: &[Pose]) -> Result<Vec<Frame>> {
    if trajectory.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    let specs = trajectory
        .iter()
        .map(|pose| spec.with_target_pose(*pose))
        .collect::<Result<Vec<_>>>()?;
    specs
        .par_iter()
        .enumerate()
        .map(|(i, s)| render_frame(s, i as u32))
        .collect()
}

/// Straight-line trajectory with `n` evenly spaced poses, endpoints included.
pub fn linear_trajectory(start: Point3D, end: Point3D, yaw: f64, n: usize) -> Vec<Pose> {
    (0..n)
        .map(|i| {
            let t = if n > 1 {
                i as f64 / (n - 1) as f64
            } else {
                0.0
            };
            let lerp = |a: f64, b: f64| a + t * (b - a);
            Pose::new(
                Point3D::new(
                    lerp(start.x, end.x),
                    lerp(start.y, end.y),
                    lerp(start.z, end.z),
                ),
                yaw,
            )
        })
        .collect()
}

pub fn frame_name(frame_id: u32, ext: &str) -> String {
    format!("{frame_id:04}.{ext}")
}

/// Write `frames/NNNN.pfm`, `masks/NNNN.pgm`, `annotations.jsonl`,
/// `rig.json` and `spec.json` under `dir`.
pub fn write_dataset(dir: &Path, spec: &SequenceSpec, frames: &[Frame]) -> Result<()> {
    for frame in frames {
        let id = frame.annotation.frame_id;
        io::write_pfm(dir.join("frames").join(frame_name(id, "pfm")), &frame.depth)?;
        io::write_mask(
            dir.join("masks").join(frame_name(id, "pgm")),
            frame.mask.width(),
            frame.mask.height(),
            frame.mask.data(),
        )?;
    }
    let annotations: Vec<&Annotation> = frames.iter().map(|f| &f.annotation).collect();
    io::write_jsonl(dir.join("annotations.jsonl"), &annotations)?;
    io::write_json(dir.join("rig.json"), &spec.scene.rig)?;
    io::write_json(dir.join("spec.json"), spec)
}

pub fn read_annotations(path: &Path) -> Result<Vec<Annotation>> {
    Ok(io::read_jsonl(path)?.into_iter().map(|(_, a)| a).collect())
}
