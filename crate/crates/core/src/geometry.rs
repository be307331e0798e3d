//! Rectified stereo camera model.
//!
//! Disparity convention: `d = x_right - x_left`, so a point in front of a rig
//! whose principal points share the same x coordinate has `d < 0`. With this
//! convention the reprojection
//!
//! ```text
//! [X Y Z]^T = T / (cx_l - cx_r - d) * [u - cx_l, v - cy_l, f]^T
//! ```
//!
//! is evaluated as written. Use [`from_conventional_disparity`] to ingest the
//! usual positive `x_left - x_right` disparities.
//!
//! Pixel `(i, j)` has its center at continuous coordinate `(i, j)` and covers
//! `[i - 0.5, i + 0.5) x [j - 0.5, j + 0.5)`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Denominators smaller than this (in pixels) are treated as zero.
pub const DISPARITY_EPS: f64 = 1e-9;

/// Intrinsics of a rectified stereo pair plus its baseline.
///
/// Serialized as the calibration file
/// `{focal, cx_l, cy_l, cx_r, baseline_m, width, height}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RigFile", into = "RigFile")]
pub struct StereoRig {
    focal: f64,
    cx_left: f64,
    cy_left: f64,
    cx_right: f64,
    baseline: f64,
    width: u32,
    height: u32,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RigFile {
    focal: f64,
    cx_l: f64,
    cy_l: f64,
    cx_r: f64,
    baseline_m: f64,
    width: u32,
    height: u32,
}

impl TryFrom<RigFile> for StereoRig {
    type Error = Error;

    fn try_from(f: RigFile) -> Result<Self> {
        StereoRig::new(
            f.focal,
            (f.cx_l, f.cy_l),
            f.cx_r,
            f.baseline_m,
            f.width,
            f.height,
        )
    }
}

impl From<StereoRig> for RigFile {
    fn from(r: StereoRig) -> Self {
        RigFile {
            focal: r.focal,
            cx_l: r.cx_left,
            cy_l: r.cy_left,
            cx_r: r.cx_right,
            baseline_m: r.baseline,
            width: r.width,
            height: r.height,
        }
    }
}

impl StereoRig {
    pub fn new(
        focal: f64,
        principal_left: (f64, f64),
        cx_right: f64,
        baseline: f64,
        width: u32,
        height: u32,
    ) -> Result<Self> {
        let (cx_left, cy_left) = principal_left;
        let finite = [focal, cx_left, cy_left, cx_right, baseline]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidRig("non-finite parameter".into()));
        }
        if focal <= 0.0 {
            return Err(Error::InvalidRig(format!(
                "focal length {focal} must be > 0"
            )));
        }
        if baseline <= 0.0 {
            return Err(Error::InvalidRig(format!(
                "baseline {baseline} must be > 0"
            )));
        }
        if width == 0 || height == 0 {
            return Err(Error::InvalidRig("image size must be at least 1x1".into()));
        }
        let w = width as f64;
        let h = height as f64;
        if !(0.0..w).contains(&cx_left) || !(0.0..w).contains(&cx_right) {
            return Err(Error::InvalidRig("principal x outside image".into()));
        }
        if !(0.0..h).contains(&cy_left) {
            return Err(Error::InvalidRig("principal y outside image".into()));
        }
        Ok(Self {
            focal,
            cx_left,
            cy_left,
            cx_right,
            baseline,
            width,
            height,
        })
    }

    /// A 640x480 rig with a 500 px focal length and a 0.12 m baseline.
    pub fn default_vga() -> Self {
        Self::new(500.0, (320.0, 240.0), 320.0, 0.12, 640, 480).expect("valid default rig")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        crate::io::read_json(path)
    }

    pub fn focal(&self) -> f64 {
        self.focal
    }

    pub fn principal_left(&self) -> (f64, f64) {
        (self.cx_left, self.cy_left)
    }

    pub fn cx_right(&self) -> f64 {
        self.cx_right
    }

    pub fn baseline(&self) -> f64 {
        self.baseline
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// `cx_l - cx_r`: the disparity of a point at infinite depth.
    pub fn disparity_at_infinity(&self) -> f64 {
        self.cx_left - self.cx_right
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= -0.5 && u < self.width as f64 - 0.5 && v >= -0.5 && v < self.height as f64 - 0.5
    }

    fn denominator(&self, d: f64) -> Result<f64> {
        let denominator = self.cx_left - self.cx_right - d;
        if denominator.abs() < DISPARITY_EPS {
            return Err(Error::DegenerateDisparity { denominator });
        }
        Ok(denominator)
    }

    /// Reproject pixel `(u, v)` with disparity `d` into the left camera frame.
    pub fn reproject(&self, u: f64, v: f64, d: f64) -> Result<Point3D> {
        if !self.contains(u, v) {
            return Err(Error::OutOfBounds {
                u,
                v,
                width: self.width,
                height: self.height,
            });
        }
        let scale = self.baseline / self.denominator(d)?;
        Ok(Point3D {
            x: scale * (u - self.cx_left),
            y: scale * (v - self.cy_left),
            z: scale * self.focal,
        })
    }

    /// Project a point in the left camera frame to `(u, v, d)`.
    pub fn project(&self, p: Point3D) -> Result<(f64, f64, f64)> {
        if p.z.is_nan() || p.z <= 0.0 {
            return Err(Error::NonPositiveDepth(p.z));
        }
        let u = self.focal * p.x / p.z + self.cx_left;
        let v = self.focal * p.y / p.z + self.cy_left;
        let d = self.disparity_at_infinity() - self.focal * self.baseline / p.z;
        Ok((u, v, d))
    }

    pub fn depth_to_disparity(&self, z: f64) -> Result<f64> {
        if z.is_nan() || z <= 0.0 {
            return Err(Error::NonPositiveDepth(z));
        }
        Ok(self.disparity_at_infinity() - self.focal * self.baseline / z)
    }

    pub fn disparity_to_depth(&self, d: f64) -> Result<f64> {
        let z = self.baseline * self.focal / self.denominator(d)?;
        if z <= 0.0 {
            return Err(Error::NonPositiveDepth(z));
        }
        Ok(z)
    }
}

/// Convert a conventional `x_left - x_right` disparity into this crate's
/// `x_right - x_left` convention.
pub fn from_conventional_disparity(d: f64) -> f64 {
    -d
}

/// A point in the left camera frame, meters. `z` forward, `x` right, `y` down.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point3D {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3D {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn distance(&self, other: &Point3D) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2) + (self.z - other.z).powi(2))
            .sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rig() -> StereoRig {
        StereoRig::new(100.0, (50.0, 50.0), 50.0, 0.1, 100, 100).unwrap()
    }

    #[test]
    fn principal_ray() {
        let p = rig().reproject(50.0, 50.0, -10.0).unwrap();
        assert_eq!(p, Point3D::new(0.0, 0.0, 1.0));
    }

    #[test]
    fn off_axis_pixel() {
        let p = rig().reproject(60.0, 50.0, -10.0).unwrap();
        assert!((p.x - 0.1).abs() < 1e-15);
        assert_eq!(p.y, 0.0);
        assert!((p.z - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_denominator_is_degenerate() {
        let r = rig();
        let d = r.disparity_at_infinity();
        assert!(matches!(
            r.reproject(10.0, 20.0, d),
            Err(Error::DegenerateDisparity { .. })
        ));
        assert!(matches!(
            r.disparity_to_depth(d + 1e-12),
            Err(Error::DegenerateDisparity { .. })
        ));
    }

    #[test]
    fn out_of_bounds_pixel() {
        assert!(matches!(
            rig().reproject(100.0, 10.0, -10.0),
            Err(Error::OutOfBounds { .. })
        ));
        assert!(matches!(
            rig().reproject(3.0, -0.6, -10.0),
            Err(Error::OutOfBounds { .. })
        ));
    }

    #[test]
    fn project_inverts_example() {
        let (u, v, d) = rig().project(Point3D::new(0.0, 0.0, 1.0)).unwrap();
        assert_eq!((u, v, d), (50.0, 50.0, -10.0));
    }

    #[test]
    fn disparity_tends_to_infinity_limit() {
        let r = StereoRig::new(100.0, (50.0, 50.0), 47.0, 0.1, 100, 100).unwrap();
        let (_, _, d) = r.project(Point3D::new(0.0, 0.0, 1e12)).unwrap();
        assert!((d - 3.0).abs() < 1e-9);
    }

    #[test]
    fn scalar_conversions() {
        let r = rig();
        assert_eq!(r.depth_to_disparity(1.0).unwrap(), -10.0);
        assert_eq!(r.disparity_to_depth(-5.0).unwrap(), 2.0);
        assert!(matches!(
            r.depth_to_disparity(0.0),
            Err(Error::NonPositiveDepth(_))
        ));
        assert!(matches!(
            r.project(Point3D::new(0.0, 0.0, -1.0)),
            Err(Error::NonPositiveDepth(_))
        ));
        // behind the rig
        assert!(matches!(
            r.disparity_to_depth(5.0),
            Err(Error::NonPositiveDepth(_))
        ));
    }

    #[test]
    fn conventional_disparity_is_negated() {
        let r = rig();
        let z = r
            .disparity_to_depth(from_conventional_disparity(10.0))
            .unwrap();
        assert_eq!(z, 1.0);
    }

    #[test]
    fn rejects_invalid_rigs() {
        assert!(StereoRig::new(0.0, (1.0, 1.0), 1.0, 0.1, 10, 10).is_err());
        assert!(StereoRig::new(10.0, (1.0, 1.0), 1.0, 0.0, 10, 10).is_err());
        assert!(StereoRig::new(10.0, (10.0, 1.0), 1.0, 0.1, 10, 10).is_err());
        assert!(StereoRig::new(10.0, (1.0, 1.0), 1.0, 0.1, 0, 10).is_err());
        assert!(StereoRig::new(10.0, (1.0, f64::NAN), 1.0, 0.1, 10, 10).is_err());
    }

    #[test]
    fn rig_json_schema() {
        let json = r#"{"focal":100,"cx_l":50,"cy_l":50,"cx_r":50,"baseline_m":0.1,"width":100,"height":100}"#;
        let r: StereoRig = serde_json::from_str(json).unwrap();
        assert_eq!(r, rig());
        let back = serde_json::to_string(&r).unwrap();
        assert!(back.contains("\"baseline_m\":0.1"));
        let bad = r#"{"focal":-1,"cx_l":50,"cy_l":50,"cx_r":50,"baseline_m":0.1,"width":100,"height":100}"#;
        assert!(serde_json::from_str::<StereoRig>(bad).is_err());
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    proptest! {
        #[test]
        fn collinear_with_pixel_ray(u in 0.0f64..99.0, v in 0.0f64..99.0, d in -200.0f64..-0.01) {
            let r = rig();
            let p = r.reproject(u, v, d).unwrap();
            prop_assert!(p.z > 0.0);
            let s = p.z / r.focal();
            prop_assert!((p.x - s * (u - 50.0)).abs() <= 1e-12 * (1.0 + p.x.abs()));
            prop_assert!((p.y - s * (v - 50.0)).abs() <= 1e-12 * (1.0 + p.y.abs()));
        }

        #[test]
        fn depth_decreases_with_disparity_magnitude(a in 0.01f64..100.0, delta in 1e-3f64..100.0) {
            let r = rig();
            let z1 = r.disparity_to_depth(-a).unwrap();
            let z2 = r.disparity_to_depth(-(a + delta)).unwrap();
            prop_assert!(z2 < z1);
        }

        #[test]
        fn scalar_round_trip(z in 0.05f64..100.0) {
            let r = rig();
            let back = r.disparity_to_depth(r.depth_to_disparity(z).unwrap()).unwrap();
            prop_assert!(rel_err(back, z) < 1e-9);
        }
    }
}
