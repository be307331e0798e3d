//! Representative-point selection inside a detection box and 3D localization.
//!
//! Given the valid depths `Z` inside a box, a reference depth `z_ref` is
//! computed by one of three rules and the pixel whose depth is closest to it
//! represents the object:
//!
//! * [`ZrefMethod::MinDepth`]: `z_ref = min(Z)`.
//! * [`ZrefMethod::MeanBelowQ1`]: mean of the depths strictly below the first quartile.
//! * [`ZrefMethod::MedianBelowQ1`]: median of the depths strictly below the first quartile.
//!
//! The first quartile is interpolated at sorted index `(n - 1) / 4`. When no
//! depth lies strictly below it the candidate set falls back to `{min(Z)}`.
//! Ties in the closest-depth search go to the first pixel in row-major order.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::depthmap::DepthMap;
use crate::detector::Detection;
use crate::error::{Error, Result};
use crate::geometry::{Point3D, StereoRig};
use crate::rect::PixelRect;
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ZrefMethod {
    #[serde(rename = "min")]
    MinDepth,
    #[serde(rename = "meanq1")]
    MeanBelowQ1,
    #[serde(rename = "medianq1")]
    MedianBelowQ1,
}

impl ZrefMethod {
    pub const ALL: [ZrefMethod; 3] = [
        ZrefMethod::MinDepth,
        ZrefMethod::MeanBelowQ1,
        ZrefMethod::MedianBelowQ1,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ZrefMethod::MinDepth => "min",
            ZrefMethod::MeanBelowQ1 => "meanq1",
            ZrefMethod::MedianBelowQ1 => "medianq1",
        }
    }

    /// Reference depth for an ascending, nonempty sample.
    pub fn reference_depth(&self, sorted: &[f64]) -> f64 {
        let min = sorted[0];
        if *self == ZrefMethod::MinDepth {
            return min;
        }
        let q1 = stats::first_quartile_sorted(sorted);
        let below = sorted.partition_point(|&z| z < q1);
        let candidates = if below == 0 {
            &sorted[..1]
        } else {
            &sorted[..below]
        };
        match self {
            ZrefMethod::MeanBelowQ1 => stats::mean(candidates),
            _ => stats::median_sorted(candidates),
        }
    }
}

impl fmt::Display for ZrefMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for ZrefMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "min" | "1" => Ok(ZrefMethod::MinDepth),
            "meanq1" | "2" => Ok(ZrefMethod::MeanBelowQ1),
            "medianq1" | "3" => Ok(ZrefMethod::MedianBelowQ1),
            other => Err(Error::Config(format!(
                "unknown method '{other}' (expected min, meanq1 or medianq1)"
            ))),
        }
    }
}

/// The chosen pixel and the reference depth that selected it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectedPoint {
    pub pixel: (u32, u32),
    pub depth: f64,
    pub z_ref: f64,
}

pub fn select_point(m: &DepthMap, rect: PixelRect, method: ZrefMethod) -> Result<SelectedPoint> {
    let samples = m.valid_in(rect);
    if samples.is_empty() {
        return Err(Error::NoDepthInBox);
    }
    let mut sorted: Vec<f64> = samples.iter().map(|s| s.1).collect();
    sorted.sort_by(f64::total_cmp);
    let z_ref = method.reference_depth(&sorted);

    let mut best = samples[0];
    let mut best_dist = (best.1 - z_ref).abs();
    for &s in &samples[1..] {
        let dist = (s.1 - z_ref).abs();
        if dist < best_dist {
            best = s;
            best_dist = dist;
        }
    }
    Ok(SelectedPoint {
        pixel: best.0,
        depth: best.1,
        z_ref,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalizedDetection {
    pub detection: Detection,
    pub method: ZrefMethod,
    pub pixel: (u32, u32),
    pub z_ref: f64,
    pub position: Point3D,
}

/// Select the representative pixel of `det` and reproject it through the rig.
pub fn localize(
    m: &DepthMap,
    det: &Detection,
    rig: &StereoRig,
    method: ZrefMethod,
) -> Result<LocalizedDetection> {
    let sel = select_point(m, det.rect, method)?;
    let d = rig.depth_to_disparity(sel.depth)?;
    let (u, v) = (sel.pixel.0 as f64, sel.pixel.1 as f64);
    let position = rig.reproject(u, v, d)?;
    Ok(LocalizedDetection {
        detection: *det,
        method,
        pixel: sel.pixel,
        z_ref: sel.z_ref,
        position,
    })
}

/// One line of `localized.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizedRecord {
    pub frame_id: u32,
    #[serde(rename = "box")]
    pub rect: PixelRect,
    pub conf: f64,
    pub method: ZrefMethod,
    pub pixel: [u32; 2],
    pub z_ref: f64,
    pub xyz: [f64; 3],
}

impl LocalizedRecord {
    pub fn new(frame_id: u32, l: &LocalizedDetection) -> Self {
        Self {
            frame_id,
            rect: l.detection.rect,
            conf: l.detection.confidence,
            method: l.method,
            pixel: [l.pixel.0, l.pixel.1],
            z_ref: l.z_ref,
            xyz: [l.position.x, l.position.y, l.position.z],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::DetectionSource;

    fn map(width: u32, values: &[f64]) -> DepthMap {
        DepthMap::new(width, values.len() as u32 / width, values.to_vec()).unwrap()
    }

    fn worked_example() -> DepthMap {
        // 4x3, row-major: 8.0 8.0 1.6 8.0 / 1.1 8.0 2.0 8.0 / 8.0 1.0 8.0 8.0
        map(
            4,
            &[8.0, 8.0, 1.6, 8.0, 1.1, 8.0, 2.0, 8.0, 8.0, 1.0, 8.0, 8.0],
        )
    }

    #[test]
    fn worked_example_all_methods() {
        let m = worked_example();
        let all = m.bounds();
        let p = select_point(&m, all, ZrefMethod::MinDepth).unwrap();
        assert_eq!((p.pixel, p.depth, p.z_ref), ((1, 2), 1.0, 1.0));

        let p = select_point(&m, all, ZrefMethod::MeanBelowQ1).unwrap();
        assert!((p.z_ref - 3.7 / 3.0).abs() < 1e-12);
        assert_eq!((p.pixel, p.depth), ((0, 1), 1.1));

        let p = select_point(&m, all, ZrefMethod::MedianBelowQ1).unwrap();
        assert_eq!((p.pixel, p.depth, p.z_ref), ((0, 1), 1.1, 1.1));
    }

    #[test]
    fn single_pixel() {
        let m = map(3, &[f64::NAN, 3.0, f64::NAN]);
        for method in ZrefMethod::ALL {
            let p = select_point(&m, m.bounds(), method).unwrap();
            assert_eq!((p.pixel, p.depth, p.z_ref), ((1, 0), 3.0, 3.0));
        }
    }

    #[test]
    fn empty_box() {
        let m = map(2, &[f64::NAN, f64::NAN, 4.0, 4.0]);
        for method in ZrefMethod::ALL {
            assert!(matches!(
                select_point(&m, PixelRect::new(0, 0, 2, 1), method),
                Err(Error::NoDepthInBox)
            ));
        }
    }

    #[test]
    fn all_ties_fall_back_to_min() {
        let m = map(3, &[5.0, 5.0, 5.0]);
        for method in ZrefMethod::ALL {
            let p = select_point(&m, m.bounds(), method).unwrap();
            assert_eq!((p.pixel, p.z_ref), ((0, 0), 5.0));
        }
    }

    #[test]
    fn equidistant_tie_takes_first_in_scan_order() {
        // candidates {1.0, 3.0}, mean 2.0 is equally far from both
        let m = map(
            3,
            &[9.0, 3.0, 1.0, 9.0, 9.0, 9.0, 9.0, 9.0, 9.0, 9.0, 9.0, 9.0],
        );
        let p = select_point(&m, m.bounds(), ZrefMethod::MeanBelowQ1).unwrap();
        assert_eq!(p.z_ref, 2.0);
        assert_eq!(p.pixel, (1, 0));
    }

    #[test]
    fn localize_principal_point() {
        let rig = StereoRig::new(100.0, (50.0, 50.0), 50.0, 0.1, 100, 100).unwrap();
        let m = DepthMap::filled(100, 100, 1.0).unwrap();
        let det = Detection {
            rect: PixelRect::new(50, 50, 1, 1),
            confidence: 1.0,
            source: DetectionSource::Native,
        };
        let l = localize(&m, &det, &rig, ZrefMethod::MinDepth).unwrap();
        assert!((l.position.x).abs() < 1e-15);
        assert!((l.position.y).abs() < 1e-15);
        assert!((l.position.z - 1.0).abs() < 1e-12);
    }

    #[test]
    fn background_box_reports_background_depth() {
        let rig = StereoRig::new(100.0, (50.0, 50.0), 50.0, 0.1, 100, 100).unwrap();
        let m = DepthMap::filled(100, 100, 8.0).unwrap();
        let det = Detection {
            rect: PixelRect::new(10, 10, 5, 5),
            confidence: 0.9,
            source: DetectionSource::External,
        };
        for method in ZrefMethod::ALL {
            let l = localize(&m, &det, &rig, method).unwrap();
            assert!((l.position.z - 8.0).abs() < 8e-9);
        }
    }

    #[test]
    fn method_names_parse() {
        for m in ZrefMethod::ALL {
            assert_eq!(m.as_str().parse::<ZrefMethod>().unwrap(), m);
            let json = serde_json::to_string(&m).unwrap();
            assert_eq!(json, format!("\"{}\"", m.as_str()));
        }
        assert!("mode".parse::<ZrefMethod>().is_err());
    }
}
