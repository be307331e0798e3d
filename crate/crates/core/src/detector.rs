//! Depth-contrast detection: pixels sufficiently nearer than the global
//! background level are grouped into 4-connected blobs, one detection each.
//!
//! Detections from any other front end can be brought in through the same
//! JSONL schema with [`load_external_detections`].

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::depthmap::DepthMap;
use crate::error::{Error, Result};
use crate::io;
use crate::rect::PixelRect;
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionSource {
    Native,
    External,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub rect: PixelRect,
    pub confidence: f64,
    pub source: DetectionSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorParams {
    /// Minimum depth gap to the background level, meters.
    pub contrast_threshold: f64,
    /// Percentile of valid depths taken as the background level.
    pub background_percentile: f64,
    /// Smallest blob area kept, pixels.
    pub min_area: u32,
    /// Largest blob area kept, as a fraction of the image.
    pub max_area_fraction: f64,
    /// Depth gap that maps to full confidence, meters.
    pub confidence_scale: f64,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self {
            contrast_threshold: 1.0,
            background_percentile: 90.0,
            min_area: 9,
            max_area_fraction: 0.25,
            confidence_scale: 5.0,
        }
    }
}

impl DetectorParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParams(msg.to_string()));
        if !(self.contrast_threshold > 0.0 && self.contrast_threshold.is_finite()) {
            return bad("contrast_threshold must be > 0");
        }
        if !(0.0..=100.0).contains(&self.background_percentile) {
            return bad("background_percentile must be in [0, 100]");
        }
        if self.min_area < 1 {
            return bad("min_area must be >= 1");
        }
        if !(0.0..=1.0).contains(&self.max_area_fraction) {
            return bad("max_area_fraction must be in [0, 1]");
        }
        if !(self.confidence_scale > 0.0 && self.confidence_scale.is_finite()) {
            return bad("confidence_scale must be > 0");
        }
        Ok(())
    }
}

/// Background depth level: the configured percentile of valid depths.
pub fn background_level(m: &DepthMap, percentile: f64) -> Result<f64> {
    let mut valid: Vec<f64> = m.data().iter().copied().filter(|z| z.is_finite()).collect();
    if valid.is_empty() {
        return Err(Error::NoValidDepth);
    }
    Ok(stats::quantile_unsorted(&mut valid, percentile / 100.0))
}

/// Foreground mask: valid pixels nearer than `background - contrast`.
pub fn foreground_mask(m: &DepthMap, background: f64, contrast: f64) -> Vec<bool> {
    let cut = background - contrast;
    m.data().iter().map(|&z| z.is_finite() && z < cut).collect()
}

struct Component {
    rect: PixelRect,
    depths: Vec<f64>,
}

/// 4-connected components, discovered in row-major order of their first pixel.
fn components(m: &DepthMap, mask: &[bool]) -> Vec<Component> {
    let (w, h) = (m.width() as usize, m.height() as usize);
    let mut seen = vec![false; mask.len()];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        let mut depths = Vec::new();
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
            depths.push(m.data()[i]);
            let mut visit = |j: usize| {
                if mask[j] && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        out.push(Component {
            rect: PixelRect::from_corners(x0 as u32, y0 as u32, x1 as u32, y1 as u32),
            depths,
        });
    }
    out
}

/// Detect objects standing out in depth from the background.
/// Output is sorted by descending confidence; ties keep discovery order.
pub fn detect(m: &DepthMap, params: &DetectorParams) -> Result<Vec<Detection>> {
    params.validate()?;
    let background = background_level(m, params.background_percentile)?;
    let mask = foreground_mask(m, background, params.contrast_threshold);
    let max_area = params.max_area_fraction * m.width() as f64 * m.height() as f64;
    let mut dets: Vec<Detection> = components(m, &mask)
        .into_iter()
        .filter(|c| {
            let area = c.depths.len();
            area >= params.min_area as usize && area as f64 <= max_area
        })
        .map(|mut c| {
            c.depths.sort_by(f64::total_cmp);
            let median = stats::median_sorted(&c.depths);
            Detection {
                rect: c.rect,
                confidence: ((background - median) / params.confidence_scale).clamp(0.0, 1.0),
                source: DetectionSource::Native,
            }
        })
        .collect();
    dets.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
    Ok(dets)
}

/// Keep detections with `confidence >= threshold`, preserving order.
pub fn filter_by_confidence(dets: &[Detection], threshold: f64) -> Vec<Detection> {
    dets.iter()
        .filter(|d| d.confidence >= threshold)
        .copied()
        .collect()
}

/// One box of the detections JSONL schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxRecord {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub conf: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<DetectionSource>,
}

/// One line of the detections JSONL schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionsRecord {
    pub frame_id: u32,
    pub boxes: Vec<BoxRecord>,
}

impl DetectionsRecord {
    pub fn new(frame_id: u32, dets: &[Detection]) -> Self {
        Self {
            frame_id,
            boxes: dets
                .iter()
                .map(|d| BoxRecord {
                    x: d.rect.x as f64,
                    y: d.rect.y as f64,
                    w: d.rect.w as f64,
                    h: d.rect.h as f64,
                    conf: d.confidence,
                    source: Some(d.source),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExternalDetections {
    pub frames: BTreeMap<u32, Vec<Detection>>,
    /// Boxes that had to be clipped to the image, or were dropped entirely
    /// because nothing remained after clipping.
    pub clamped: usize,
}

impl ExternalDetections {
    pub fn for_frame(&self, frame_id: u32) -> &[Detection] {
        self.frames.get(&frame_id).map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Parse detections JSONL for a `width x height` image. Boxes without a
/// `source` are tagged external. Fractional box edges are rounded outward.
pub fn parse_detections(text: &str, width: u32, height: u32) -> Result<ExternalDetections> {
    let mut out = ExternalDetections::default();
    for (line, rec) in io::parse_jsonl::<DetectionsRecord>(text)? {
        let entry = out.frames.entry(rec.frame_id).or_default();
        for b in rec.boxes {
            let finite = [b.x, b.y, b.w, b.h, b.conf].iter().all(|v| v.is_finite());
            if !finite {
                return Err(Error::Parse {
                    line,
                    message: "non-finite box field".into(),
                });
            }
            if b.w < 0.0 || b.h < 0.0 {
                return Err(Error::NegativeDimension { line });
            }
            if !(0.0..=1.0).contains(&b.conf) {
                return Err(Error::Parse {
                    line,
                    message: format!("confidence {} outside [0, 1]", b.conf),
                });
            }
            let x0 = b.x.floor().max(0.0);
            let y0 = b.y.floor().max(0.0);
            let x1 = (b.x + b.w).ceil().min(width as f64);
            let y1 = (b.y + b.h).ceil().min(height as f64);
            let clipped =
                b.x < 0.0 || b.y < 0.0 || b.x + b.w > width as f64 || b.y + b.h > height as f64;
            if clipped {
                out.clamped += 1;
            }
            if x1 - x0 < 1.0 || y1 - y0 < 1.0 {
                if !clipped {
                    out.clamped += 1;
                }
                continue;
            }
            entry.push(Detection {
                rect: PixelRect::new(x0 as u32, y0 as u32, (x1 - x0) as u32, (y1 - y0) as u32),
                confidence: b.conf,
                source: b.source.unwrap_or(DetectionSource::External),
            });
        }
    }
    if out.clamped > 0 {
        log::warn!("{} detection boxes clamped to the image", out.clamped);
    }
    Ok(out)
}

pub fn load_external_detections(
    path: impl AsRef<Path>,
    width: u32,
    height: u32,
) -> Result<ExternalDetections> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_detections(&text, width, height)
}
