//! Metric depth maps and their 8-bit, 3-channel encoding.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rect::PixelRect;

/// Marker stored for pixels that carry no depth.
pub const INVALID_DEPTH: f64 = f64::NAN;

/// Number of levels in the 8-bit encoding.
pub const LEVELS: u32 = 256;

#[inline]
pub fn is_valid_depth(z: f64) -> bool {
    z.is_finite() && z > 0.0
}

/// Row-major grid of depths along the optical axis, meters.
///
/// Every stored value is either [`INVALID_DEPTH`] or finite and positive.
#[derive(Debug, Clone)]
pub struct DepthMap {
    width: u32,
    height: u32,
    data: Vec<f64>,
}

impl PartialEq for DepthMap {
    /// Bitwise comparison, so two invalid pixels compare equal.
    fn eq(&self, other: &Self) -> bool {
        self.width == other.width
            && self.height == other.height
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl DepthMap {
    /// Build from row-major data, rejecting values that are neither valid
    /// depths nor NaN.
    pub fn new(width: u32, height: u32, data: Vec<f64>) -> Result<Self> {
        check_len(width, height, data.len())?;
        if let Some((index, &value)) = data
            .iter()
            .enumerate()
            .find(|(_, &z)| !(z.is_nan() || is_valid_depth(z)))
        {
            return Err(Error::InvalidDepth { index, value });
        }
        let data = data
            .into_iter()
            .map(|z| if z.is_nan() { INVALID_DEPTH } else { z })
            .collect();
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Build from raw sensor values; anything that is not a valid depth
    /// (zero, negative, infinite, NaN) becomes invalid.
    pub fn from_raw(width: u32, height: u32, data: Vec<f64>) -> Result<Self> {
        check_len(width, height, data.len())?;
        let data = data
            .into_iter()
            .map(|z| if is_valid_depth(z) { z } else { INVALID_DEPTH })
            .collect();
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: u32, height: u32, z: f64) -> Result<Self> {
        Self::new(width, height, vec![z; width as usize * height as usize])
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn bounds(&self) -> PixelRect {
        PixelRect::new(0, 0, self.width, self.height)
    }

    #[inline]
    pub fn index(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }

    /// Depth at column `x`, row `y`; `None` when invalid.
    #[inline]
    pub fn get(&self, x: u32, y: u32) -> Option<f64> {
        let z = self.data[self.index(x, y)];
        is_valid_depth(z).then_some(z)
    }

    /// Overwrite one pixel. Non-depth values mark it invalid.
    pub fn set(&mut self, x: u32, y: u32, z: f64) {
        let i = self.index(x, y);
        self.data[i] = if is_valid_depth(z) { z } else { INVALID_DEPTH };
    }

    pub fn valid_count(&self) -> usize {
        self.data.iter().filter(|z| is_valid_depth(**z)).count()
    }

    /// Valid depths inside `rect` with their pixel coordinates, row-major.
    pub fn valid_in(&self, rect: PixelRect) -> Vec<((u32, u32), f64)> {
        let Some(rect) = rect.clip(self.width, self.height) else {
            return Vec::new();
        };
        rect.pixels()
            .filter_map(|(x, y)| self.get(x, y).map(|z| ((x, y), z)))
            .collect()
    }

    /// Fraction of the in-image part of `rect` carrying valid depth.
    pub fn valid_fraction(&self, rect: PixelRect) -> Result<f64> {
        let clipped = rect
            .clip(self.width, self.height)
            .ok_or(Error::BoxOutsideImage)?;
        Ok(self.valid_in(clipped).len() as f64 / clipped.area() as f64)
    }
}

fn check_len(width: u32, height: u32, len: usize) -> Result<()> {
    let expected = width as usize * height as usize;
    if expected != len {
        return Err(Error::DimensionMismatch {
            expected,
            actual: len,
        });
    }
    Ok(())
}

/// Linear depth range mapped onto the 256 levels. Level 0 is reserved for
/// invalid pixels, so depths within half a step of `z_min` alias to invalid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "QuantizationFile", into = "QuantizationFile")]
pub struct QuantizationSpec {
    z_min: f64,
    z_max: f64,
}

#[derive(Serialize, Deserialize)]
struct QuantizationFile {
    z_min: f64,
    z_max: f64,
    #[serde(default = "default_levels")]
    levels: u32,
}

fn default_levels() -> u32 {
    LEVELS
}

impl TryFrom<QuantizationFile> for QuantizationSpec {
    type Error = Error;

    fn try_from(f: QuantizationFile) -> Result<Self> {
        if f.levels != LEVELS {
            return Err(Error::Config(format!(
                "quantization levels must be {LEVELS}, got {}",
                f.levels
            )));
        }
        QuantizationSpec::new(f.z_min, f.z_max)
    }
}

impl From<QuantizationSpec> for QuantizationFile {
    fn from(q: QuantizationSpec) -> Self {
        QuantizationFile {
            z_min: q.z_min,
            z_max: q.z_max,
            levels: LEVELS,
        }
    }
}

impl Default for QuantizationSpec {
    fn default() -> Self {
        Self {
            z_min: 0.5,
            z_max: 20.0,
        }
    }
}

impl QuantizationSpec {
    pub fn new(z_min: f64, z_max: f64) -> Result<Self> {
        if !(z_min.is_finite() && z_max.is_finite() && z_min > 0.0 && z_min < z_max) {
            return Err(Error::InvalidQuantization { z_min, z_max });
        }
        Ok(Self { z_min, z_max })
    }

    pub fn z_min(&self) -> f64 {
        self.z_min
    }

    pub fn z_max(&self) -> f64 {
        self.z_max
    }

    /// Depth difference between adjacent levels.
    pub fn step(&self) -> f64 {
        (self.z_max - self.z_min) / 255.0
    }

    pub fn level(&self, z: f64) -> u8 {
        if !is_valid_depth(z) {
            return 0;
        }
        let t = (z.clamp(self.z_min, self.z_max) - self.z_min) / (self.z_max - self.z_min);
        (255.0 * t).round() as u8
    }

    pub fn depth(&self, level: u8) -> f64 {
        if level == 0 {
            INVALID_DEPTH
        } else {
            self.z_min + level as f64 * self.step()
        }
    }
}

/// 8-bit image with three channels per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image8 {
    width: u32,
    height: u32,
    data: Vec<[u8; 3]>,
}

impl Image8 {
    pub fn new(width: u32, height: u32, data: Vec<[u8; 3]>) -> Result<Self> {
        check_len(width, height, data.len())?;
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Replicate a single-channel buffer into three channels.
    pub fn from_gray(width: u32, height: u32, gray: &[u8]) -> Result<Self> {
        Self::new(width, height, gray.iter().map(|&g| [g; 3]).collect())
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.data
    }

    /// First channel of every pixel, after checking the channels agree.
    pub fn gray(&self) -> Result<Vec<u8>> {
        self.data
            .iter()
            .enumerate()
            .map(|(i, px)| {
                if px[0] == px[1] && px[1] == px[2] {
                    Ok(px[0])
                } else {
                    Err(Error::ChannelMismatch {
                        x: (i % self.width as usize) as u32,
                        y: (i / self.width as usize) as u32,
                    })
                }
            })
            .collect()
    }
}

pub fn quantize(m: &DepthMap, q: &QuantizationSpec) -> Image8 {
    let data = m.data.iter().map(|&z| [q.level(z); 3]).collect();
    Image8 {
        width: m.width,
        height: m.height,
        data,
    }
}

pub fn dequantize(img: &Image8, q: &QuantizationSpec) -> Result<DepthMap> {
    let data = img.gray()?.into_iter().map(|k| q.depth(k)).collect();
    Ok(DepthMap {
        width: img.width,
        height: img.height,
        data,
    })
}
