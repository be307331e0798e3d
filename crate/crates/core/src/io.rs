//! File formats: PFM for metric depth, PGM/PNG for 8-bit depth and masks,
//! JSON for configs and sidecars.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::depthmap::{DepthMap, Image8, QuantizationSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileKind {
    Pfm,
    Pgm,
    Png,
}

impl FileKind {
    pub fn from_path(path: &Path) -> Result<Self> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        match ext.as_deref() {
            Some("pfm") => Ok(FileKind::Pfm),
            Some("pgm") => Ok(FileKind::Pgm),
            Some("png") => Ok(FileKind::Png),
            _ => Err(Error::UnknownFormat(path.display().to_string())),
        }
    }
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::json(path, e))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

pub fn write_bytes(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Serialize one record per line.
pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, records: &[T]) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(|e| Error::json(path, e))?;
        out.push(b'\n');
    }
    write_bytes(path, &out)
}

/// Parse a JSONL file; blank lines are skipped, errors carry 1-based line numbers.
pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<(usize, T)>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_jsonl(&text)
}

pub fn parse_jsonl<T: DeserializeOwned>(text: &str) -> Result<Vec<(usize, T)>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map(|v| (i + 1, v))
                .map_err(|e| Error::Parse {
                    line: i + 1,
                    message: e.to_string(),
                })
        })
        .collect()
}

/// Sidecar path carrying the quantization range of an 8-bit depth image.
pub fn sidecar_path(image: &Path) -> PathBuf {
    let mut s = image.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn write_sidecar(image: &Path, q: &QuantizationSpec) -> Result<()> {
    write_json(sidecar_path(image), q)
}

pub fn read_sidecar(image: &Path) -> Result<QuantizationSpec> {
    read_json(sidecar_path(image))
}

// PFM

/// Encode a depth map as a little-endian grayscale PFM. Rows are stored
/// bottom to top as the format requires.
pub fn encode_pfm(m: &DepthMap) -> Vec<u8> {
    let (w, h) = (m.width() as usize, m.height() as usize);
    let mut out = format!("Pf\n{} {}\n-1.0\n", w, h).into_bytes();
    out.reserve(w * h * 4);
    for row in (0..h).rev() {
        for z in &m.data()[row * w..(row + 1) * w] {
            out.extend_from_slice(&(*z as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_pfm(bytes: &[u8]) -> Result<DepthMap> {
    let err = |message: &str| Error::Format {
        format: "PFM",
        message: message.to_string(),
    };
    let mut header = HeaderReader::new(bytes);
    match header.token() {
        Some(b"Pf") => {}
        Some(b"PF") => return Err(err("color PFM is not a depth map")),
        _ => return Err(err("missing Pf magic")),
    }
    let width: u32 = header.number().ok_or_else(|| err("bad width"))?;
    let height: u32 = header.number().ok_or_else(|| err("bad height"))?;
    let scale: f64 = header.number().ok_or_else(|| err("bad scale"))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(err("scale must be nonzero"));
    }
    let body = header.body().ok_or_else(|| err("missing raster"))?;
    let (w, h) = (width as usize, height as usize);
    if body.len() < w * h * 4 {
        return Err(err("truncated raster"));
    }
    let little = scale < 0.0;
    let mut data = vec![0.0f64; w * h];
    for (i, chunk) in body.chunks_exact(4).take(w * h).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        let (row, col) = (h - 1 - i / w, i % w);
        data[row * w + col] = v as f64;
    }
    DepthMap::from_raw(width, height, data)
}

pub fn write_pfm(path: impl AsRef<Path>, m: &DepthMap) -> Result<()> {
    write_bytes(path, &encode_pfm(m))
}

pub fn read_pfm(path: impl AsRef<Path>) -> Result<DepthMap> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pfm(&bytes)
}

// PGM

/// Binary 8-bit PGM (P5).
pub fn encode_pgm(width: u32, height: u32, gray: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", width, height).into_bytes();
    out.extend_from_slice(gray);
    out
}

/// Returns `(width, height, pixels)`. Only 8-bit binary PGM is accepted.
pub fn decode_pgm(bytes: &[u8]) -> Result<(u32, u32, Vec<u8>)> {
    let err = |message: &str| Error::Format {
        format: "PGM",
        message: message.to_string(),
    };
    let mut header = HeaderReader::new(bytes);
    if header.token() != Some(b"P5") {
        return Err(err("missing P5 magic"));
    }
    let width: u32 = header.number().ok_or_else(|| err("bad width"))?;
    let height: u32 = header.number().ok_or_else(|| err("bad height"))?;
    let maxval: u32 = header.number().ok_or_else(|| err("bad maxval"))?;
    if maxval != 255 {
        return Err(err("only maxval 255 is supported"));
    }
    let body = header.body().ok_or_else(|| err("missing raster"))?;
    let n = width as usize * height as usize;
    if body.len() < n {
        return Err(err("truncated raster"));
    }
    Ok((width, height, body[..n].to_vec()))
}

pub fn write_pgm(path: impl AsRef<Path>, width: u32, height: u32, gray: &[u8]) -> Result<()> {
    write_bytes(path, &encode_pgm(width, height, gray))
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<(u32, u32, Vec<u8>)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes)
}

// 8-bit depth images

pub fn write_image8(path: impl AsRef<Path>, img: &Image8) -> Result<()> {
    let path = path.as_ref();
    match FileKind::from_path(path)? {
        FileKind::Pgm => write_pgm(path, img.width(), img.height(), &img.gray()?),
        FileKind::Png => {
            let raw: Vec<u8> = img.pixels().iter().flatten().copied().collect();
            let buf = image::RgbImage::from_raw(img.width(), img.height(), raw)
                .ok_or_else(|| Error::Invariant("RGB buffer size".into()))?;
            let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
            let mut w = BufWriter::new(file);
            buf.write_to(&mut w, image::ImageFormat::Png)
                .map_err(|source| Error::Image {
                    path: path.to_path_buf(),
                    source,
                })?;
            w.flush().map_err(|e| Error::io(path, e))
        }
        FileKind::Pfm => Err(Error::UnknownFormat(format!(
            "{} is not an 8-bit format",
            path.display()
        ))),
    }
}

pub fn read_image8(path: impl AsRef<Path>) -> Result<Image8> {
    let path = path.as_ref();
    match FileKind::from_path(path)? {
        FileKind::Pgm => {
            let (w, h, gray) = read_pgm(path)?;
            Image8::from_gray(w, h, &gray)
        }
        FileKind::Png => {
            let img = image::open(path).map_err(|source| Error::Image {
                path: path.to_path_buf(),
                source,
            })?;
            let rgb = img.to_rgb8();
            let (w, h) = rgb.dimensions();
            let data = rgb.pixels().map(|p| p.0).collect();
            Image8::new(w, h, data)
        }
        FileKind::Pfm => Err(Error::UnknownFormat(format!(
            "{} is not an 8-bit format",
            path.display()
        ))),
    }
}

/// Masks are stored as PGM with 255 for set pixels.
pub fn write_mask(path: impl AsRef<Path>, width: u32, height: u32, mask: &[bool]) -> Result<()> {
    let gray: Vec<u8> = mask.iter().map(|&m| if m { 255 } else { 0 }).collect();
    write_pgm(path, width, height, &gray)
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<(u32, u32, Vec<bool>)> {
    let (w, h, gray) = read_pgm(path)?;
    Ok((w, h, gray.into_iter().map(|g| g > 127).collect()))
}

/// Whitespace/comment-aware tokenizer for netpbm-style headers.
struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderReader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn skip_space(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn token(&mut self) -> Option<&'a [u8]> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        (self.pos > start).then(|| &self.bytes[start..self.pos])
    }

    fn number<T: std::str::FromStr>(&mut self) -> Option<T> {
        std::str::from_utf8(self.token()?).ok()?.parse().ok()
    }

    /// Raster after the single whitespace byte that ends the header.
    fn body(self) -> Option<&'a [u8]> {
        let rest = self.bytes.get(self.pos..)?;
        let (first, tail) = rest.split_first()?;
        first.is_ascii_whitespace().then_some(tail)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pfm_round_trip_keeps_invalid_and_orientation() {
        let m = DepthMap::new(3, 2, vec![1.0, 2.0, f64::NAN, 4.0, 5.5, 6.25]).unwrap();
        let bytes = encode_pfm(&m);
        assert!(bytes.starts_with(b"Pf\n3 2\n-1.0\n"));
        // bottom row first
        assert_eq!(&bytes[12..16], &4.0f32.to_le_bytes());
        let back = decode_pfm(&bytes).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn pfm_big_endian_and_comments() {
        let mut bytes = b"Pf\n# comment\n2 1\n1.0\n".to_vec();
        bytes.extend_from_slice(&3.0f32.to_be_bytes());
        bytes.extend_from_slice(&0.0f32.to_be_bytes());
        let m = decode_pfm(&bytes).unwrap();
        assert_eq!(m.get(0, 0), Some(3.0));
        assert_eq!(m.get(1, 0), None);
    }

    #[test]
    fn pfm_rejects_garbage() {
        assert!(decode_pfm(b"P5\n1 1\n255\n\0").is_err());
        assert!(decode_pfm(b"PF\n1 1\n-1.0\n").is_err());
        assert!(decode_pfm(b"Pf\n2 2\n-1.0\n\0\0\0\0").is_err());
    }

    #[test]
    fn pgm_round_trip() {
        let bytes = encode_pgm(2, 2, &[0, 10, 200, 255]);
        assert_eq!(decode_pgm(&bytes).unwrap(), (2, 2, vec![0, 10, 200, 255]));
        assert!(decode_pgm(b"P2\n1 1\n255\n0").is_err());
    }

    #[test]
    fn png_and_pgm_files() {
        let dir = tempfile::tempdir().unwrap();
        let img = Image8::from_gray(3, 1, &[0, 17, 255]).unwrap();
        for name in ["a.png", "a.pgm"] {
            let p = dir.path().join(name);
            write_image8(&p, &img).unwrap();
            assert_eq!(read_image8(&p).unwrap(), img);
        }
        assert!(matches!(
            write_image8(dir.path().join("a.bmp"), &img),
            Err(Error::UnknownFormat(_))
        ));
    }

    #[test]
    fn jsonl_reports_line_numbers() {
        let text = "{\"a\":1}\n\nnot json\n";
        let err = parse_jsonl::<serde_json::Value>(text).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }));
    }
}
