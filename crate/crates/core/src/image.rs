//! Pixel images in `[0, 1]` and their plain-file encodings.

use std::path::Path;

use crate::{GscError, Result};

/// Row-major image, channels interleaved per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || channels == 0 {
            return Err(GscError::invalid(format!(
                "empty image {width}x{height}x{channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(GscError::dims(width * height * channels, data.len()));
        }
        Ok(Image {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Image {
            width,
            height,
            channels: 1,
            data: vec![0.0; width * height],
        }
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Image {
            width,
            height,
            channels: 1,
            data: vec![value; width * height],
        }
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[(y * self.width + x) * self.channels] = v;
    }

    /// Luma (Rec. 601 weights) for 3-channel images, identity for grayscale.
    pub fn to_grayscale(&self) -> Image {
        if self.channels == 1 {
            return self.clone();
        }
        let data = self
            .data
            .chunks_exact(self.channels)
            .map(|px| {
                if self.channels >= 3 {
                    0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2]
                } else {
                    px[0]
                }
            })
            .collect();
        Image {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
        }
    }

    /// Mean over non-overlapping `factor × factor` cells of the grayscale image.
    pub fn area_downsample(&self, factor: usize) -> Result<Image> {
        if factor == 0 || self.width % factor != 0 || self.height % factor != 0 {
            return Err(GscError::invalid(format!(
                "{}x{} not divisible by {factor}",
                self.width, self.height
            )));
        }
        let g = self.to_grayscale();
        let (w, h) = (self.width / factor, self.height / factor);
        let norm = 1.0 / (factor * factor) as f64;
        let mut data = vec![0.0; w * h];
        for (cy, row) in data.chunks_exact_mut(w).enumerate() {
            for (cx, out) in row.iter_mut().enumerate() {
                let mut s = 0.0;
                for y in cy * factor..(cy + 1) * factor {
                    for x in cx * factor..(cx + 1) * factor {
                        s += g.get(x, y);
                    }
                }
                *out = s * norm;
            }
        }
        Image::new(w, h, 1, data)
    }

    pub fn clamped(mut self) -> Image {
        self.data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        self
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    /// 8-bit binary PGM (P5) of the grayscale image.
    pub fn to_pgm(&self) -> Vec<u8> {
        let g = self.to_grayscale();
        let mut out = format!("P5\n{} {}\n255\n", g.width, g.height).into_bytes();
        out.extend(g.data.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
        out
    }

    pub fn from_pgm(bytes: &[u8]) -> Result<Image> {
        let mut fields = Vec::with_capacity(4);
        let mut pos = 0;
        while fields.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(GscError::Truncated("pgm header".into()));
            }
            fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
        }
        pos += 1;
        if fields[0] != "P5" {
            return Err(GscError::Corrupt(format!("not a binary pgm: {}", fields[0])));
        }
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| GscError::Corrupt(format!("bad pgm field {s}")))
        };
        let (w, h, maxval) = (parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?);
        if maxval == 0 || maxval > 255 {
            return Err(GscError::Corrupt(format!("unsupported pgm maxval {maxval}")));
        }
        let body = bytes
            .get(pos..pos + w * h)
            .ok_or_else(|| GscError::Truncated("pgm pixels".into()))?;
        let data = body.iter().map(|&b| b as f64 / maxval as f64).collect();
        Image::new(w, h, 1, data)
    }

    /// Exact sidecar: `u32 width, u32 height, u32 channels`, then f64 values, little-endian.
    pub fn to_raw(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 8 * self.data.len());
        for d in [self.width, self.height, self.channels] {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_raw(bytes: &[u8]) -> Result<Image> {
        if bytes.len() < 12 {
            return Err(GscError::Truncated("raw image header".into()));
        }
        let dim = |i: usize| u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap()) as usize;
        let (w, h, c) = (dim(0), dim(1), dim(2));
        let n = w
            .checked_mul(h)
            .and_then(|v| v.checked_mul(c))
            .ok_or_else(|| GscError::Corrupt("raw image dims overflow".into()))?;
        let body = &bytes[12..];
        if body.len() != 8 * n {
            return Err(GscError::Truncated(format!(
                "raw image expects {} bytes, found {}",
                8 * n,
                body.len()
            )));
        }
        let data = body
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        Image::new(w, h, c, data)
    }

    /// Writes `<path>` as PGM and `<path>.raw` as the exact sidecar.
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_pgm()).map_err(|e| GscError::io(path, e))?;
        let raw = sidecar_path(path);
        std::fs::write(&raw, self.to_raw()).map_err(|e| GscError::io(&raw, e))
    }

    /// Reads the exact sidecar when present, else the 8-bit PGM.
    pub fn load(path: &Path) -> Result<Image> {
        let raw = sidecar_path(path);
        if raw.exists() {
            let bytes = std::fs::read(&raw).map_err(|e| GscError::io(&raw, e))?;
            return Image::from_raw(&bytes);
        }
        let bytes = std::fs::read(path).map_err(|e| GscError::io(path, e))?;
        Image::from_pgm(&bytes)
    }
}

pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".raw");
    s.into()
}
