//! Planar RGB image buffer plus the channel normalization applied before
//! gaze estimation, and a minimal binary PPM (P6) reader/writer for images
//! referenced by path.

use crate::error::{Error, Result};
use std::io::{Read, Write};
use std::path::Path;

/// Per-channel normalization constants (ImageNet convention).
pub const CHANNEL_MEAN: [f64; 3] = [0.485, 0.456, 0.406];
pub const CHANNEL_STD: [f64; 3] = [0.229, 0.224, 0.225];

/// Planar `[3, h, w]` image, values nominally in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub data: Vec<f64>,
    pub height: usize,
    pub width: usize,
}

impl Image {
    pub fn new(height: usize, width: usize) -> Self {
        Image {
            data: vec![0.0; 3 * height * width],
            height,
            width,
        }
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Image {
            data: vec![value; 3 * height * width],
            height,
            width,
        }
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[c * self.height * self.width + y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        self.data[c * self.height * self.width + y * self.width + x] = v;
    }

    pub fn shape(&self) -> Vec<usize> {
        vec![3, self.height, self.width]
    }

    pub fn clamp_unit(&mut self) {
        for v in self.data.iter_mut() {
            *v = v.clamp(0.0, 1.0);
        }
    }

    /// Per-channel `(x - mean) / std` normalization of a [0,1] image.
    pub fn normalize(&self) -> Result<Image> {
        let mut out = self.clone();
        let plane = self.height * self.width;
        if out.data.len() != 3 * plane {
            return Err(Error::Dimension(format!(
                "normalize: expected 3 channels over {}x{}",
                self.height, self.width
            )));
        }
        for c in 0..3 {
            for i in 0..plane {
                out.data[c * plane + i] =
                    (self.data[c * plane + i] - CHANNEL_MEAN[c]) / CHANNEL_STD[c];
            }
        }
        Ok(out)
    }

    /// Inverse of [`Image::normalize`].
    pub fn denormalize(&self) -> Image {
        let mut out = self.clone();
        let plane = self.height * self.width;
        for c in 0..3 {
            for i in 0..plane {
                out.data[c * plane + i] = self.data[c * plane + i] * CHANNEL_STD[c] + CHANNEL_MEAN[c];
            }
        }
        out
    }

    /// Write as binary PPM, quantizing to 8 bits.
    pub fn write_ppm(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        write!(file, "P6\n{} {}\n255\n", self.width, self.height)?;
        let mut bytes = Vec::with_capacity(3 * self.height * self.width);
        for y in 0..self.height {
            for x in 0..self.width {
                for c in 0..3 {
                    bytes.push((self.get(c, y, x).clamp(0.0, 1.0) * 255.0).round() as u8);
                }
            }
        }
        file.write_all(&bytes)?;
        Ok(())
    }

    /// Read a binary PPM written by [`Image::write_ppm`] or any P6 producer.
    pub fn read_ppm(path: &Path) -> Result<Image> {
        let mut raw = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut raw)?;
        let mut pos = 0;
        let mut token = || -> Result<String> {
            while pos < raw.len() && (raw[pos] as char).is_whitespace() {
                pos += 1;
            }
            let start = pos;
            while pos < raw.len() && !(raw[pos] as char).is_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(Error::Data(format!("{}: truncated PPM header", path.display())));
            }
            Ok(String::from_utf8_lossy(&raw[start..pos]).into_owned())
        };
        if token()? != "P6" {
            return Err(Error::Data(format!("{}: not a P6 PPM", path.display())));
        }
        let width: usize = token()?
            .parse()
            .map_err(|_| Error::Data(format!("{}: bad width", path.display())))?;
        let height: usize = token()?
            .parse()
            .map_err(|_| Error::Data(format!("{}: bad height", path.display())))?;
        let maxval: usize = token()?
            .parse()
            .map_err(|_| Error::Data(format!("{}: bad maxval", path.display())))?;
        if maxval != 255 {
            return Err(Error::Data(format!(
                "{}: only 8-bit PPM supported",
                path.display()
            )));
        }
        pos += 1; // single whitespace after maxval
        let need = width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(3))
            .ok_or_else(|| Error::Data(format!("{}: absurd dimensions", path.display())))?;
        if raw.len() < pos + need {
            return Err(Error::Data(format!("{}: truncated pixel data", path.display())));
        }
        let mut img = Image::new(height, width);
        for y in 0..height {
            for x in 0..width {
                for c in 0..3 {
                    let b = raw[pos + (y * width + x) * 3 + c];
                    img.set(c, y, x, b as f64 / 255.0);
                }
            }
        }
        Ok(img)
    }
}
