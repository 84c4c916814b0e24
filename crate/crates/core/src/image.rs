//! Grayscale reconstruction images and 8-bit PGM I/O.

use std::io::{Read, Write};

use crate::error::{CoreError, Result};

/// Real-valued image indexed like the scan grid: `(i, j)` with `i` along x.
///
/// Storage is `i * height + j`.
#[derive(Clone, Debug, PartialEq)]
pub struct ReconImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl ReconImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(CoreError::Shape("image dimensions must be positive".into()));
        }
        if pixels.len() != width * height {
            return Err(CoreError::Shape(format!(
                "image {width}x{height} needs {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        if pixels.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::Domain("image pixels must be finite".into()));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            pixels: vec![0.0; width * height],
        }
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [f64] {
        &mut self.pixels
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.pixels[i * self.height + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.pixels[i * self.height + j] = v;
    }

    pub fn max(&self) -> f64 {
        self.pixels.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sum(&self) -> f64 {
        self.pixels.iter().sum()
    }

    /// Divide by the maximum so the peak is 1; an all-zero image stays zero.
    pub fn normalized(&self) -> Self {
        let m = self.pixels.iter().copied().fold(0.0, f64::max);
        let mut out = self.clone();
        if m > 0.0 {
            out.pixels.iter_mut().for_each(|v| *v = (*v / m).clamp(0.0, 1.0));
        } else {
            out.pixels.iter_mut().for_each(|v| *v = 0.0);
        }
        out
    }

    pub fn same_shape(&self, other: &ReconImage) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Binary 8-bit PGM (P5). Raster row `r` holds `j = height - 1 - r` so
    /// +y points up in viewers; values are clamped to [0, 1] and rounded.
    pub fn write_pgm<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "P5\n{} {}\n255\n", self.width, self.height)?;
        let mut row = vec![0u8; self.width];
        for r in 0..self.height {
            let j = self.height - 1 - r;
            for (i, px) in row.iter_mut().enumerate() {
                *px = (self.get(i, j).clamp(0.0, 1.0) * 255.0).round() as u8;
            }
            w.write_all(&row)?;
        }
        Ok(())
    }

    pub fn to_pgm_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(self.width * self.height + 32);
        self.write_pgm(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    /// Read an 8-bit binary PGM written by [`ReconImage::write_pgm`].
    pub fn read_pgm<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)
            .map_err(|e| CoreError::Domain(format!("reading PGM: {e}")))?;
        Self::from_pgm_bytes(&bytes)
    }

    pub fn from_pgm_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| CoreError::Domain(format!("invalid PGM: {m}"));
        let mut pos = 0;
        let mut fields = Vec::with_capacity(4);
        while fields.len() < 4 {
            while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
                if bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                } else {
                    pos += 1;
                }
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(bad("truncated header"));
            }
            fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header not ASCII"))?);
        }
        if fields[0] != "P5" {
            return Err(bad("expected magic P5"));
        }
        let parse = |s: &str| s.parse::<usize>().map_err(|_| bad("non-numeric header field"));
        let (width, height, maxval) = (parse(fields[1])?, parse(fields[2])?, parse(fields[3])?);
        if maxval == 0 || maxval > 255 {
            return Err(bad("only 8-bit PGM is supported"));
        }
        pos += 1;
        let payload = bytes.get(pos..pos + width * height).ok_or_else(|| bad("truncated payload"))?;
        let mut img = ReconImage::zeros(width, height);
        for r in 0..height {
            let j = height - 1 - r;
            for i in 0..width {
                img.set(i, j, payload[r * width + i] as f64 / maxval as f64);
            }
        }
        Ok(img)
    }
}
