//! Linear RGB images with binary PPM/PGM I/O.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::Vec3;

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    /// Row-major interleaved RGB in `[0, 1]`.
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, Vec3::zeros())
    }

    pub fn filled(width: usize, height: usize, rgb: Vec3) -> Self {
        let mut data = Vec::with_capacity(3 * width * height);
        for _ in 0..width * height {
            data.extend_from_slice(rgb.as_slice());
        }
        Self { width, height, data }
    }

    pub fn get(&self, x: usize, y: usize) -> Vec3 {
        let k = 3 * (y * self.width + x);
        Vec3::new(self.data[k], self.data[k + 1], self.data[k + 2])
    }

    pub fn set(&mut self, x: usize, y: usize, rgb: Vec3) {
        let k = 3 * (y * self.width + x);
        self.data[k..k + 3].copy_from_slice(rgb.as_slice());
    }

    /// Binary P6, maxval 255, linear values rounded to 8 bits.
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.data.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
        out
    }

    pub fn from_ppm(bytes: &[u8]) -> Result<Self> {
        let (header, body) = parse_pnm_header(bytes, b"P6")?;
        let (width, height) = header;
        if body.len() != 3 * width * height {
            return Err(Error::Format(format!("PPM body has {} bytes, expected {}", body.len(), 3 * width * height)));
        }
        Ok(Self {
            width,
            height,
            data: body.iter().map(|&b| b as f64 / 255.0).collect(),
        })
    }

    pub fn write_ppm(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_ppm())?;
        Ok(())
    }

    pub fn read_ppm(path: &Path) -> Result<Self> {
        Self::from_ppm(&fs::read(path)?)
    }
}

/// Per-pixel validity, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub valid: Vec<bool>,
}

impl Mask {
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.valid[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Binary P5; valid pixels are 255.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.valid.iter().map(|&v| if v { 255u8 } else { 0 }));
        out
    }

    pub fn from_pgm(bytes: &[u8]) -> Result<Self> {
        let ((width, height), body) = parse_pnm_header(bytes, b"P5")?;
        if body.len() != width * height {
            return Err(Error::Format("PGM body size mismatch".into()));
        }
        Ok(Self {
            width,
            height,
            valid: body.iter().map(|&b| b >= 128).collect(),
        })
    }

    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_pgm())?;
        Ok(())
    }

    pub fn read_pgm(path: &Path) -> Result<Self> {
        Self::from_pgm(&fs::read(path)?)
    }
}

fn parse_pnm_header<'a>(bytes: &'a [u8], magic: &[u8]) -> Result<((usize, usize), &'a [u8])> {
    if !bytes.starts_with(magic) {
        return Err(Error::Format(format!("expected {} image", String::from_utf8_lossy(magic))));
    }
    let mut pos = 2;
    let mut fields = Vec::with_capacity(3);
    while fields.len() < 3 {
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
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("truncated image header".into()));
        }
        let v: usize = std::str::from_utf8(&bytes[start..pos]).unwrap().parse().map_err(|_| Error::Format("bad header number".into()))?;
        fields.push(v);
    }
    if fields[2] != 255 {
        return Err(Error::Format(format!("unsupported maxval {}", fields[2])));
    }
    // exactly one whitespace byte separates header and raster
    Ok(((fields[0], fields[1]), &bytes[(pos + 1).min(bytes.len())..]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_round_trip_quantizes() {
        let mut img = Image::new(3, 2);
        img.set(1, 1, Vec3::new(1.0, 0.5, 0.2));
        let back = Image::from_ppm(&img.to_ppm()).unwrap();
        assert_eq!(back.width, 3);
        assert_eq!(back.get(1, 1), Vec3::new(1.0, 128.0 / 255.0, 51.0 / 255.0));
        assert_eq!(back.get(0, 0), Vec3::zeros());
    }

    #[test]
    fn pgm_round_trip() {
        let m = Mask {
            width: 2,
            height: 2,
            valid: vec![true, false, false, true],
        };
        assert_eq!(Mask::from_pgm(&m.to_pgm()).unwrap(), m);
        assert!(Mask::from_pgm(b"P6\n1 1\n255\n").is_err());
    }
}
