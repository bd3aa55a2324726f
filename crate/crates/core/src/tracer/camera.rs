use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::{Mat3, Ray, Vec3};

/// Pinhole camera. `rotation` and `translation` map camera coordinates to
/// world coordinates (`x_w = R x_c + t`); the camera looks along its +z
/// axis with +y pointing down the image.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub name: String,
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl Camera {
    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::Precondition(format!("camera {}: focal lengths must be positive", self.name)));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Precondition(format!("camera {}: empty image", self.name)));
        }
        let err = (self.rotation.transpose() * self.rotation - Mat3::identity()).abs().max();
        if err >= 1e-8 {
            return Err(Error::Precondition(format!(
                "camera {}: rotation not orthonormal (error {err:.2e})",
                self.name
            )));
        }
        Ok(())
    }

    pub fn center(&self) -> Vec3 {
        self.translation
    }

    /// Principal viewing direction in world coordinates.
    pub fn forward(&self) -> Vec3 {
        self.rotation.column(2).into()
    }

    /// Ray through image position `(u, v)` in pixels; pixel `(i, j)` covers
    /// `[i, i+1) x [j, j+1)`.
    pub fn ray(&self, u: f64, v: f64) -> Ray {
        let d_cam = Vec3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0);
        Ray::new(self.center(), self.rotation * d_cam)
    }

    /// Image position of a world point, `None` behind the camera.
    pub fn project(&self, p: &Vec3) -> Option<(f64, f64)> {
        let c = self.rotation.transpose() * (p - self.translation);
        (c.z > 0.0).then(|| (self.fx * c.x / c.z + self.cx, self.fy * c.y / c.z + self.cy))
    }
}

/// Ray through a pixel position, checked against the image bounds.
pub fn pixel_ray(camera: &Camera, pixel: (f64, f64)) -> Result<Ray> {
    let (u, v) = pixel;
    if !(0.0..=camera.width as f64).contains(&u) || !(0.0..=camera.height as f64).contains(&v) {
        return Err(Error::Precondition(format!("pixel ({u}, {v}) outside {}x{} image", camera.width, camera.height)));
    }
    Ok(camera.ray(u, v))
}

/// Serialize cameras, one per line:
///
/// ```text
/// camera <name> <width> <height> <fx> <fy> <cx> <cy> <r00> <r01> <r02> <r10> <r11> <r12> <r20> <r21> <r22> <tx> <ty> <tz>
/// ```
///
/// Blank lines and lines starting with `#` are ignored. Names contain no
/// whitespace.
pub fn format_cameras(cameras: &[Camera]) -> String {
    let mut out = String::from("# camera name width height fx fy cx cy R(row-major, world-from-camera) t\n");
    for c in cameras {
        write!(out, "camera {} {} {} {:?} {:?} {:?} {:?}", c.name, c.width, c.height, c.fx, c.fy, c.cx, c.cy).unwrap();
        for r in 0..3 {
            for k in 0..3 {
                write!(out, " {:?}", c.rotation[(r, k)]).unwrap();
            }
        }
        for k in 0..3 {
            write!(out, " {:?}", c.translation[k]).unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn parse_cameras(text: &str) -> Result<Vec<Camera>> {
    let mut cameras = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |msg: &str| Error::Format(format!("camera file line {}: {msg}", lineno + 1));
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens[0] != "camera" {
            return Err(bad("expected `camera`"));
        }
        if tokens.len() != 20 {
            return Err(bad(&format!("expected 20 fields, found {}", tokens.len())));
        }
        let num = |i: usize| -> Result<f64> { tokens[i].parse::<f64>().map_err(|_| bad(&format!("`{}` is not a number", tokens[i]))) };
        let int = |i: usize| -> Result<u32> { tokens[i].parse::<u32>().map_err(|_| bad(&format!("`{}` is not an integer", tokens[i]))) };
        let mut rotation = Mat3::zeros();
        for r in 0..3 {
            for k in 0..3 {
                rotation[(r, k)] = num(8 + 3 * r + k)?;
            }
        }
        let camera = Camera {
            name: tokens[1].to_string(),
            width: int(2)?,
            height: int(3)?,
            fx: num(4)?,
            fy: num(5)?,
            cx: num(6)?,
            cy: num(7)?,
            rotation,
            translation: Vec3::new(num(17)?, num(18)?, num(19)?),
        };
        camera.validate()?;
        cameras.push(camera);
    }
    Ok(cameras)
}

pub fn write_cameras(path: &Path, cameras: &[Camera]) -> Result<()> {
    fs::write(path, format_cameras(cameras))?;
    Ok(())
}

pub fn read_cameras(path: &Path) -> Result<Vec<Camera>> {
    parse_cameras(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn identity_camera() -> Camera {
        Camera {
            name: "c0".into(),
            width: 64,
            height: 48,
            fx: 50.0,
            fy: 55.0,
            cx: 32.0,
            cy: 24.0,
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    #[test]
    fn principal_point_looks_forward() {
        let cam = identity_camera();
        let r = pixel_ray(&cam, (cam.cx, cam.cy)).unwrap();
        assert_eq!(r.dir, Vec3::z());
    }

    #[test]
    fn focal_offset_is_45_degrees() {
        let cam = identity_camera();
        let r = cam.ray(cam.cx + cam.fx, cam.cy);
        assert!((r.dir.x - r.dir.z).abs() < 1e-15);
        assert_eq!(r.dir.y, 0.0);
    }

    #[test]
    fn reprojection_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let axis = Vec3::new(0.3, -0.5, 0.8).normalize();
        let mut cam = identity_camera();
        cam.rotation = *nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), 0.7).matrix();
        cam.translation = Vec3::new(0.5, -1.0, 2.0);
        cam.validate().unwrap();
        for _ in 0..100 {
            let (u, v) = (rng.gen_range(0.0..64.0), rng.gen_range(0.0..48.0));
            let ray = pixel_ray(&cam, (u, v)).unwrap();
            let (pu, pv) = cam.project(&ray.at(rng.gen_range(0.1..10.0))).unwrap();
            assert!((pu - u).abs() < 1e-6 && (pv - v).abs() < 1e-6);
        }
    }

    #[test]
    fn out_of_bounds_pixel_rejected() {
        assert!(pixel_ray(&identity_camera(), (-1.0, 3.0)).is_err());
    }

    #[test]
    fn non_orthonormal_rotation_rejected() {
        let mut cam = identity_camera();
        cam.rotation[(0, 0)] = 1.1;
        assert!(cam.validate().is_err());
    }

    #[test]
    fn file_round_trip() {
        let mut cam = identity_camera();
        cam.translation = Vec3::new(0.1, 1.0 / 3.0, -2.0);
        let text = format_cameras(&[cam.clone(), identity_camera()]);
        let parsed = parse_cameras(&text).unwrap();
        assert_eq!(parsed, vec![cam, identity_camera()]);
        assert!(parse_cameras("camera x 1 2 3").is_err());
    }
}
