//! On-disk layout of datasets and runs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sdfforge::image::{Image, Mask};
use sdfforge::pointcloud::BoundaryPoint;
use sdfforge::tracer::Camera;
use sdfforge::trainer::SceneTransform;
use sdfforge::{Error, Result, Vec3};

// dataset
pub const POINTS: &str = "points.ply";
pub const GT_POINTS: &str = "gt_points.ply";
pub const CAMERAS: &str = "cameras.txt";
pub const IMAGES: &str = "images";
pub const MASKS: &str = "masks";
pub const SCENE_SPEC: &str = "scene.toml";
pub const PROCESSED: &str = "processed.ply";
pub const BOUNDARY: &str = "boundary.txt";

// run
pub const RUN_CONFIG: &str = "config.toml";
pub const TRANSFORM: &str = "transform.toml";
pub const DATA_REF: &str = "data_dir.txt";
pub const MESH: &str = "mesh.obj";
pub const RENDERS: &str = "renders";

/// Refuse to replace an existing output unless forced.
pub fn check_output(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        return Err(Error::Config(format!("{} exists; pass --force to overwrite", path.display())));
    }
    Ok(())
}

pub fn require(path: &Path) -> Result<()> {
    if !path.exists() {
        return Err(Error::Format(format!("missing input {}", path.display())));
    }
    Ok(())
}

pub fn image_path(data: &Path, cam: &Camera) -> PathBuf {
    data.join(IMAGES).join(format!("{}.ppm", cam.name))
}

pub fn mask_path(data: &Path, cam: &Camera) -> PathBuf {
    data.join(MASKS).join(format!("{}.pgm", cam.name))
}

/// Images and masks for every camera, or none when the dataset has no
/// images. A missing mask marks every pixel valid.
pub fn read_views(data: &Path, cameras: &[Camera]) -> Result<Vec<(Image, Mask)>> {
    if !cameras.iter().any(|c| image_path(data, c).exists()) {
        return Ok(Vec::new());
    }
    cameras
        .iter()
        .map(|c| {
            let img = Image::read_ppm(&image_path(data, c))?;
            let mp = mask_path(data, c);
            let mask = if mp.exists() {
                Mask::read_pgm(&mp)?
            } else {
                Mask { width: img.width, height: img.height, valid: vec![true; img.width * img.height] }
            };
            Ok((img, mask))
        })
        .collect()
}

/// One `x y z distance` line per boundary point.
pub fn format_boundary(points: &[BoundaryPoint]) -> String {
    let mut s = String::from("# x y z target_distance\n");
    for b in points {
        writeln!(s, "{:?} {:?} {:?} {:?}", b.position.x, b.position.y, b.position.z, b.target_distance).unwrap();
    }
    s
}

pub fn parse_boundary(text: &str) -> Result<Vec<BoundaryPoint>> {
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v: Vec<f64> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Format(format!("boundary line {}: bad number", ln + 1)))?;
        if v.len() != 4 || v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Format(format!("boundary line {}: expected 4 finite numbers", ln + 1)));
        }
        out.push(BoundaryPoint { position: Vec3::new(v[0], v[1], v[2]), target_distance: v[3] });
    }
    Ok(out)
}

pub fn write_transform(path: &Path, t: &SceneTransform) -> Result<()> {
    let text = toml::to_string(t).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(path, text)?;
    Ok(())
}

pub fn read_transform(path: &Path) -> Result<SceneTransform> {
    require(path)?;
    toml::from_str(&fs::read_to_string(path)?).map_err(|e| Error::Format(format!("{}: {}", path.display(), e.message())))
}
