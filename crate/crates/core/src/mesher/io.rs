//! Wavefront OBJ and binary PLY mesh files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::TriangleMesh;
use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::pointcloud::ply::parse_ply;

/// `v`, optional `vn` and 1-based `f` records.
pub fn encode_obj(mesh: &TriangleMesh) -> Result<String> {
    mesh.validate()?;
    let mut out = String::new();
    for v in &mesh.vertices {
        writeln!(out, "v {:?} {:?} {:?}", v.x, v.y, v.z).unwrap();
    }
    if let Some(ns) = &mesh.normals {
        for n in ns {
            writeln!(out, "vn {:?} {:?} {:?}", n.x, n.y, n.z).unwrap();
        }
    }
    for [a, b, c] in &mesh.triangles {
        let (a, b, c) = (a + 1, b + 1, c + 1);
        if mesh.normals.is_some() {
            writeln!(out, "f {a}//{a} {b}//{b} {c}//{c}").unwrap();
        } else {
            writeln!(out, "f {a} {b} {c}").unwrap();
        }
    }
    Ok(out)
}

pub fn write_obj(path: &Path, mesh: &TriangleMesh) -> Result<()> {
    fs::write(path, encode_obj(mesh)?)?;
    Ok(())
}

fn fan(poly: &[usize], n_vertices: usize, triangles: &mut Vec<[usize; 3]>) -> Result<()> {
    if poly.len() < 3 {
        return Err(Error::Format(format!("face with {} vertices", poly.len())));
    }
    if let Some(&v) = poly.iter().find(|&&v| v >= n_vertices) {
        return Err(Error::Format(format!("face references vertex {v} of {n_vertices}")));
    }
    for k in 1..poly.len() - 1 {
        triangles.push([poly[0], poly[k], poly[k + 1]]);
    }
    Ok(())
}

/// Parse `v` and `f` records; polygons are fan-triangulated, texture and
/// normal indices are ignored, negative indices count from the end.
pub fn parse_obj(text: &str) -> Result<TriangleMesh> {
    let mut vertices = Vec::new();
    let mut polys = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("v") => {
                let c: Vec<f64> = tok
                    .take(3)
                    .map(|t| t.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::Format(format!("line {}: bad vertex", ln + 1)))?;
                if c.len() != 3 {
                    return Err(Error::Format(format!("line {}: vertex needs 3 coordinates", ln + 1)));
                }
                vertices.push(Vec3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let mut poly = Vec::new();
                for t in tok {
                    let i: i64 = t
                        .split('/')
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| Error::Format(format!("line {}: bad face index `{t}`", ln + 1)))?;
                    let idx = match i {
                        i if i > 0 => i - 1,
                        i if i < 0 => vertices.len() as i64 + i,
                        _ => return Err(Error::Format(format!("line {}: face index 0", ln + 1))),
                    };
                    if idx < 0 {
                        return Err(Error::Format(format!("line {}: face index out of range", ln + 1)));
                    }
                    poly.push(idx as usize);
                }
                polys.push(poly);
            }
            _ => {}
        }
    }
    let mut triangles = Vec::new();
    for p in &polys {
        fan(p, vertices.len(), &mut triangles)?;
    }
    Ok(TriangleMesh { vertices, triangles, normals: None })
}

/// Read an OBJ or PLY mesh, chosen by extension.
pub fn read_mesh(path: &Path) -> Result<TriangleMesh> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    if ext == "ply" {
        let (points, polys) = parse_ply(&fs::read(path)?, true)?;
        let mut triangles = Vec::new();
        for p in &polys {
            fan(p, points.positions.len(), &mut triangles)?;
        }
        return Ok(TriangleMesh { vertices: points.positions, triangles, normals: None });
    }
    let text = fs::read_to_string(path)?;
    parse_obj(&text)
}

/// Binary little-endian PLY with float64 vertices and int32 faces.
pub fn encode_ply_mesh(mesh: &TriangleMesh) -> Result<Vec<u8>> {
    mesh.validate()?;
    if mesh.vertices.len() > i32::MAX as usize {
        return Err(Error::Format("too many vertices for PLY int indices".into()));
    }
    let mut out = Vec::new();
    let mut header = format!("ply\nformat binary_little_endian 1.0\nelement vertex {}\n", mesh.vertices.len());
    header.push_str("property double x\nproperty double y\nproperty double z\n");
    if mesh.normals.is_some() {
        header.push_str("property double nx\nproperty double ny\nproperty double nz\n");
    }
    write!(header, "element face {}\nproperty list uchar int vertex_indices\nend_header\n", mesh.triangles.len()).unwrap();
    out.extend_from_slice(header.as_bytes());
    for (i, v) in mesh.vertices.iter().enumerate() {
        for c in v.iter() {
            out.extend_from_slice(&c.to_le_bytes());
        }
        if let Some(ns) = &mesh.normals {
            for c in ns[i].iter() {
                out.extend_from_slice(&c.to_le_bytes());
            }
        }
    }
    for tri in &mesh.triangles {
        out.push(3);
        for &v in tri {
            out.extend_from_slice(&(v as i32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn write_ply_mesh(path: &Path, mesh: &TriangleMesh) -> Result<()> {
    fs::write(path, encode_ply_mesh(mesh)?)?;
    Ok(())
}
