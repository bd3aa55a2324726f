//! Dense grid evaluation of a distance field and Marching Cubes extraction
//! of its zero level set.

mod io;
mod tables;

use std::collections::HashMap;

pub use io::{encode_obj, encode_ply_mesh, parse_obj, read_mesh, write_obj, write_ply_mesh};
use tables::{EDGE_TABLE, TRI_TABLE};

use crate::diffmlp::JetOrder;
use crate::error::{Error, Result};
use crate::field::SdfField;
use crate::geom::{Aabb, Vec3};

/// Field values at the corners of a regular lattice spanning `bounds`;
/// `values[i + nx * (j + ny * k)]` sits at lattice point `(i, j, k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarGrid {
    pub resolution: [usize; 3],
    pub bounds: Aabb,
    pub values: Vec<f64>,
}

fn check_resolution(resolution: [usize; 3], bounds: &Aabb) -> Result<()> {
    if resolution.iter().any(|&n| n < 2) {
        return Err(Error::Precondition(format!("grid resolution {resolution:?} needs at least 2 points per axis")));
    }
    if bounds.is_degenerate() {
        return Err(Error::Precondition("grid bounds have zero volume".into()));
    }
    Ok(())
}

fn lattice_point(bounds: &Aabb, resolution: [usize; 3], i: usize, j: usize, k: usize) -> Vec3 {
    let idx = [i, j, k];
    Vec3::from_fn(|a, _| {
        let t = idx[a] as f64 / (resolution[a] - 1) as f64;
        bounds.min[a] + t * (bounds.max[a] - bounds.min[a])
    })
}

impl ScalarGrid {
    pub fn new(resolution: [usize; 3], bounds: Aabb, values: Vec<f64>) -> Result<Self> {
        check_resolution(resolution, &bounds)?;
        if values.len() != resolution.iter().product::<usize>() {
            return Err(Error::DimensionMismatch(format!("{} values for a {resolution:?} grid", values.len())));
        }
        if let Some(p) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::numeric(format!("grid value {p} is not finite")));
        }
        Ok(Self { resolution, bounds, values })
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        let [nx, ny, _] = self.resolution;
        self.values[i + nx * (j + ny * k)]
    }

    pub fn point(&self, i: usize, j: usize, k: usize) -> Vec3 {
        lattice_point(&self.bounds, self.resolution, i, j, k)
    }

    /// Lattice spacing per axis.
    pub fn spacing(&self) -> Vec3 {
        Vec3::from_fn(|a, _| (self.bounds.max[a] - self.bounds.min[a]) / (self.resolution[a] - 1) as f64)
    }
}

fn evaluate_layer<F: SdfField + ?Sized>(field: &F, bounds: &Aabb, resolution: [usize; 3], k: usize) -> Result<Vec<f64>> {
    let [nx, ny, _] = resolution;
    let pts: Vec<Vec3> = (0..nx * ny).map(|p| lattice_point(bounds, resolution, p % nx, p / nx, k)).collect();
    let vals = field.sample(&pts, JetOrder::Value)?;
    let mut out = Vec::with_capacity(pts.len());
    for (p, s) in vals.into_iter().enumerate() {
        if !s.value.is_finite() {
            return Err(Error::numeric(format!("field value at lattice point ({}, {}, {k})", p % nx, p / nx)));
        }
        out.push(s.value);
    }
    Ok(out)
}

/// Evaluate `field` at every lattice point, one z-layer per batch.
pub fn evaluate_grid<F: SdfField + ?Sized>(field: &F, bounds: &Aabb, resolution: [usize; 3]) -> Result<ScalarGrid> {
    check_resolution(resolution, bounds)?;
    let mut values = Vec::with_capacity(resolution.iter().product());
    for k in 0..resolution[2] {
        values.extend(evaluate_layer(field, bounds, resolution, k)?);
    }
    ScalarGrid::new(resolution, *bounds, values)
}

/// Indexed triangle mesh.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[usize; 3]>,
    pub normals: Option<Vec<Vec3>>,
}

impl TriangleMesh {
    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        for (t, tri) in self.triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= n) {
                return Err(Error::Format(format!("triangle {t} references a missing vertex")));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::Format(format!("triangle {t} repeats a vertex")));
            }
        }
        if let Some(ns) = &self.normals {
            if ns.len() != n {
                return Err(Error::DimensionMismatch("one normal per vertex required".into()));
            }
            if ns.iter().any(|v| (v.norm() - 1.0).abs() > 1e-6) {
                return Err(Error::Format("vertex normals must be unit length".into()));
            }
        }
        Ok(())
    }

    /// Unnormalized face normal (twice the area, right-handed winding).
    pub fn face_cross(&self, t: usize) -> Vec3 {
        let [a, b, c] = self.triangles[t];
        (self.vertices[b] - self.vertices[a]).cross(&(self.vertices[c] - self.vertices[a]))
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        0.5 * self.face_cross(t).norm()
    }

    pub fn area(&self) -> f64 {
        let areas: Vec<f64> = (0..self.triangles.len()).map(|t| self.triangle_area(t)).collect();
        crate::losses::pairwise_sum(&areas)
    }

    /// Signed enclosed volume (positive for outward winding of a closed mesh).
    pub fn signed_volume(&self) -> f64 {
        let v: Vec<f64> = self
            .triangles
            .iter()
            .map(|&[a, b, c]| self.vertices[a].dot(&self.vertices[b].cross(&self.vertices[c])) / 6.0)
            .collect();
        crate::losses::pairwise_sum(&v)
    }

    fn edge_uses(&self) -> HashMap<(usize, usize), (usize, usize)> {
        // undirected edge -> (uses as a->b with a<b, uses as b->a)
        let mut m: HashMap<(usize, usize), (usize, usize)> = HashMap::new();
        for tri in &self.triangles {
            for e in 0..3 {
                let (a, b) = (tri[e], tri[(e + 1) % 3]);
                let slot = m.entry((a.min(b), a.max(b))).or_default();
                if a < b {
                    slot.0 += 1;
                } else {
                    slot.1 += 1;
                }
            }
        }
        m
    }

    /// `V - E + F` counting only vertices used by some triangle.
    pub fn euler_characteristic(&self) -> i64 {
        let mut used = vec![false; self.vertices.len()];
        for tri in &self.triangles {
            for &v in tri {
                used[v] = true;
            }
        }
        let v = used.iter().filter(|&&u| u).count() as i64;
        v - self.edge_uses().len() as i64 + self.triangles.len() as i64
    }

    /// Edges not shared by exactly two consistently oriented triangles.
    pub fn non_manifold_edges(&self) -> usize {
        self.edge_uses().values().filter(|&&(f, b)| !(f == 1 && b == 1)).count()
    }

    pub fn is_closed_manifold(&self) -> bool {
        !self.triangles.is_empty() && self.non_manifold_edges() == 0
    }

    /// Area-weighted averages of incident face normals.
    pub fn with_vertex_normals(mut self) -> Self {
        let mut acc = vec![Vec3::zeros(); self.vertices.len()];
        for t in 0..self.triangles.len() {
            let c = self.face_cross(t);
            for &v in &self.triangles[t] {
                acc[v] += c;
            }
        }
        self.normals = Some(acc.into_iter().map(|n| if n.norm() > 0.0 { n.normalize() } else { Vec3::z() }).collect());
        self
    }

    /// Apply `f` to every vertex; normals are kept (valid for similarities).
    pub fn map_vertices(mut self, f: impl Fn(&Vec3) -> Vec3) -> Self {
        for v in &mut self.vertices {
            *v = f(v);
        }
        self
    }
}

// corner offsets and edge endpoints of the tables' cube numbering
const CORNERS: [[usize; 3]; 8] = [[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0], [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1]];
const EDGES: [[usize; 2]; 12] = [[0, 1], [1, 2], [2, 3], [3, 0], [4, 5], [5, 6], [6, 7], [7, 4], [0, 4], [1, 5], [2, 6], [3, 7]];

/// Incremental extractor over consecutive z-layers. Vertices are welded by
/// the lattice edge they lie on.
struct Marcher {
    bounds: Aabb,
    resolution: [usize; 3],
    iso: f64,
    tie: f64,
    mesh: TriangleMesh,
    edge_vertex: HashMap<u64, usize>,
}

impl Marcher {
    fn new(bounds: Aabb, resolution: [usize; 3], iso: f64) -> Self {
        Self {
            bounds,
            resolution,
            iso,
            tie: 1e-9 * bounds.diagonal(),
            mesh: TriangleMesh::default(),
            edge_vertex: HashMap::new(),
        }
    }

    fn value(&self, v: f64) -> f64 {
        if v == self.iso {
            v + self.tie
        } else {
            v
        }
    }

    /// Global id of the lattice edge from point `p` along `axis`.
    fn edge_key(&self, p: [usize; 3], axis: usize) -> u64 {
        let [nx, ny, _] = self.resolution;
        (((p[2] * ny + p[1]) * nx + p[0]) * 3 + axis) as u64
    }

    fn vertex_on(&mut self, a: [usize; 3], b: [usize; 3], va: f64, vb: f64) -> usize {
        // order endpoints so the same lattice edge always interpolates alike
        let (a, b, va, vb) = if a <= b { (a, b, va, vb) } else { (b, a, vb, va) };
        let axis = (0..3).find(|&d| a[d] != b[d]).expect("distinct corners");
        let key = self.edge_key(a, axis);
        if let Some(&v) = self.edge_vertex.get(&key) {
            return v;
        }
        let pa = lattice_point(&self.bounds, self.resolution, a[0], a[1], a[2]);
        let pb = lattice_point(&self.bounds, self.resolution, b[0], b[1], b[2]);
        let t = (self.iso - va) / (vb - va);
        self.mesh.vertices.push(pa + (pb - pa) * t);
        let id = self.mesh.vertices.len() - 1;
        self.edge_vertex.insert(key, id);
        id
    }

    /// March the cells between layers `k` and `k + 1`.
    fn slab(&mut self, k: usize, lower: &[f64], upper: &[f64]) {
        let [nx, ny, _] = self.resolution;
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                let mut vals = [0.0; 8];
                let mut case = 0usize;
                for (c, off) in CORNERS.iter().enumerate() {
                    let layer = if off[2] == 0 { lower } else { upper };
                    vals[c] = self.value(layer[(i + off[0]) + nx * (j + off[1])]);
                    if vals[c] < self.iso {
                        case |= 1 << c;
                    }
                }
                let edges = EDGE_TABLE[case];
                if edges == 0 {
                    continue;
                }
                let mut verts = [usize::MAX; 12];
                for (e, [ca, cb]) in EDGES.iter().enumerate() {
                    if edges & (1 << e) != 0 {
                        let pa = [i + CORNERS[*ca][0], j + CORNERS[*ca][1], k + CORNERS[*ca][2]];
                        let pb = [i + CORNERS[*cb][0], j + CORNERS[*cb][1], k + CORNERS[*cb][2]];
                        verts[e] = self.vertex_on(pa, pb, vals[*ca], vals[*cb]);
                    }
                }
                for tri in TRI_TABLE[case].chunks(3) {
                    if tri[0] < 0 {
                        break;
                    }
                    // the table winds clockwise seen from outside; swap for outward normals
                    self.mesh.triangles.push([verts[tri[0] as usize], verts[tri[2] as usize], verts[tri[1] as usize]]);
                }
            }
        }
    }
}

/// Marching Cubes on a stored grid. Corners exactly at `iso` are nudged up
/// by `1e-9` of the box diagonal.
pub fn marching_cubes(grid: &ScalarGrid, iso: f64) -> Result<TriangleMesh> {
    if let Some(p) = grid.values.iter().position(|v| !v.is_finite()) {
        return Err(Error::numeric(format!("grid value {p} is not finite")));
    }
    let [nx, ny, nz] = grid.resolution;
    let layer = nx * ny;
    let mut m = Marcher::new(grid.bounds, grid.resolution, iso);
    for k in 0..nz - 1 {
        m.slab(k, &grid.values[k * layer..(k + 1) * layer], &grid.values[(k + 1) * layer..(k + 2) * layer]);
    }
    Ok(m.mesh)
}

/// Evaluate and march in z-slabs of two layers, so memory stays
/// proportional to one layer plus the output mesh.
pub fn extract_mesh<F: SdfField + ?Sized>(field: &F, bounds: &Aabb, resolution: [usize; 3], iso: f64) -> Result<TriangleMesh> {
    check_resolution(resolution, bounds)?;
    let mut m = Marcher::new(*bounds, resolution, iso);
    let mut lower = evaluate_layer(field, bounds, resolution, 0)?;
    for k in 0..resolution[2] - 1 {
        let upper = evaluate_layer(field, bounds, resolution, k + 1)?;
        m.slab(k, &lower, &upper);
        // edges below layer k can no longer be shared
        if k > 0 {
            let [nx, ny, _] = resolution;
            let limit = (k * ny * nx * 3) as u64;
            m.edge_vertex.retain(|&key, _| key >= limit);
        }
        lower = upper;
    }
    Ok(m.mesh)
}
