//! Indexed triangle meshes, point clouds and the preprocessing steps applied
//! to ground-truth surfaces before fitting.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Vec3;

/// Faces whose area falls below this are treated as degenerate.
pub const DEGENERATE_AREA: f64 = 1e-12;

/// Oriented plane `n·x + d = 0` with unit normal `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    pub normal: Vec3,
    pub offset: f64,
}

impl Plane {
    /// Plane through `point` with the given normal. The normal is normalised.
    pub fn from_point_normal(point: &Vec3, normal: &Vec3) -> Option<Plane> {
        let len = normal.norm();
        if !len.is_finite() || len <= 0.0 {
            return None;
        }
        let normal = normal / len;
        Some(Plane { normal, offset: -normal.dot(point) })
    }

    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        self.normal.dot(p) + self.offset
    }

    /// `[a, b, c, d]`.
    pub fn coefficients(&self) -> [f64; 4] {
        [self.normal.x, self.normal.y, self.normal.z, self.offset]
    }
}

/// Ordered set of 3D points with finite coordinates.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    points: Vec<Vec3>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Result<Self> {
        if let Some(index) = points.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::NonFinitePoint { index });
        }
        Ok(Self { points })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Vec3> {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Option<Vec3> {
        if self.points.is_empty() {
            return None;
        }
        let sum = self.points.iter().fold(Vec3::zeros(), |acc, p| acc + p);
        Some(sum / self.points.len() as f64)
    }
}

impl std::ops::Index<usize> for PointCloud {
    type Output = Vec3;

    fn index(&self, index: usize) -> &Vec3 {
        &self.points[index]
    }
}

/// Indexed triangle mesh. Immutable once constructed.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
    face_planes: Option<Vec<Option<Plane>>>,
}

impl TriangleMesh {
    /// Validates indices, rejects faces repeating a vertex and non-finite
    /// coordinates.
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        if let Some(index) = vertices.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::NonFinitePoint { index });
        }
        for (fi, f) in faces.iter().enumerate() {
            if let Some(&bad) = f.iter().find(|&&i| i >= vertices.len()) {
                return Err(Error::InvalidMesh(format!(
                    "face {fi} references vertex {bad} but the mesh has {} vertices",
                    vertices.len()
                )));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::InvalidMesh(format!("face {fi} repeats a vertex index: {f:?}")));
            }
        }
        Ok(Self { vertices, faces, face_planes: None })
    }

    /// Same mesh with the per-face plane cache filled in. Degenerate faces
    /// get `None`.
    pub fn with_plane_cache(mut self) -> Self {
        let planes = (0..self.faces.len()).map(|f| self.compute_plane(f).ok()).collect();
        self.face_planes = Some(planes);
        self
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    pub fn face_planes(&self) -> Option<&[Option<Plane>]> {
        self.face_planes.as_deref()
    }

    pub fn triangle(&self, face: usize) -> [Vec3; 3] {
        let [a, b, c] = self.faces[face];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Unnormalised face normal; its length is twice the face area.
    pub fn face_cross(&self, face: usize) -> Vec3 {
        let [a, b, c] = self.triangle(face);
        (b - a).cross(&(c - a))
    }

    pub fn face_area(&self, face: usize) -> f64 {
        0.5 * self.face_cross(face).norm()
    }

    pub fn is_degenerate(&self, face: usize) -> bool {
        self.face_area(face) < DEGENERATE_AREA
    }

    pub fn total_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Vertices as a point cloud.
    pub fn vertex_cloud(&self) -> PointCloud {
        PointCloud { points: self.vertices.clone() }
    }

    /// Plane of `face`, oriented by counter-clockwise winding.
    pub fn face_plane(&self, face: usize) -> Result<Plane> {
        if let Some(planes) = &self.face_planes {
            return planes[face].ok_or(Error::DegenerateFace { face });
        }
        self.compute_plane(face)
    }

    fn compute_plane(&self, face: usize) -> Result<Plane> {
        let cross = self.face_cross(face);
        if 0.5 * cross.norm() < DEGENERATE_AREA {
            return Err(Error::DegenerateFace { face });
        }
        let normal = cross.normalize();
        // Average the offset over all three corners to keep the residual symmetric.
        let [a, b, c] = self.triangle(face);
        let offset = -(normal.dot(&a) + normal.dot(&b) + normal.dot(&c)) / 3.0;
        Ok(Plane { normal, offset })
    }

    /// Incident faces of every vertex, in increasing face order.
    pub fn vertex_faces(&self) -> Vec<Vec<usize>> {
        let mut incident = vec![Vec::new(); self.vertices.len()];
        for (fi, f) in self.faces.iter().enumerate() {
            for &v in f {
                incident[v].push(fi);
            }
        }
        incident
    }

    /// 1-ring vertex neighbours of every vertex, sorted and deduplicated.
    pub fn vertex_neighbors(&self) -> Vec<Vec<usize>> {
        let mut nbrs = vec![Vec::new(); self.vertices.len()];
        for f in &self.faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                nbrs[a].push(b);
                nbrs[b].push(a);
            }
        }
        for list in &mut nbrs {
            list.sort_unstable();
            list.dedup();
        }
        nbrs
    }

    /// Per-vertex area-weighted average of incident face normals.
    pub fn vertex_normals(&self) -> Result<Vec<Vec3>> {
        let mut acc = vec![Vec3::zeros(); self.vertices.len()];
        let mut touched = vec![false; self.vertices.len()];
        for (fi, f) in self.faces.iter().enumerate() {
            let cross = self.face_cross(fi);
            for &v in f {
                touched[v] = true;
                acc[v] += cross;
            }
        }
        acc.into_iter()
            .enumerate()
            .map(|(v, n)| {
                if !touched[v] {
                    return Err(Error::IsolatedVertex { vertex: v });
                }
                let len = n.norm();
                if len < 2.0 * DEGENERATE_AREA {
                    return Err(Error::DegenerateGeometry(format!(
                        "normal of vertex {v} vanishes"
                    )));
                }
                Ok(n / len)
            })
            .collect()
    }

    /// Splits the mesh into maximal face sets connected through shared
    /// vertex indices. Components are ordered by their lowest face index and
    /// keep the relative order of their faces and vertices. Vertices not
    /// referenced by any face are dropped.
    pub fn connected_components(&self) -> Vec<TriangleMesh> {
        let mut parent: Vec<usize> = (0..self.vertices.len()).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for f in &self.faces {
            let r0 = find(&mut parent, f[0]);
            for &v in &f[1..] {
                let r = find(&mut parent, v);
                if r != r0 {
                    let (lo, hi) = if r < r0 { (r, r0) } else { (r0, r) };
                    parent[hi] = lo;
                }
            }
        }

        let mut component_of_root = std::collections::HashMap::new();
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for (fi, f) in self.faces.iter().enumerate() {
            let root = find(&mut parent, f[0]);
            let id = *component_of_root.entry(root).or_insert_with(|| {
                groups.push(Vec::new());
                groups.len() - 1
            });
            groups[id].push(fi);
        }

        groups
            .into_iter()
            .map(|face_ids| {
                let mut remap = vec![usize::MAX; self.vertices.len()];
                let mut used: Vec<usize> = face_ids
                    .iter()
                    .flat_map(|&fi| self.faces[fi])
                    .collect();
                used.sort_unstable();
                used.dedup();
                let vertices = used
                    .iter()
                    .enumerate()
                    .map(|(new, &old)| {
                        remap[old] = new;
                        self.vertices[old]
                    })
                    .collect();
                let faces = face_ids
                    .iter()
                    .map(|&fi| self.faces[fi].map(|v| remap[v]))
                    .collect();
                TriangleMesh { vertices, faces, face_planes: None }
            })
            .collect()
    }

    /// Applies `x ↦ (x - center) · scale` to every vertex.
    pub fn transformed(&self, transform: &NormalizeTransform) -> TriangleMesh {
        let vertices = self.vertices.iter().map(|v| transform.apply(v)).collect();
        let mesh = TriangleMesh { vertices, faces: self.faces.clone(), face_planes: None };
        if self.face_planes.is_some() {
            mesh.with_plane_cache()
        } else {
            mesh
        }
    }

    /// Centres the bounding box at the origin and scales so the farthest
    /// vertex lies on the unit sphere.
    pub fn normalize_unit_sphere(&self) -> Result<(TriangleMesh, NormalizeTransform)> {
        if self.vertices.is_empty() {
            return Err(Error::EmptyInput);
        }
        let mut lo = self.vertices[0];
        let mut hi = self.vertices[0];
        for v in &self.vertices[1..] {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        let center = (lo + hi) * 0.5;
        let radius = self
            .vertices
            .iter()
            .map(|v| (v - center).norm())
            .fold(0.0f64, f64::max);
        if radius < 1e-12 {
            return Err(Error::DegenerateGeometry("all vertices coincide".into()));
        }
        let transform = NormalizeTransform { center, scale: 1.0 / radius };
        Ok((self.transformed(&transform), transform))
    }

    /// Area-uniform random samples: faces are drawn proportionally to their
    /// area and points uniformly in barycentric coordinates.
    pub fn sample_surface(&self, count: usize, seed: u64) -> Result<PointCloud> {
        if count == 0 {
            return Ok(PointCloud::empty());
        }
        let mut cdf = Vec::with_capacity(self.faces.len());
        let mut total = 0.0;
        for f in 0..self.faces.len() {
            total += self.face_area(f);
            cdf.push(total);
        }
        if total.is_nan() || total <= DEGENERATE_AREA {
            return Err(Error::DegenerateGeometry("mesh has zero surface area".into()));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points = (0..count)
            .map(|_| {
                let target = rng.random::<f64>() * total;
                let face = cdf.partition_point(|&c| c <= target).min(cdf.len() - 1);
                let [a, b, c] = self.triangle(face);
                let r1: f64 = rng.random();
                let r2: f64 = rng.random();
                let s = r1.sqrt();
                a * (1.0 - s) + b * (s * (1.0 - r2)) + c * (s * r2)
            })
            .collect();
        Ok(PointCloud { points })
    }
}

/// Transform applied by [`TriangleMesh::normalize_unit_sphere`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizeTransform {
    pub center: Vec3,
    pub scale: f64,
}

impl NormalizeTransform {
    pub fn apply(&self, p: &Vec3) -> Vec3 {
        (p - self.center) * self.scale
    }

    pub fn invert(&self, p: &Vec3) -> Vec3 {
        p / self.scale + self.center
    }
}

/// Free-function form of [`TriangleMesh::face_plane`].
pub fn face_plane(mesh: &TriangleMesh, face: usize) -> Result<Plane> {
    mesh.face_plane(face)
}
