//! Plane quadrics and their per-vertex accumulation.
//!
//! A plane `p = [a, b, c, d]` with unit normal yields `Q = p pᵀ`, and for a
//! homogeneous point `s = [x, y, z, 1]` the form `sᵀ Q s` is the squared
//! point-plane distance. Summing the quadrics of the triangles incident on a
//! vertex gives a form that vanishes at that vertex and grows anisotropically
//! away from it.

use std::collections::HashMap;
use std::hash::{Hash, Hasher};
use std::io::Write;
use std::ops::{Add, AddAssign, Mul};
use std::sync::Arc;

use nalgebra::{Matrix3, Matrix4};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::mesh::{Plane, TriangleMesh};
use crate::Vec3;

/// Symmetric 4×4 quadric stored as its upper triangle, row-major:
///
/// ```text
/// | q0 q1 q2 q3 |
/// |    q4 q5 q6 |
/// |       q7 q8 |
/// |          q9 |
/// ```
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct QuadricMatrix(pub [f64; 10]);

impl QuadricMatrix {
    pub const ZERO: QuadricMatrix = QuadricMatrix([0.0; 10]);

    pub fn from_coefficients(a: f64, b: f64, c: f64, d: f64) -> Self {
        QuadricMatrix([a * a, a * b, a * c, a * d, b * b, b * c, b * d, c * c, c * d, d * d])
    }

    pub fn from_plane(plane: &Plane) -> Self {
        let [a, b, c, d] = plane.coefficients();
        Self::from_coefficients(a, b, c, d)
    }

    /// `sᵀ Q s` for `s = [p, 1]`.
    pub fn eval(&self, p: &Vec3) -> f64 {
        let q = &self.0;
        let (x, y, z) = (p.x, p.y, p.z);
        x * (q[0] * x + 2.0 * (q[1] * y + q[2] * z + q[3]))
            + y * (q[4] * y + 2.0 * (q[5] * z + q[6]))
            + z * (q[7] * z + 2.0 * q[8])
            + q[9]
    }

    /// Gradient of [`eval`](Self::eval): `2 (A p + b)`.
    pub fn gradient(&self, p: &Vec3) -> Vec3 {
        2.0 * (self.linear_block() * p + self.linear_term())
    }

    /// Upper-left 3×3 block `A`.
    pub fn linear_block(&self) -> Matrix3<f64> {
        let q = &self.0;
        Matrix3::new(q[0], q[1], q[2], q[1], q[4], q[5], q[2], q[5], q[7])
    }

    /// Column `b` such that `sᵀQs = xᵀAx + 2bᵀx + c`.
    pub fn linear_term(&self) -> Vec3 {
        Vec3::new(self.0[3], self.0[6], self.0[8])
    }

    pub fn constant_term(&self) -> f64 {
        self.0[9]
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        let q = &self.0;
        Matrix4::new(
            q[0], q[1], q[2], q[3], //
            q[1], q[4], q[5], q[6], //
            q[2], q[5], q[7], q[8], //
            q[3], q[6], q[8], q[9],
        )
    }
}

impl Add for QuadricMatrix {
    type Output = QuadricMatrix;

    fn add(mut self, rhs: Self) -> Self {
        self += rhs;
        self
    }
}

impl AddAssign for QuadricMatrix {
    fn add_assign(&mut self, rhs: Self) {
        for (a, b) in self.0.iter_mut().zip(rhs.0) {
            *a += b;
        }
    }
}

impl Mul<f64> for QuadricMatrix {
    type Output = QuadricMatrix;

    fn mul(self, k: f64) -> Self {
        QuadricMatrix(self.0.map(|q| q * k))
    }
}

impl std::iter::Sum for QuadricMatrix {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::ZERO, Add::add)
    }
}

/// `p pᵀ`.
pub fn plane_quadric(plane: &Plane) -> QuadricMatrix {
    QuadricMatrix::from_plane(plane)
}

pub fn eval_quadric(q: &QuadricMatrix, p: &Vec3) -> f64 {
    q.eval(p)
}

pub fn eval_quadric_gradient(q: &QuadricMatrix, p: &Vec3) -> Vec3 {
    q.gradient(p)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum FaceWeighting {
    /// Every incident face contributes `p pᵀ` once.
    #[default]
    Uniform,
    /// Each face quadric is scaled by the face area.
    Area,
}

/// Per-vertex quadrics of a mesh, with the faces and vertices that had to
/// be skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexQuadrics {
    pub quadrics: Vec<QuadricMatrix>,
    /// Vertices with no usable incident face; they hold the zero quadric.
    pub isolated: Vec<usize>,
    pub degenerate_faces: Vec<usize>,
}

impl VertexQuadrics {
    pub fn len(&self) -> usize {
        self.quadrics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.quadrics.is_empty()
    }

    /// One row per vertex: `vertex,q0,...,q9`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "vertex,q00,q01,q02,q03,q11,q12,q13,q22,q23,q33")?;
        for (i, q) in self.quadrics.iter().enumerate() {
            write!(out, "{i}")?;
            for c in q.0 {
                write!(out, ",{c:e}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

impl std::ops::Index<usize> for VertexQuadrics {
    type Output = QuadricMatrix;

    fn index(&self, index: usize) -> &QuadricMatrix {
        &self.quadrics[index]
    }
}

/// Sums the plane quadrics of the faces incident on each vertex, skipping
/// degenerate faces.
pub fn accumulate_vertex_quadrics(mesh: &TriangleMesh) -> VertexQuadrics {
    accumulate_vertex_quadrics_weighted(mesh, FaceWeighting::Uniform)
}

pub fn accumulate_vertex_quadrics_weighted(
    mesh: &TriangleMesh,
    weighting: FaceWeighting,
) -> VertexQuadrics {
    let face_quadrics: Vec<Option<QuadricMatrix>> = (0..mesh.face_count())
        .into_par_iter()
        .map(|f| {
            mesh.face_plane(f).ok().map(|plane| {
                let q = plane_quadric(&plane);
                match weighting {
                    FaceWeighting::Uniform => q,
                    FaceWeighting::Area => q * mesh.face_area(f),
                }
            })
        })
        .collect();
    let degenerate_faces: Vec<usize> = face_quadrics
        .iter()
        .enumerate()
        .filter_map(|(f, q)| q.is_none().then_some(f))
        .collect();
    if !degenerate_faces.is_empty() {
        log::warn!("skipping {} degenerate face(s) in quadric accumulation", degenerate_faces.len());
    }

    let incident = mesh.vertex_faces();
    let sums: Vec<(QuadricMatrix, usize)> = incident
        .par_iter()
        .map(|faces| {
            faces.iter().fold((QuadricMatrix::ZERO, 0), |(acc, n), &f| match face_quadrics[f] {
                Some(q) => (acc + q, n + 1),
                None => (acc, n),
            })
        })
        .collect();
    let isolated: Vec<usize> = sums
        .iter()
        .enumerate()
        .filter_map(|(v, &(_, n))| (n == 0).then_some(v))
        .collect();
    if !isolated.is_empty() {
        log::warn!("{} vertex(es) have no usable incident face; using zero quadrics", isolated.len());
    }
    VertexQuadrics { quadrics: sums.into_iter().map(|(q, _)| q).collect(), isolated, degenerate_faces }
}

/// Vertex quadrics keyed by mesh content, so repeated fits against the same
/// target share one accumulation.
#[derive(Debug, Default)]
pub struct QuadricCache {
    entries: HashMap<u64, Arc<VertexQuadrics>>,
}

impl QuadricCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get_or_compute(&mut self, mesh: &TriangleMesh) -> Arc<VertexQuadrics> {
        let key = mesh_fingerprint(mesh);
        self.entries
            .entry(key)
            .or_insert_with(|| Arc::new(accumulate_vertex_quadrics(mesh)))
            .clone()
    }

    /// Drops any cached entry and accumulates again.
    pub fn recompute(&mut self, mesh: &TriangleMesh) -> Arc<VertexQuadrics> {
        let fresh = Arc::new(accumulate_vertex_quadrics(mesh));
        self.entries.insert(mesh_fingerprint(mesh), fresh.clone());
        fresh
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn mesh_fingerprint(mesh: &TriangleMesh) -> u64 {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    mesh.vertex_count().hash(&mut h);
    for v in mesh.vertices() {
        for c in v.iter() {
            c.to_bits().hash(&mut h);
        }
    }
    mesh.faces().hash(&mut h);
    h.finish()
}

/// Reads back the CSV written by [`VertexQuadrics::write_csv`].
pub fn read_quadrics_csv(text: &str) -> Result<Vec<QuadricMatrix>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 11 {
            return Err(crate::Error::Parse {
                line: lineno + 1,
                message: format!("expected 11 fields, found {}", fields.len()),
            });
        }
        let mut q = [0.0; 10];
        for (slot, field) in q.iter_mut().zip(&fields[1..]) {
            *slot = field.trim().parse().map_err(|e| crate::Error::Parse {
                line: lineno + 1,
                message: format!("bad coefficient {field:?}: {e}"),
            })?;
        }
        out.push(QuadricMatrix(q));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn plane(a: f64, b: f64, c: f64, d: f64) -> Plane {
        Plane { normal: Vec3::new(a, b, c), offset: d }
    }

    fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
        loop {
            let v = Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let n = v.norm();
            if n > 0.1 && n <= 1.0 {
                return v / n;
            }
        }
    }

    #[test]
    fn single_plane_examples() {
        let q = plane_quadric(&plane(0.0, 0.0, 1.0, 0.0));
        let mut expected = [0.0; 10];
        expected[7] = 1.0;
        assert_eq!(q.0, expected);
        assert_eq!(q.eval(&Vec3::new(5.0, 5.0, 2.0)), 4.0);
        assert_eq!(q.gradient(&Vec3::new(5.0, 5.0, 2.0)), Vec3::new(0.0, 0.0, 4.0));
        assert_eq!(q.eval(&Vec3::new(-3.0, 8.0, 0.0)), 0.0);

        let q = plane_quadric(&plane(1.0, 0.0, 0.0, -1.0));
        assert_eq!(q.eval(&Vec3::new(3.0, 7.0, 9.0)), 4.0);
        assert_eq!(QuadricMatrix::ZERO.eval(&Vec3::new(1.0, 2.0, 3.0)), 0.0);
    }

    #[test]
    fn plane_quadric_is_rank_one_outer_product() {
        let p = Plane::from_point_normal(&Vec3::new(0.3, -1.0, 2.0), &Vec3::new(1.0, 2.0, -0.5)).unwrap();
        let v = nalgebra::Vector4::from(p.coefficients());
        let outer = v * v.transpose();
        assert!((plane_quadric(&p).to_matrix() - outer).abs().max() < 1e-15);
        assert_eq!(plane_quadric(&p).to_matrix().rank(1e-10), 1);
    }

    #[test]
    fn planes_through_a_common_point_vanish_there() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = Vec3::new(0.4, -0.7, 1.3);
        let q: QuadricMatrix = (0..7)
            .map(|_| plane_quadric(&Plane::from_point_normal(&c, &random_unit(&mut rng)).unwrap()))
            .sum();
        assert!(q.eval(&c).abs() < 1e-9);
        assert!(q.gradient(&c).norm() < 1e-9);
    }

    #[test]
    fn cube_corner_quadric() {
        let cube = shapes::cube(1);
        let vq = accumulate_vertex_quadrics(&cube);
        let origin = cube.vertices().iter().position(|v| v.norm() == 0.0).unwrap();
        let d = Vec3::new(0.1, -0.3, 0.7);
        assert!((vq[origin].eval(&d) - 2.0 * d.norm_squared()).abs() < 1e-12);
    }

    #[test]
    fn grid_interior_vertex_multiplicity() {
        let grid = shapes::grid(2, 2);
        let vq = accumulate_vertex_quadrics(&grid);
        let q = vq[4];
        assert!((q.eval(&Vec3::new(0.3, 2.0, 0.5)) - 6.0 * 0.25).abs() < 1e-12);
        let single = plane_quadric(&plane(0.0, 0.0, 1.0, 0.0)) * 6.0;
        assert_eq!(q, single);
    }

    #[test]
    fn every_vertex_vanishes_on_itself() {
        let mut meshes = vec![
            shapes::cube(3),
            shapes::icosphere(3),
            shapes::l_prism(),
            shapes::cylinder(32, 4),
            shapes::grid(6, 4),
        ];
        meshes.extend(shapes::cad_like(11));
        for mesh in &meshes {
            let vq = accumulate_vertex_quadrics(mesh);
            assert!(vq.isolated.is_empty());
            for (v, q) in mesh.vertices().iter().zip(&vq.quadrics) {
                assert!(q.eval(v).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn flat_region_axes() {
        let grid = shapes::grid(4, 4);
        let vq = accumulate_vertex_quadrics(&grid);
        let incident = grid.vertex_faces();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for (v, t) in grid.vertices().iter().enumerate() {
            let k = incident[v].len() as f64;
            for _ in 0..5 {
                let alpha = rng.random_range(-2.0..2.0);
                let theta: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                let u = Vec3::new(theta.cos(), theta.sin(), 0.0);
                assert!(vq[v].eval(&(t + u * alpha)).abs() < 1e-12);
                let along_normal = vq[v].eval(&(t + Vec3::z() * alpha));
                assert!((along_normal - k * alpha * alpha).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn sharp_edge_axes() {
        let prism = shapes::l_prism();
        let vq = accumulate_vertex_quadrics(&prism);
        // Mid-height vertex on the convex vertical edge at (2, 0).
        let v = prism
            .vertices()
            .iter()
            .position(|p| *p == Vec3::new(2.0, 0.0, 0.5))
            .unwrap();
        let t = prism.vertices()[v];
        let q = vq[v];
        for alpha in [-0.4, 0.1, 0.3] {
            assert!(q.eval(&(t + Vec3::z() * alpha)).abs() < 1e-12);
        }
        for dir in [Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0), Vec3::new(1.0, -1.0, 0.3)] {
            assert!(q.eval(&(t + dir * 0.05)) > 1e-4);
        }
    }

    #[test]
    fn area_weighting_scales_face_terms() {
        let grid = shapes::scaled(&shapes::grid(2, 2), 2.0);
        let plain = accumulate_vertex_quadrics(&grid);
        let weighted = accumulate_vertex_quadrics_weighted(&grid, FaceWeighting::Area);
        // Every triangle has area 2.
        for (a, b) in plain.quadrics.iter().zip(&weighted.quadrics) {
            assert_eq!(*a * 2.0, *b);
        }
    }

    #[test]
    fn degenerate_faces_and_isolated_vertices_are_reported() {
        let mesh = TriangleMesh::new(
            vec![
                Vec3::new(0.0, 0.0, 0.0),
                Vec3::new(1.0, 0.0, 0.0),
                Vec3::new(0.0, 1.0, 0.0),
                Vec3::new(2.0, 0.0, 0.0),
                Vec3::new(5.0, 5.0, 5.0),
            ],
            vec![[0, 1, 2], [0, 1, 3]],
        )
        .unwrap();
        let vq = accumulate_vertex_quadrics(&mesh);
        assert_eq!(vq.degenerate_faces, vec![1]);
        assert_eq!(vq.isolated, vec![3, 4]);
        assert_eq!(vq[3], QuadricMatrix::ZERO);
    }

    #[test]
    fn cache_reuses_by_content() {
        let mut cache = QuadricCache::new();
        let a = cache.get_or_compute(&shapes::cube(2));
        let b = cache.get_or_compute(&shapes::cube(2));
        assert!(Arc::ptr_eq(&a, &b));
        let c = cache.recompute(&shapes::cube(2));
        assert!(!Arc::ptr_eq(&a, &c));
        assert_eq!(*a, *c);
        cache.get_or_compute(&shapes::cube(3));
        assert_eq!(cache.len(), 2);
    }

    #[test]
    fn csv_round_trip() {
        let vq = accumulate_vertex_quadrics(&shapes::icosphere(1));
        let mut buf = Vec::new();
        vq.write_csv(&mut buf).unwrap();
        let back = read_quadrics_csv(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back, vq.quadrics);
    }

    #[test]
    fn psd_on_random_points() {
        let mesh = shapes::cad_like(5).remove(1);
        let vq = accumulate_vertex_quadrics(&mesh);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let p = Vec3::new(
                rng.random_range(-3.0..3.0),
                rng.random_range(-3.0..3.0),
                rng.random_range(-3.0..3.0),
            );
            for q in &vq.quadrics {
                assert!(q.eval(&p) >= -1e-9);
            }
        }
    }

    fn arb_vec() -> impl Strategy<Value = Vec3> {
        (-2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64).prop_map(|(x, y, z)| Vec3::new(x, y, z))
    }

    fn arb_quadric() -> impl Strategy<Value = QuadricMatrix> {
        prop::collection::vec((arb_vec(), arb_vec()), 1..5).prop_filter_map("degenerate normal", |planes| {
            planes
                .iter()
                .map(|(p, n)| Plane::from_point_normal(p, n).map(|pl| plane_quadric(&pl)))
                .sum::<Option<QuadricMatrix>>()
        })
    }

    proptest! {
        #[test]
        fn additivity(q1 in arb_quadric(), q2 in arb_quadric(), s in arb_vec()) {
            let lhs = (q1 + q2).eval(&s);
            let rhs = q1.eval(&s) + q2.eval(&s);
            prop_assert!((lhs - rhs).abs() < 1e-12 * (1.0 + lhs.abs()));
        }

        #[test]
        fn gradient_matches_central_differences(q in arb_quadric(), s in arb_vec()) {
            let h = 1e-5;
            let g = q.gradient(&s);
            let mut fd = Vec3::zeros();
            for k in 0..3 {
                let mut e = Vec3::zeros();
                e[k] = h;
                fd[k] = (q.eval(&(s + e)) - q.eval(&(s - e))) / (2.0 * h);
            }
            let scale = g.norm().max(fd.norm()).max(1e-3);
            prop_assert!((g - fd).norm() / scale < 1e-5);
        }

        #[test]
        fn directional_derivative_vanishes_at_line_minimum(q in arb_quadric(), s in arb_vec(), d in arb_vec()) {
            prop_assume!(d.norm() > 0.1);
            let dir = d.normalize();
            // Along s + t·dir the form is a·t² + b·t + c.
            let a = dir.dot(&(q.linear_block() * dir));
            prop_assume!(a > 1e-6);
            let b = q.gradient(&s).dot(&dir);
            let t = -b / (2.0 * a);
            let m = s + dir * t;
            prop_assert!(q.gradient(&m).dot(&dir).abs() < 1e-8 * (1.0 + q.gradient(&m).norm()));
        }

        #[test]
        fn nonnegative(q in arb_quadric(), s in arb_vec()) {
            prop_assert!(q.eval(&s) >= -1e-9);
        }
    }
}
