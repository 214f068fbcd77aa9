//! Greedy quadric-error edge-collapse simplification.
//!
//! Each vertex starts with the sum of its face quadrics plus, on open
//! boundaries, the quadric of the plane through the boundary edge that is
//! perpendicular to its face. The cheapest edge collapse is applied until
//! the target vertex count is reached or no admissible collapse remains.
//! Collapses that would pinch the surface (link condition) or rotate a
//! surviving face normal by more than 90° are rejected.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use nalgebra::SymmetricEigen;

use crate::error::{Error, Result};
use crate::mesh::{Plane, TriangleMesh, DEGENERATE_AREA};
use crate::quadric::{accumulate_vertex_quadrics, plane_quadric, QuadricMatrix};
use crate::Vec3;

/// Above this condition number the placement system is treated as singular.
pub const MAX_CONDITION: f64 = 1e8;
const BOUNDARY_WEIGHT: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollapseCandidate {
    pub edge: (usize, usize),
    pub cost: f64,
    pub optimal_position: Vec3,
}

#[derive(Debug, Clone)]
pub struct SimplifyResult {
    pub mesh: TriangleMesh,
    /// Cost of every applied collapse, in order.
    pub costs: Vec<f64>,
    pub total_cost: f64,
    /// False when the queue ran dry before the target was reached.
    pub reached_target: bool,
}

/// Minimiser of `sᵀQs`. Solves `A x = -b` when well conditioned, otherwise
/// picks the cheapest of `a`, `b` and their midpoint.
pub fn optimal_placement(q: &QuadricMatrix, fallback_a: &Vec3, fallback_b: &Vec3) -> (Vec3, f64) {
    let a = q.linear_block();
    let eig = SymmetricEigen::new(a);
    let max = eig.eigenvalues.iter().fold(0.0f64, |m, l| m.max(l.abs()));
    let min = eig.eigenvalues.iter().fold(f64::INFINITY, |m, l| m.min(l.abs()));
    if min > 0.0 && max / min <= MAX_CONDITION {
        if let Some(inv) = a.try_inverse() {
            let x = -(inv * q.linear_term());
            if x.iter().all(|c| c.is_finite()) {
                return (x, q.eval(&x));
            }
        }
    }
    let mid = (fallback_a + fallback_b) * 0.5;
    [*fallback_a, *fallback_b, mid]
        .into_iter()
        .map(|p| (p, q.eval(&p)))
        .fold((mid, f64::INFINITY), |best, c| if c.1 < best.1 { c } else { best })
}

#[derive(Debug)]
struct HeapEntry {
    cost: f64,
    a: usize,
    b: usize,
    stamp: (u32, u32),
    position: Vec3,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for HeapEntry {}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapEntry {
    // Reversed: the max-heap pops the cheapest collapse, lowest edge first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| (other.a, other.b).cmp(&(self.a, self.b)))
    }
}

struct Simplifier {
    positions: Vec<Vec3>,
    quadrics: Vec<QuadricMatrix>,
    faces: Vec<[usize; 3]>,
    face_alive: Vec<bool>,
    vertex_faces: Vec<Vec<usize>>,
    vertex_alive: Vec<bool>,
    version: Vec<u32>,
    heap: BinaryHeap<HeapEntry>,
}

impl Simplifier {
    fn new(mesh: &TriangleMesh) -> Self {
        let mut quadrics = accumulate_vertex_quadrics(mesh).quadrics;
        add_boundary_quadrics(mesh, &mut quadrics);
        let vertex_faces = mesh.vertex_faces();
        let vertex_alive = vertex_faces.iter().map(|f| !f.is_empty()).collect();
        Self {
            positions: mesh.vertices().to_vec(),
            quadrics,
            faces: mesh.faces().to_vec(),
            face_alive: vec![true; mesh.face_count()],
            vertex_alive,
            version: vec![0; mesh.vertex_count()],
            vertex_faces,
            heap: BinaryHeap::new(),
        }
    }

    fn alive_vertex_count(&self) -> usize {
        self.vertex_alive.iter().filter(|&&a| a).count()
    }

    fn candidate(&self, a: usize, b: usize) -> CollapseCandidate {
        let (a, b) = (a.min(b), a.max(b));
        let q = self.quadrics[a] + self.quadrics[b];
        let (optimal_position, cost) = optimal_placement(&q, &self.positions[a], &self.positions[b]);
        CollapseCandidate { edge: (a, b), cost, optimal_position }
    }

    fn push(&mut self, a: usize, b: usize) {
        let c = self.candidate(a, b);
        let (a, b) = c.edge;
        self.heap.push(HeapEntry {
            cost: c.cost,
            a,
            b,
            stamp: (self.version[a], self.version[b]),
            position: c.optimal_position,
        });
    }

    fn neighbors(&self, v: usize) -> Vec<usize> {
        let mut n: Vec<usize> = self.vertex_faces[v]
            .iter()
            .filter(|&&f| self.face_alive[f])
            .flat_map(|&f| self.faces[f])
            .filter(|&u| u != v)
            .collect();
        n.sort_unstable();
        n.dedup();
        n
    }

    fn admissible(&self, a: usize, b: usize, p: &Vec3) -> bool {
        let shared: Vec<usize> = self.vertex_faces[a]
            .iter()
            .copied()
            .filter(|&f| self.face_alive[f] && self.faces[f].contains(&b))
            .collect();
        if shared.is_empty() {
            return false;
        }
        let na = self.neighbors(a);
        let nb = self.neighbors(b);
        let common = na.iter().filter(|v| nb.binary_search(v).is_ok()).count();
        if common != shared.len() {
            return false;
        }

        for &v in &[a, b] {
            for &f in &self.vertex_faces[v] {
                if !self.face_alive[f] || shared.contains(&f) {
                    continue;
                }
                let tri = self.faces[f].map(|i| self.positions[i]);
                let moved = self.faces[f].map(|i| if i == a || i == b { *p } else { self.positions[i] });
                let before = (tri[1] - tri[0]).cross(&(tri[2] - tri[0]));
                let after = (moved[1] - moved[0]).cross(&(moved[2] - moved[0]));
                if 0.5 * after.norm() < DEGENERATE_AREA || before.dot(&after) <= 0.0 {
                    return false;
                }
            }
        }
        true
    }

    /// Merges `b` into `a` at `p`.
    fn collapse(&mut self, a: usize, b: usize, p: Vec3) {
        self.positions[a] = p;
        let qb = self.quadrics[b];
        self.quadrics[a] += qb;
        self.vertex_alive[b] = false;
        let b_faces = std::mem::take(&mut self.vertex_faces[b]);
        for f in b_faces {
            if !self.face_alive[f] {
                continue;
            }
            if self.faces[f].contains(&a) {
                self.face_alive[f] = false;
            } else {
                for i in self.faces[f].iter_mut() {
                    if *i == b {
                        *i = a;
                    }
                }
                self.vertex_faces[a].push(f);
            }
        }
        let alive = &self.face_alive;
        self.vertex_faces[a].retain(|&f| alive[f]);
        self.vertex_faces[a].sort_unstable();
        self.version[a] += 1;
        self.version[b] += 1;
        for n in self.neighbors(a) {
            self.push(a, n);
        }
    }

    fn finish(self) -> Result<TriangleMesh> {
        let mut remap = vec![usize::MAX; self.positions.len()];
        let mut vertices = Vec::new();
        let mut faces = Vec::new();
        for (f, face) in self.faces.iter().enumerate() {
            if !self.face_alive[f] {
                continue;
            }
            faces.push(face.map(|v| {
                if remap[v] == usize::MAX {
                    remap[v] = vertices.len();
                    vertices.push(self.positions[v]);
                }
                remap[v]
            }));
        }
        TriangleMesh::new(vertices, faces)
    }
}

fn add_boundary_quadrics(mesh: &TriangleMesh, quadrics: &mut [QuadricMatrix]) {
    let mut edge_faces: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for (f, face) in mesh.faces().iter().enumerate() {
        for k in 0..3 {
            let (u, v) = (face[k], face[(k + 1) % 3]);
            edge_faces.entry((u.min(v), u.max(v))).or_default().push(f);
        }
    }
    let mut boundary: Vec<((usize, usize), usize)> = edge_faces
        .into_iter()
        .filter(|(_, fs)| fs.len() == 1)
        .map(|(e, fs)| (e, fs[0]))
        .collect();
    boundary.sort_unstable();
    for ((u, v), f) in boundary {
        let Ok(face_plane) = mesh.face_plane(f) else { continue };
        let (pu, pv) = (mesh.vertices()[u], mesh.vertices()[v]);
        let Some(plane) = Plane::from_point_normal(&pu, &(pv - pu).cross(&face_plane.normal)) else {
            continue;
        };
        let q = plane_quadric(&plane) * BOUNDARY_WEIGHT;
        quadrics[u] += q;
        quadrics[v] += q;
    }
}

/// Collapses edges until at most `target_vertices` remain.
pub fn simplify_to(mesh: &TriangleMesh, target_vertices: usize) -> Result<SimplifyResult> {
    if target_vertices < 4 {
        return Err(Error::TargetTooSmall { target: target_vertices });
    }
    let mut s = Simplifier::new(mesh);
    if s.alive_vertex_count() <= target_vertices {
        return Ok(SimplifyResult { mesh: mesh.clone(), costs: Vec::new(), total_cost: 0.0, reached_target: true });
    }

    let mut edges: Vec<(usize, usize)> = mesh
        .faces()
        .iter()
        .flat_map(|f| (0..3).map(move |k| (f[k].min(f[(k + 1) % 3]), f[k].max(f[(k + 1) % 3]))))
        .collect();
    edges.sort_unstable();
    edges.dedup();
    for (a, b) in edges {
        s.push(a, b);
    }

    let mut alive = s.alive_vertex_count();
    let mut costs = Vec::new();
    while alive > target_vertices {
        let Some(entry) = s.heap.pop() else { break };
        let (a, b) = (entry.a, entry.b);
        if !s.vertex_alive[a] || !s.vertex_alive[b] || entry.stamp != (s.version[a], s.version[b]) {
            continue;
        }
        if !s.admissible(a, b, &entry.position) {
            continue;
        }
        s.collapse(a, b, entry.position);
        costs.push(entry.cost.max(0.0));
        alive -= 1;
    }

    let reached_target = alive <= target_vertices;
    if !reached_target {
        log::warn!("no admissible collapse left at {alive} vertices (target {target_vertices})");
    }
    let total_cost = costs.iter().sum();
    Ok(SimplifyResult { mesh: s.finish()?, costs, total_cost, reached_target })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::eval_metro;
    use crate::shapes;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn axis_plane(axis: usize, at: f64) -> Plane {
        let mut n = Vec3::zeros();
        n[axis] = 1.0;
        Plane { normal: n, offset: -at }
    }

    #[test]
    fn three_orthogonal_planes_meet_at_their_corner() {
        let c = Vec3::new(0.5, -2.0, 3.0);
        let q: QuadricMatrix = (0..3).map(|k| plane_quadric(&axis_plane(k, c[k]))).sum();
        let (p, cost) = optimal_placement(&q, &Vec3::zeros(), &Vec3::x());
        assert!((p - c).norm() < 1e-12);
        assert!(cost.abs() < 1e-12);
    }

    #[test]
    fn single_plane_falls_back_to_cheapest_candidate() {
        let q = plane_quadric(&axis_plane(2, 0.0));
        let a = Vec3::new(0.0, 0.0, 1.0);
        let b = Vec3::new(1.0, 0.0, -3.0);
        let (p, cost) = optimal_placement(&q, &a, &b);
        // Midpoint sits at z = -1, level with a.
        assert_eq!(p, a);
        assert_eq!(cost, 1.0);
    }

    #[test]
    fn full_rank_placement_matches_grid_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..5 {
            let q: QuadricMatrix = (0..4)
                .map(|_| {
                    let p = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                    let n = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                    plane_quadric(&Plane::from_point_normal(&p, &n).unwrap())
                })
                .sum();
            let (_, cost) = optimal_placement(&q, &Vec3::zeros(), &Vec3::x());
            // Zooming lattice search; the form is convex so it homes in on
            // the global minimum without using the linear solve.
            let (mut center, mut half, mut best) = (Vec3::zeros(), 4.0, f64::INFINITY);
            for _ in 0..14 {
                let n = 10;
                let mut arg = center;
                for i in -n..=n {
                    for j in -n..=n {
                        for k in -n..=n {
                            let x = center + Vec3::new(i as f64, j as f64, k as f64) * (half / n as f64);
                            let e = q.eval(&x);
                            if e < best {
                                best = e;
                                arg = x;
                            }
                        }
                    }
                }
                center = arg;
                half *= 0.3;
            }
            assert!(cost <= best + 1e-12, "{cost} vs {best}");
            assert!(best - cost < 1e-6, "{cost} vs {best}");
        }
    }

    #[test]
    fn target_below_four_is_rejected() {
        assert!(matches!(simplify_to(&shapes::cube(1), 3), Err(Error::TargetTooSmall { target: 3 })));
    }

    #[test]
    fn cube_at_its_own_size_is_unchanged() {
        let cube = shapes::cube(1);
        let r = simplify_to(&cube, 8).unwrap();
        assert_eq!(r.mesh, cube);
        assert!(r.costs.is_empty() && r.reached_target);
    }

    #[test]
    fn planar_grid_collapses_for_free() {
        let grid = shapes::grid(9, 9);
        let r = simplify_to(&grid, 4).unwrap();
        assert!(r.total_cost < 1e-9, "{}", r.total_cost);
        assert!(r.mesh.vertex_count() < grid.vertex_count());
        for v in r.mesh.vertices() {
            assert!(v.z.abs() < 1e-12);
        }
    }

    #[test]
    fn icosphere_stays_close_to_the_sphere() {
        let sphere = shapes::icosphere(3);
        let r = simplify_to(&sphere, 100).unwrap();
        assert!(r.reached_target);
        assert!(r.mesh.vertex_count() <= 100);
        let (max, _) = eval_metro(&r.mesh.vertex_cloud(), &sphere, 1000, 0).unwrap();
        assert!(max / 10.0 < 0.05, "{max}");
        assert!(r.costs.iter().all(|&c| c >= 0.0));
        for f in r.mesh.faces() {
            assert!(f[0] != f[1] && f[1] != f[2] && f[0] != f[2]);
        }
    }

    #[test]
    fn costs_are_nonnegative_and_total_is_monotone() {
        let mesh = shapes::cad_like(3).remove(3);
        let r = simplify_to(&mesh, 10).unwrap();
        let mut running = 0.0;
        for &c in &r.costs {
            assert!(c >= 0.0);
            let next = running + c;
            assert!(next >= running);
            running = next;
        }
    }
}
