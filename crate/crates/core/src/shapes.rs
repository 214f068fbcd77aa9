//! Procedural test meshes: cubes, grids, spheres, prisms and cylinders, plus
//! a few rigid and random transforms for building CAD-like variants.

use std::collections::HashMap;

use nalgebra::{Rotation3, Unit};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::mesh::TriangleMesh;
use crate::Vec3;

/// Axis-aligned unit cube `[0,1]^3` with every face split into an `n × n`
/// grid of quads, two triangles each, wound counter-clockwise seen from
/// outside. Each quad is cut along the diagonal through its corner nearest
/// the origin, so the corners `(0,0,0)` and `(1,1,1)` carry two triangles per
/// adjacent face.
pub fn cube(n: usize) -> TriangleMesh {
    assert!(n >= 1, "cube needs at least one subdivision");
    let mut builder = LatticeBuilder::new(n);
    let e = [Vec3::x(), Vec3::y(), Vec3::z()];
    for axis in 0..3 {
        let u = e[(axis + 1) % 3];
        let v = e[(axis + 2) % 3];
        // Low face: normal -axis, so wind (v, u). High face: normal +axis.
        builder.add_face(Vec3::zeros(), v, u);
        builder.add_face(e[axis], u, v);
    }
    builder.finish()
}

/// Flat grid in the `z = 0` plane covering `[0,nx] × [0,ny]` with unit
/// spacing, normals along `+z`. Vertex `(i, j)` has index `j·(nx+1) + i`.
pub fn grid(nx: usize, ny: usize) -> TriangleMesh {
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push(Vec3::new(i as f64, j as f64, 0.0));
        }
    }
    let idx = |i: usize, j: usize| j * (nx + 1) + i;
    let mut faces = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    TriangleMesh::new(vertices, faces).expect("grid indices are valid")
}

/// Subdivided icosahedron on the unit sphere; level 3 has 642 vertices.
pub fn icosphere(level: usize) -> TriangleMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vec3> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..level {
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<Vec3>| {
            let key = (a.min(b), a.max(b));
            *midpoints.entry(key).or_insert_with(|| {
                vertices.push(((vertices[a] + vertices[b]) * 0.5).normalize());
                vertices.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    TriangleMesh::new(vertices, faces).expect("icosphere indices are valid")
}

/// Regular tetrahedron, outward winding.
pub fn tetrahedron() -> TriangleMesh {
    let vertices = vec![
        Vec3::new(1.0, 1.0, 1.0),
        Vec3::new(1.0, -1.0, -1.0),
        Vec3::new(-1.0, 1.0, -1.0),
        Vec3::new(-1.0, -1.0, 1.0),
    ];
    let faces = vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]];
    TriangleMesh::new(vertices, faces).expect("tetrahedron indices are valid")
}

/// Extrusion of an L-shaped polygon `[0,2]×[0,1] ∪ [0,1]×[0,2]` along `z`
/// from 0 to 1, with two layers so the vertical edges carry a mid-height
/// vertex.
pub fn l_prism() -> TriangleMesh {
    extruded(
        &[(0.0, 0.0), (2.0, 0.0), (2.0, 1.0), (1.0, 1.0), (1.0, 2.0), (0.0, 2.0)],
        1.0,
        2,
    )
}

/// Extrudes a counter-clockwise polygon that is star-shaped from its first
/// vertex. Caps are fan-triangulated from vertex 0.
pub fn extruded(outline: &[(f64, f64)], height: f64, layers: usize) -> TriangleMesh {
    let m = outline.len();
    assert!(m >= 3 && layers >= 1);
    let mut vertices = Vec::with_capacity(m * (layers + 1));
    for layer in 0..=layers {
        let z = height * layer as f64 / layers as f64;
        vertices.extend(outline.iter().map(|&(x, y)| Vec3::new(x, y, z)));
    }
    let at = |layer: usize, i: usize| layer * m + (i % m);
    let mut faces = Vec::new();
    for layer in 0..layers {
        for i in 0..m {
            let (a, b) = (at(layer, i), at(layer, i + 1));
            let (c, d) = (at(layer + 1, i + 1), at(layer + 1, i));
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    for i in 1..m - 1 {
        faces.push([at(0, 0), at(0, i + 1), at(0, i)]);
        faces.push([at(layers, 0), at(layers, i), at(layers, i + 1)]);
    }
    TriangleMesh::new(vertices, faces).expect("extrusion indices are valid")
}

/// Closed cylinder of radius 1 and height 1 along `z`, with `segments`
/// around the axis, `layers` along it, and a centre vertex on each cap.
pub fn cylinder(segments: usize, layers: usize) -> TriangleMesh {
    assert!(segments >= 3 && layers >= 1);
    let mut vertices = Vec::new();
    for layer in 0..=layers {
        let z = layer as f64 / layers as f64;
        for s in 0..segments {
            let theta = std::f64::consts::TAU * s as f64 / segments as f64;
            vertices.push(Vec3::new(theta.cos(), theta.sin(), z));
        }
    }
    let bottom = vertices.len();
    vertices.push(Vec3::zeros());
    let top = vertices.len();
    vertices.push(Vec3::new(0.0, 0.0, 1.0));
    let at = |layer: usize, s: usize| layer * segments + (s % segments);
    let mut faces = Vec::new();
    for layer in 0..layers {
        for s in 0..segments {
            let (a, b) = (at(layer, s), at(layer, s + 1));
            let (c, d) = (at(layer + 1, s + 1), at(layer + 1, s));
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    for s in 0..segments {
        faces.push([bottom, at(0, s + 1), at(0, s)]);
        faces.push([top, at(layers, s), at(layers, s + 1)]);
    }
    TriangleMesh::new(vertices, faces).expect("cylinder indices are valid")
}

/// Five CAD-like solids built from boxes, prisms and cylinders, each
/// stretched, rotated and with its vertices jittered by a seeded amount.
pub fn cad_like(seed: u64) -> Vec<TriangleMesh> {
    let bases = [
        scaled_xyz(&cube(3), Vec3::new(2.0, 1.0, 0.5)),
        extruded(&[(0.0, 0.0), (3.0, 0.0), (3.0, 0.5), (0.5, 0.5), (0.5, 2.0), (0.0, 2.0)], 0.7, 3),
        cylinder(24, 3),
        extruded(&[(0.0, 0.0), (2.0, 0.0), (2.5, 0.5), (2.5, 1.5), (2.0, 2.0), (0.0, 2.0)], 1.0, 2),
        scaled_xyz(&cube(2), Vec3::new(1.0, 3.0, 1.5)),
    ];
    bases
        .iter()
        .enumerate()
        .map(|(i, base)| {
            let s = seed.wrapping_mul(31).wrapping_add(i as u64);
            let mesh = perturbed(base, 0.01, s);
            rotated(&mesh, random_rotation(s))
        })
        .collect()
}

pub fn translated(mesh: &TriangleMesh, offset: Vec3) -> TriangleMesh {
    map_vertices(mesh, |v| v + offset)
}

pub fn scaled(mesh: &TriangleMesh, factor: f64) -> TriangleMesh {
    map_vertices(mesh, |v| v * factor)
}

pub fn scaled_xyz(mesh: &TriangleMesh, factors: Vec3) -> TriangleMesh {
    map_vertices(mesh, |v| v.component_mul(&factors))
}

pub fn rotated(mesh: &TriangleMesh, rotation: Rotation3<f64>) -> TriangleMesh {
    map_vertices(mesh, |v| rotation * v)
}

/// Gaussian vertex jitter with standard deviation `sigma` per coordinate.
pub fn perturbed(mesh: &TriangleMesh, sigma: f64, seed: u64) -> TriangleMesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).expect("sigma is finite and non-negative");
    map_vertices(mesh, |v| {
        v + Vec3::new(normal.sample(&mut rng), normal.sample(&mut rng), normal.sample(&mut rng))
    })
}

pub fn random_rotation(seed: u64) -> Rotation3<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let axis = loop {
        let a = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        if a.norm() > 0.1 {
            break a;
        }
    };
    Rotation3::from_axis_angle(&Unit::new_normalize(axis), rng.random_range(0.0..std::f64::consts::TAU))
}

/// Concatenates meshes into one, offsetting face indices.
pub fn merged(meshes: &[TriangleMesh]) -> TriangleMesh {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for mesh in meshes {
        let base = vertices.len();
        vertices.extend_from_slice(mesh.vertices());
        faces.extend(mesh.faces().iter().map(|f| f.map(|i| i + base)));
    }
    TriangleMesh::new(vertices, faces).expect("merged indices are valid")
}

fn map_vertices(mesh: &TriangleMesh, f: impl FnMut(&Vec3) -> Vec3) -> TriangleMesh {
    let vertices = mesh.vertices().iter().map(f).collect();
    TriangleMesh::new(vertices, mesh.faces().to_vec()).expect("topology is unchanged")
}

/// Builds axis-aligned faces of the unit cube on an integer lattice so that
/// shared edges reuse vertices.
struct LatticeBuilder {
    n: usize,
    index: HashMap<[usize; 3], usize>,
    vertices: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
}

impl LatticeBuilder {
    fn new(n: usize) -> Self {
        Self { n, index: HashMap::new(), vertices: Vec::new(), faces: Vec::new() }
    }

    fn vertex(&mut self, p: Vec3) -> usize {
        let n = self.n as f64;
        let key = [p.x, p.y, p.z].map(|c| (c * n).round() as usize);
        let vertices = &mut self.vertices;
        *self.index.entry(key).or_insert_with(|| {
            vertices.push(Vec3::new(key[0] as f64 / n, key[1] as f64 / n, key[2] as f64 / n));
            vertices.len() - 1
        })
    }

    /// Face spanned by `origin + s·u + t·v`, `s, t ∈ [0,1]`, normal `u × v`.
    fn add_face(&mut self, origin: Vec3, u: Vec3, v: Vec3) {
        let n = self.n;
        let step = 1.0 / n as f64;
        for j in 0..n {
            for i in 0..n {
                let p = |di: usize, dj: usize| {
                    origin + u * ((i + di) as f64 * step) + v * ((j + dj) as f64 * step)
                };
                let corners = [p(0, 0), p(1, 0), p(1, 1), p(0, 1)];
                let ids = corners.map(|c| self.vertex(c));
                // Cut along the diagonal through the corner with the smallest
                // coordinate sum.
                let lowest = (0..4)
                    .min_by(|&a, &b| corners[a].sum().partial_cmp(&corners[b].sum()).unwrap())
                    .unwrap();
                if lowest % 2 == 0 {
                    self.faces.push([ids[0], ids[1], ids[2]]);
                    self.faces.push([ids[0], ids[2], ids[3]]);
                } else {
                    self.faces.push([ids[1], ids[2], ids[3]]);
                    self.faces.push([ids[1], ids[3], ids[0]]);
                }
            }
        }
    }

    fn finish(self) -> TriangleMesh {
        TriangleMesh::new(self.vertices, self.faces).expect("lattice indices are valid")
    }
}
