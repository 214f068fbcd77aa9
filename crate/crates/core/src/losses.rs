//! Reconstruction losses with analytic per-point gradients.
//!
//! Every loss is normalised by the output point count and differentiated
//! with its correspondences held fixed; callers re-match between steps.
//! Scalars are in squared model units.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{PointCloud, TriangleMesh};
use crate::quadric::{accumulate_vertex_quadrics, QuadricMatrix, VertexQuadrics};
use crate::spatial::{correspondences, CorrespondenceMap};
use crate::triangle::point_triangle_sqdist;
use crate::Vec3;

/// Scalar loss and its gradient with respect to every output point.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub scalar: f64,
    pub gradients: Vec<Vec3>,
}

impl LossValue {
    fn zero(n: usize) -> Self {
        Self { scalar: 0.0, gradients: vec![Vec3::zeros(); n] }
    }

    /// Sums per-point `(value, gradient)` terms in order and scales by `1/n`.
    fn from_terms(terms: Vec<(f64, Vec3)>) -> Self {
        let inv_n = 1.0 / terms.len() as f64;
        let mut scalar = 0.0;
        let gradients = terms
            .into_iter()
            .map(|(v, g)| {
                scalar += v;
                g * inv_n
            })
            .collect();
        Self { scalar: scalar * inv_n, gradients }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub chamfer: f64,
    pub quadric: f64,
    pub normal: f64,
    pub surface: f64,
}

impl LossWeights {
    pub const fn new(chamfer: f64, quadric: f64, normal: f64, surface: f64) -> Self {
        Self { chamfer, quadric, normal, surface }
    }

    pub fn validate(&self) -> Result<()> {
        let w = [self.chamfer, self.quadric, self.normal, self.surface];
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::InvalidConfig(format!("loss weights must be finite and >= 0: {self:?}")));
        }
        if w.iter().all(|&x| x == 0.0) {
            return Err(Error::InvalidConfig("at least one loss weight must be positive".into()));
        }
        Ok(())
    }
}

/// How the per-edge inner product enters the normal loss.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormalPenalty {
    #[default]
    Squared,
    Absolute,
}

/// Mean quadric error `sᵀ Q_t s` of every output point `s` against the
/// quadric of its matched input vertex `t`.
pub fn quadric_loss(
    output: &PointCloud,
    vertex_quadrics: &[QuadricMatrix],
    corr: &CorrespondenceMap,
) -> Result<LossValue> {
    if corr.out_to_in.len() != output.len() {
        return Err(Error::SizeMismatch { expected: output.len(), actual: corr.out_to_in.len() });
    }
    if output.is_empty() {
        return Err(Error::EmptyInput);
    }
    if let Some(&bad) = corr.out_to_in.iter().find(|&&t| t >= vertex_quadrics.len()) {
        return Err(Error::SizeMismatch { expected: vertex_quadrics.len(), actual: bad + 1 });
    }
    let terms = output
        .points()
        .par_iter()
        .zip(&corr.out_to_in)
        .map(|(s, &t)| {
            let q = &vertex_quadrics[t];
            (q.eval(s), q.gradient(s))
        })
        .collect();
    Ok(LossValue::from_terms(terms))
}

/// Bidirectional mean squared nearest-neighbour distance.
pub fn chamfer_loss(output: &PointCloud, input_vertices: &PointCloud) -> Result<LossValue> {
    let corr = correspondences(output, input_vertices)?;
    chamfer_loss_with(output, input_vertices, &corr)
}

/// Chamfer loss against precomputed (frozen) correspondences.
pub fn chamfer_loss_with(
    output: &PointCloud,
    input_vertices: &PointCloud,
    corr: &CorrespondenceMap,
) -> Result<LossValue> {
    if output.is_empty() || input_vertices.is_empty() {
        return Err(Error::EmptyInput);
    }
    check_corr(corr, output.len(), input_vertices.len())?;
    let inv_out = 1.0 / output.len() as f64;
    let inv_in = 1.0 / input_vertices.len() as f64;
    let (s, t) = (output.points(), input_vertices.points());

    let mut forward = 0.0;
    let mut gradients: Vec<Vec3> = s
        .iter()
        .zip(&corr.out_to_in)
        .map(|(p, &j)| {
            let d = p - t[j];
            forward += d.norm_squared();
            d * (2.0 * inv_out)
        })
        .collect();
    let mut backward = 0.0;
    for (q, &i) in t.iter().zip(&corr.in_to_out) {
        let d = s[i] - q;
        backward += d.norm_squared();
        gradients[i] += d * (2.0 * inv_in);
    }
    Ok(LossValue { scalar: forward * inv_out + backward * inv_in, gradients })
}

/// Mean over output points of the averaged squared inner product between the
/// edges `s − x_i` (to the 1-ring of the matched vertex) and that vertex's
/// normal.
pub fn normal_loss(
    output: &PointCloud,
    input_vertices: &PointCloud,
    input_normals: &[Vec3],
    neighbor_lists: &[Vec<usize>],
    corr: &CorrespondenceMap,
) -> Result<LossValue> {
    normal_loss_with_penalty(output, input_vertices, input_normals, neighbor_lists, corr, NormalPenalty::Squared)
}

pub fn normal_loss_with_penalty(
    output: &PointCloud,
    input_vertices: &PointCloud,
    input_normals: &[Vec3],
    neighbor_lists: &[Vec<usize>],
    corr: &CorrespondenceMap,
    penalty: NormalPenalty,
) -> Result<LossValue> {
    if output.is_empty() || input_vertices.is_empty() {
        return Err(Error::EmptyInput);
    }
    if corr.out_to_in.len() != output.len() {
        return Err(Error::SizeMismatch { expected: output.len(), actual: corr.out_to_in.len() });
    }
    let nv = input_vertices.len();
    for len in [input_normals.len(), neighbor_lists.len()] {
        if len != nv {
            return Err(Error::SizeMismatch { expected: nv, actual: len });
        }
    }
    let x = input_vertices.points();
    let terms = output
        .points()
        .par_iter()
        .zip(&corr.out_to_in)
        .map(|(s, &t)| {
            let nbrs = neighbor_lists.get(t).ok_or(Error::SizeMismatch { expected: nv, actual: t + 1 })?;
            if nbrs.is_empty() {
                return Err(Error::EmptyNeighborhood { vertex: t });
            }
            let n = input_normals[t];
            let inv_k = 1.0 / nbrs.len() as f64;
            let (mut value, mut coeff) = (0.0, 0.0);
            for &i in nbrs {
                let dot = (s - x[i]).dot(&n);
                match penalty {
                    NormalPenalty::Squared => {
                        value += dot * dot;
                        coeff += 2.0 * dot;
                    }
                    NormalPenalty::Absolute => {
                        value += dot.abs();
                        coeff += if dot > 0.0 { 1.0 } else if dot < 0.0 { -1.0 } else { 0.0 };
                    }
                }
            }
            Ok((value * inv_k, n * (coeff * inv_k)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LossValue::from_terms(terms))
}

/// Mean squared distance from each output point to the closest triangle
/// among those incident on its matched input vertex.
pub fn surface_loss(
    output: &PointCloud,
    mesh: &TriangleMesh,
    vertex_faces: &[Vec<usize>],
    corr: &CorrespondenceMap,
) -> Result<LossValue> {
    if output.is_empty() {
        return Err(Error::EmptyInput);
    }
    if corr.out_to_in.len() != output.len() {
        return Err(Error::SizeMismatch { expected: output.len(), actual: corr.out_to_in.len() });
    }
    if vertex_faces.len() != mesh.vertex_count() {
        return Err(Error::SizeMismatch { expected: mesh.vertex_count(), actual: vertex_faces.len() });
    }
    let terms = output
        .points()
        .par_iter()
        .zip(&corr.out_to_in)
        .enumerate()
        .map(|(i, (s, &t))| {
            let candidates = vertex_faces
                .get(t)
                .ok_or(Error::SizeMismatch { expected: mesh.vertex_count(), actual: t + 1 })?;
            let best = candidates
                .iter()
                .filter_map(|&f| point_triangle_sqdist(s, &mesh.triangle(f)).ok())
                .min_by(|a, b| a.sqdist.total_cmp(&b.sqdist))
                .ok_or(Error::NoCandidateTriangles { point: i })?;
            Ok((best.sqdist, (s - best.closest) * 2.0))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LossValue::from_terms(terms))
}

/// Everything derived from a ground-truth mesh that the losses consume.
#[derive(Debug, Clone)]
pub struct TargetBundle {
    pub mesh: TriangleMesh,
    pub vertices: PointCloud,
    pub quadrics: VertexQuadrics,
    pub normals: Vec<Vec3>,
    pub neighbors: Vec<Vec<usize>>,
    pub vertex_faces: Vec<Vec<usize>>,
    pub normal_penalty: NormalPenalty,
}

impl TargetBundle {
    pub fn prepare(mesh: TriangleMesh) -> Result<Self> {
        if mesh.vertex_count() == 0 {
            return Err(Error::EmptyInput);
        }
        let mesh = mesh.with_plane_cache();
        let quadrics = accumulate_vertex_quadrics(&mesh);
        let normals = mesh.vertex_normals()?;
        Ok(Self {
            vertices: mesh.vertex_cloud(),
            neighbors: mesh.vertex_neighbors(),
            vertex_faces: mesh.vertex_faces(),
            quadrics,
            normals,
            mesh,
            normal_penalty: NormalPenalty::Squared,
        })
    }
}

/// Scalars of the four component losses.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ComponentValues {
    pub chamfer: f64,
    pub quadric: f64,
    pub normal: f64,
    pub surface: f64,
}

impl ComponentValues {
    pub fn iter(&self) -> impl Iterator<Item = (&'static str, f64)> {
        [
            ("chamfer", self.chamfer),
            ("quadric", self.quadric),
            ("normal", self.normal),
            ("surface", self.surface),
        ]
        .into_iter()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CombinedLoss {
    pub total: LossValue,
    /// Every component is evaluated, including those with zero weight, so
    /// traces can log them as diagnostics.
    pub components: ComponentValues,
}

/// JSON shape used for reporting: `{loss_name, scalar, components}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub loss_name: String,
    pub scalar: f64,
    pub components: BTreeMap<String, f64>,
}

impl CombinedLoss {
    pub fn report(&self, loss_name: &str) -> LossReport {
        LossReport {
            loss_name: loss_name.to_string(),
            scalar: self.total.scalar,
            components: self.components.iter().map(|(k, v)| (k.to_string(), v)).collect(),
        }
    }
}

/// Weighted sum of the four losses with freshly matched correspondences.
pub fn combined_loss(output: &PointCloud, target: &TargetBundle, weights: &LossWeights) -> Result<CombinedLoss> {
    let corr = correspondences(output, &target.vertices)?;
    combined_loss_with(output, target, weights, &corr)
}

/// Weighted sum of the four losses against frozen correspondences.
pub fn combined_loss_with(
    output: &PointCloud,
    target: &TargetBundle,
    weights: &LossWeights,
    corr: &CorrespondenceMap,
) -> Result<CombinedLoss> {
    weights.validate()?;
    let chamfer = chamfer_loss_with(output, &target.vertices, corr)?;
    let quadric = quadric_loss(output, &target.quadrics.quadrics, corr)?;
    let normal = normal_loss_with_penalty(
        output,
        &target.vertices,
        &target.normals,
        &target.neighbors,
        corr,
        target.normal_penalty,
    )?;
    let surface = surface_loss(output, &target.mesh, &target.vertex_faces, corr)?;
    let components = ComponentValues {
        chamfer: chamfer.scalar,
        quadric: quadric.scalar,
        normal: normal.scalar,
        surface: surface.scalar,
    };

    let mut total = LossValue::zero(output.len());
    for (w, part) in [
        (weights.chamfer, &chamfer),
        (weights.quadric, &quadric),
        (weights.normal, &normal),
        (weights.surface, &surface),
    ] {
        if w == 0.0 {
            continue;
        }
        total.scalar += w * part.scalar;
        for (acc, g) in total.gradients.iter_mut().zip(&part.gradients) {
            *acc += g * w;
        }
    }
    Ok(CombinedLoss { total, components })
}

fn check_corr(corr: &CorrespondenceMap, n_out: usize, n_in: usize) -> Result<()> {
    if corr.out_to_in.len() != n_out {
        return Err(Error::SizeMismatch { expected: n_out, actual: corr.out_to_in.len() });
    }
    if corr.in_to_out.len() != n_in {
        return Err(Error::SizeMismatch { expected: n_in, actual: corr.in_to_out.len() });
    }
    if corr.out_to_in.iter().any(|&j| j >= n_in) || corr.in_to_out.iter().any(|&i| i >= n_out) {
        return Err(Error::InvalidConfig("correspondence index out of bounds".into()));
    }
    Ok(())
}
