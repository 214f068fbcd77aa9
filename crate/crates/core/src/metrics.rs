//! Reconstruction quality measures.
//!
//! Chamfer distance is reported ×10³ and Metro-style distances ×10, the
//! scales used in published comparison tables. When the reconstruction is a
//! bare point cloud the Metro value is the distance from those points to the
//! input surface (the "point-to-surface" variant); with two meshes, both
//! surfaces are sampled.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::chamfer_loss;
use crate::mesh::{PointCloud, TriangleMesh};
use crate::triangle::point_triangle_sqdist;
use crate::Vec3;

pub const DEFAULT_METRO_SAMPLES: usize = 100_000;
pub const CD_SCALE: f64 = 1e3;
pub const METRO_SCALE: f64 = 10.0;

/// Chamfer distance ×10³.
pub fn eval_cd(output: &PointCloud, input_vertices: &PointCloud) -> Result<f64> {
    Ok(chamfer_loss(output, input_vertices)?.scalar * CD_SCALE)
}

/// Bounding-volume hierarchy over the non-degenerate triangles of a mesh,
/// answering exact closest-triangle queries.
#[derive(Debug, Clone)]
pub struct TriangleIndex {
    triangles: Vec<[Vec3; 3]>,
    face_ids: Vec<usize>,
    nodes: Vec<BvhNode>,
}

#[derive(Debug, Clone)]
struct BvhNode {
    lo: Vec3,
    hi: Vec3,
    kind: BvhKind,
}

#[derive(Debug, Clone)]
enum BvhKind {
    Leaf { start: usize, end: usize },
    Inner { left: usize, right: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceHit {
    pub face: usize,
    pub sqdist: f64,
    pub closest: Vec3,
}

impl TriangleIndex {
    pub fn build(mesh: &TriangleMesh) -> Result<Self> {
        let mut items: Vec<(usize, [Vec3; 3])> = (0..mesh.face_count())
            .filter(|&f| !mesh.is_degenerate(f))
            .map(|f| (f, mesh.triangle(f)))
            .collect();
        if items.is_empty() {
            return Err(Error::DegenerateGeometry("mesh has no non-degenerate triangles".into()));
        }
        let mut nodes = Vec::new();
        build_bvh(&mut items, 0, &mut nodes);
        let (face_ids, triangles) = items.into_iter().unzip();
        Ok(Self { triangles, face_ids, nodes })
    }

    /// Closest point on the surface; ties go to the lowest face index.
    pub fn closest(&self, p: &Vec3) -> SurfaceHit {
        let mut best = SurfaceHit { face: usize::MAX, sqdist: f64::INFINITY, closest: *p };
        self.search(0, p, &mut best);
        best
    }

    fn search(&self, node: usize, p: &Vec3, best: &mut SurfaceHit) {
        match self.nodes[node].kind {
            BvhKind::Leaf { start, end } => {
                for i in start..end {
                    let Ok(hit) = point_triangle_sqdist(p, &self.triangles[i]) else { continue };
                    let face = self.face_ids[i];
                    if hit.sqdist < best.sqdist || (hit.sqdist == best.sqdist && face < best.face) {
                        *best = SurfaceHit { face, sqdist: hit.sqdist, closest: hit.closest };
                    }
                }
            }
            BvhKind::Inner { left, right } => {
                let dl = box_sqdist(&self.nodes[left], p);
                let dr = box_sqdist(&self.nodes[right], p);
                let order = if dl <= dr { [(left, dl), (right, dr)] } else { [(right, dr), (left, dl)] };
                for (child, d) in order {
                    if d <= best.sqdist {
                        self.search(child, p, best);
                    }
                }
            }
        }
    }
}

fn box_sqdist(node: &BvhNode, p: &Vec3) -> f64 {
    let mut d = 0.0;
    for k in 0..3 {
        let excess = (node.lo[k] - p[k]).max(0.0).max(p[k] - node.hi[k]);
        d += excess * excess;
    }
    d
}

fn build_bvh(items: &mut [(usize, [Vec3; 3])], offset: usize, nodes: &mut Vec<BvhNode>) -> usize {
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for (_, tri) in items.iter() {
        for v in tri {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
    }
    let id = nodes.len();
    nodes.push(BvhNode { lo, hi, kind: BvhKind::Leaf { start: offset, end: offset + items.len() } });
    if items.len() <= 4 {
        return id;
    }
    let centroid = |t: &[Vec3; 3]| (t[0] + t[1] + t[2]) / 3.0;
    let axis = (hi - lo).imax();
    let mid = items.len() / 2;
    items.select_nth_unstable_by(mid, |a, b| {
        centroid(&a.1)[axis].total_cmp(&centroid(&b.1)[axis]).then(a.0.cmp(&b.0))
    });
    let (left_items, right_items) = items.split_at_mut(mid);
    let left = build_bvh(left_items, offset, nodes);
    let right = build_bvh(right_items, offset + mid, nodes);
    nodes[id].kind = BvhKind::Inner { left, right };
    id
}

/// Unsigned distance from every point to the surface.
pub fn surface_distances(points: &[Vec3], index: &TriangleIndex) -> Vec<f64> {
    use rayon::prelude::*;
    points.par_iter().map(|p| index.closest(p).sqdist.sqrt()).collect()
}

fn max_and_median(mut d: Vec<f64>) -> (f64, f64) {
    d.sort_by(f64::total_cmp);
    let n = d.len();
    let median = if n % 2 == 1 { d[n / 2] } else { 0.5 * (d[n / 2 - 1] + d[n / 2]) };
    (d[n - 1], median)
}

/// At most `samples` points of the cloud; a seeded subset when larger.
fn subsample(cloud: &PointCloud, samples: usize, seed: u64) -> Vec<Vec3> {
    if cloud.len() <= samples {
        return cloud.points().to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, cloud.len(), samples).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| cloud[i]).collect()
}

/// Point-to-surface Metro variant: distances from (up to `samples` of) the
/// output points to the input mesh. Returns `(max, median)`, both ×10.
pub fn eval_metro(
    output_surface_samples: &PointCloud,
    input_mesh: &TriangleMesh,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if samples == 0 {
        return Err(Error::InvalidConfig("sample count must be positive".into()));
    }
    if output_surface_samples.is_empty() {
        return Err(Error::EmptyInput);
    }
    let index = TriangleIndex::build(input_mesh)?;
    let points = subsample(output_surface_samples, samples, seed);
    let (max, median) = max_and_median(surface_distances(&points, &index));
    Ok((max * METRO_SCALE, median * METRO_SCALE))
}

/// Mesh-to-mesh Metro: samples `output_mesh` and measures against
/// `input_mesh`; with `bidirectional`, also samples the input against the
/// output and pools both sets. Returns `(max, median)`, both ×10.
pub fn eval_metro_meshes(
    output_mesh: &TriangleMesh,
    input_mesh: &TriangleMesh,
    samples: usize,
    seed: u64,
    bidirectional: bool,
) -> Result<(f64, f64)> {
    if samples == 0 {
        return Err(Error::InvalidConfig("sample count must be positive".into()));
    }
    let to_input = TriangleIndex::build(input_mesh)?;
    let mut d = surface_distances(output_mesh.sample_surface(samples, seed)?.points(), &to_input);
    if bidirectional {
        let to_output = TriangleIndex::build(output_mesh)?;
        let back = input_mesh.sample_surface(samples, seed.wrapping_add(1))?;
        d.extend(surface_distances(back.points(), &to_output));
    }
    let (max, median) = max_and_median(d);
    Ok((max * METRO_SCALE, median * METRO_SCALE))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub cd_times_1e3: f64,
    pub metro_max_times_10: f64,
    pub metro_median_times_10: f64,
    pub sample_count: usize,
    pub seed: u64,
    pub metro_variant: String,
}

impl EvalReport {
    /// CD against the mesh vertices and the point-to-surface Metro variant.
    pub fn evaluate(output: &PointCloud, mesh: &TriangleMesh, samples: usize, seed: u64) -> Result<Self> {
        let cd = eval_cd(output, &mesh.vertex_cloud())?;
        let (max, median) = eval_metro(output, mesh, samples, seed)?;
        Ok(Self {
            cd_times_1e3: cd,
            metro_max_times_10: max,
            metro_median_times_10: median,
            sample_count: output.len().min(samples),
            seed,
            metro_variant: "point-to-surface".into(),
        })
    }

    /// Table row for this model alone.
    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        TableRow::aggregate(std::slice::from_ref(self)).expect("one report").write_csv(out)
    }
}

/// Median and maximum over models of the per-model CD and Metro scalars.
/// The per-model Metro scalar is the maximum distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub cd_median: f64,
    pub cd_max: f64,
    pub metro_median: f64,
    pub metro_max: f64,
}

impl TableRow {
    pub fn aggregate(reports: &[EvalReport]) -> Option<Self> {
        if reports.is_empty() {
            return None;
        }
        let (cd_max, cd_median) = max_and_median(reports.iter().map(|r| r.cd_times_1e3).collect());
        let (metro_max, metro_median) = max_and_median(reports.iter().map(|r| r.metro_max_times_10).collect());
        Some(Self { cd_median, cd_max, metro_median, metro_max })
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "cd_median,cd_max,metro_median,metro_max")?;
        writeln!(out, "{},{},{},{}", self.cd_median, self.cd_max, self.metro_median, self.metro_max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes;
    use rand::Rng;

    fn brute_distance(p: &Vec3, mesh: &TriangleMesh) -> f64 {
        (0..mesh.face_count())
            .filter_map(|f| point_triangle_sqdist(p, &mesh.triangle(f)).ok())
            .map(|h| h.sqdist)
            .fold(f64::INFINITY, f64::min)
            .sqrt()
    }

    #[test]
    fn cd_examples() {
        let a = PointCloud::new(vec![Vec3::zeros()]).unwrap();
        let b = PointCloud::new(vec![Vec3::new(0.1, 0.0, 0.0)]).unwrap();
        assert_eq!(eval_cd(&a, &a).unwrap(), 0.0);
        assert!((eval_cd(&a, &b).unwrap() - 20.0).abs() < 1e-12);
        assert!(eval_cd(&PointCloud::empty(), &a).is_err());
    }

    #[test]
    fn metro_on_own_samples_is_zero() {
        for mesh in [shapes::cube(2), shapes::icosphere(2), shapes::l_prism(), shapes::cylinder(16, 2)] {
            let s = mesh.sample_surface(2000, 3).unwrap();
            let (max, median) = eval_metro(&s, &mesh, 10_000, 0).unwrap();
            assert!(max < 1e-6 && median <= max);
        }
    }

    #[test]
    fn metro_of_lifted_plane() {
        let plane = shapes::grid(4, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts: Vec<Vec3> =
            (0..500).map(|_| Vec3::new(rng.random_range(0.0..4.0), rng.random_range(0.0..4.0), 0.2)).collect();
        let (max, median) = eval_metro(&PointCloud::new(pts).unwrap(), &plane, 1000, 0).unwrap();
        assert!((max - 2.0).abs() < 1e-12);
        assert!((median - 2.0).abs() < 1e-12);
    }

    #[test]
    fn index_matches_brute_force_near_cube() {
        let mesh = shapes::cube(3);
        let index = TriangleIndex::build(&mesh).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..500 {
            let p = Vec3::new(rng.random_range(-0.5..1.5), rng.random_range(-0.5..1.5), rng.random_range(-0.5..1.5));
            let got = index.closest(&p).sqdist.sqrt();
            assert!((got - brute_distance(&p, &mesh)).abs() < 1e-12);
        }
    }

    #[test]
    fn subsampling_is_seeded() {
        let mesh = shapes::icosphere(2);
        let far = PointCloud::new(mesh.vertices().iter().map(|v| v * 1.5).collect()).unwrap();
        let a = eval_metro(&far, &mesh, 20, 9).unwrap();
        let b = eval_metro(&far, &mesh, 20, 9).unwrap();
        assert_eq!(a, b);
        assert!(eval_metro(&far, &mesh, 0, 9).is_err());
    }

    #[test]
    fn mesh_to_mesh_metro() {
        let inner = shapes::cube(2);
        let grown = shapes::translated(&shapes::scaled(&shapes::cube(2), 1.2), Vec3::repeat(-0.1));
        let (max, median) = eval_metro_meshes(&grown, &inner, 5000, 0, true).unwrap();
        assert!(median <= max);
        // Face offsets are 0.1, corner offsets 0.1·√3.
        assert!(max >= 1.0 - 1e-9 && max <= 3f64.sqrt() + 1e-9, "{max}");
        assert!(median >= 1.0 - 1e-9);
        let (self_max, _) = eval_metro_meshes(&inner, &inner, 5000, 0, true).unwrap();
        assert!(self_max < 1e-6);
    }

    #[test]
    fn degenerate_mesh_is_rejected() {
        let mesh = TriangleMesh::new(vec![Vec3::zeros(), Vec3::x(), Vec3::x() * 2.0], vec![[0, 1, 2]]).unwrap();
        let p = PointCloud::new(vec![Vec3::zeros()]).unwrap();
        assert!(matches!(eval_metro(&p, &mesh, 10, 0), Err(Error::DegenerateGeometry(_))));
    }

    #[test]
    fn report_and_table_row() {
        let mesh = shapes::cube(2);
        let out = mesh.vertex_cloud();
        let r = EvalReport::evaluate(&out, &mesh, 100, 42).unwrap();
        assert_eq!(r.cd_times_1e3, 0.0);
        assert!(r.metro_max_times_10 < 1e-9);
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.starts_with("cd_median,cd_max,metro_median,metro_max"));

        let mut reports = vec![r.clone(), r.clone(), r];
        reports[0].cd_times_1e3 = 3.0;
        reports[1].cd_times_1e3 = 1.0;
        reports[1].metro_max_times_10 = 5.0;
        let row = TableRow::aggregate(&reports).unwrap();
        assert_eq!((row.cd_median, row.cd_max), (1.0, 3.0));
        assert_eq!(row.metro_max, 5.0);
    }
}
